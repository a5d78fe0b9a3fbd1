#include "lumap/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "lumap/error.hpp"

namespace lumap {

namespace {

std::size_t nearest_rank(double pct, std::size_t n) {
    auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return rank - 1;
}

bool is_nodata(const RasterGrid& g, double v) { return g.nodata && v == *g.nodata; }

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::LU3 ? "lu3" : "lu6"; }

Mode parse_mode(std::string_view name) {
    if (name == "lu3" || name == "LU3") return Mode::LU3;
    if (name == "lu6" || name == "LU6") return Mode::LU6;
    throw_config("unknown mode '" + std::string(name) + "' (expected lu3 or lu6)");
}

const std::vector<std::string>& channel_names(Mode mode) {
    static const std::vector<std::string> lu3{"B", "G", "R"};
    static const std::vector<std::string> lu6{"B", "G", "R", "NIR", "NDVI", "NDWI"};
    return mode == Mode::LU3 ? lu3 : lu6;
}

std::size_t channel_count(Mode mode) { return channel_names(mode).size(); }

const std::vector<std::string>& raw_band_names() {
    static const std::vector<std::string> names{"B", "G", "R", "NIR"};
    return names;
}

Plane normalized_difference(const Plane& a, const Plane& b, double eps) {
    if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size())
        throw_validation("normalized_difference: plane shapes differ");
    if (!(eps > 0.0)) throw_validation("normalized_difference: eps must be positive");
    Plane out{a.width, a.height, std::vector<float>(a.values.size(), 0.0f)};
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double x = a.values[i];
        const double y = b.values[i];
        const double den = x + y;
        out.values[i] = std::abs(den) > eps ? static_cast<float>((x - y) / den) : 0.0f;
    }
    return out;
}

void NormStats::validate() const {
    if (bands.empty()) throw_validation("norm stats are empty");
    for (const auto& b : bands)
        if (!(b.high > b.low)) throw_validation("norm stats need high > low for every band");
}

nlohmann::ordered_json NormStats::to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& b : bands) arr.push_back({{"low", b.low}, {"high", b.high}});
    return arr;
}

NormStats NormStats::from_json(const nlohmann::ordered_json& j) {
    NormStats s;
    try {
        for (const auto& e : j) s.bands.push_back({e.at("low").get<double>(), e.at("high").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw_config(std::string("malformed norm stats: ") + e.what());
    }
    s.validate();
    return s;
}

NormStats compute_norm_stats(const RasterGrid& grid, double low_pct, double high_pct) {
    const RasterGrid* one[] = {&grid};
    return compute_norm_stats(one, low_pct, high_pct);
}

NormStats compute_norm_stats(std::span<const RasterGrid* const> grids, double low_pct, double high_pct) {
    if (grids.empty()) throw_validation("compute_norm_stats: no grids");
    if (!(low_pct >= 0 && low_pct < high_pct && high_pct <= 100))
        throw_validation("compute_norm_stats: need 0 <= low_pct < high_pct <= 100");
    const std::size_t bands = grids.front()->bands();
    for (const auto* g : grids)
        if (g->bands() != bands) throw_validation("compute_norm_stats: band counts differ");
    NormStats stats;
    std::vector<double> samples;
    for (std::size_t b = 0; b < bands; ++b) {
        samples.clear();
        for (const auto* g : grids) {
            for (std::uint64_t y = 0; y < g->height; ++y)
                for (std::uint64_t x = 0; x < g->width; ++x) {
                    const double v = g->value(b, x, y);
                    if (!is_nodata(*g, v) && !std::isnan(v)) samples.push_back(v);
                }
        }
        if (samples.empty()) throw_validation("band " + std::to_string(b) + " has no valid samples");
        const std::size_t lo = nearest_rank(low_pct, samples.size());
        const std::size_t hi = nearest_rank(high_pct, samples.size());
        std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(lo), samples.end());
        const double low = samples[lo];
        std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(hi), samples.end());
        double high = samples[hi];
        if (!(high > low)) high = low + 1.0;
        stats.bands.push_back({low, high});
    }
    return stats;
}

ChannelStack build_channel_stack(const RasterGrid& grid, Mode mode, const NormStats& stats) {
    if (grid.band_names != raw_band_names())
        throw_validation("channel stack needs 4 bands named B,G,R,NIR");
    stats.validate();
    if (stats.bands.size() != 4) throw_validation("norm stats must cover the 4 raw bands");

    ChannelStack s;
    s.width = grid.width;
    s.height = grid.height;
    s.names = channel_names(mode);
    const std::size_t n = s.pixels();
    const std::size_t raw_channels = mode == Mode::LU3 ? 3 : 4;
    s.data.assign(s.channels() * n, 0.0f);

    std::vector<std::uint8_t> valid(n, 1);
    bool any_invalid = false;
    if (grid.nodata) {
        for (std::size_t b = 0; b < 4; ++b)
            for (std::uint64_t y = 0; y < grid.height; ++y)
                for (std::uint64_t x = 0; x < grid.width; ++x)
                    if (grid.value(b, x, y) == *grid.nodata) {
                        valid[y * grid.width + x] = 0;
                        any_invalid = true;
                    }
    }

    auto raw_plane = [&](std::size_t b) {
        Plane p{grid.width, grid.height, std::vector<float>(n)};
        for (std::uint64_t y = 0; y < grid.height; ++y)
            for (std::uint64_t x = 0; x < grid.width; ++x)
                p.values[y * grid.width + x] = static_cast<float>(grid.value(b, x, y));
        return p;
    };

    std::vector<Plane> raw;
    for (std::size_t b = 0; b < 4; ++b) raw.push_back(raw_plane(b));

    for (std::size_t c = 0; c < raw_channels; ++c) {
        const BandRange r = stats.bands[c];
        const double scale = 1.0 / (r.high - r.low);
        s.norm.push_back({r.low, scale});
        auto dst = s.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            dst[i] = static_cast<float>(std::clamp((raw[c].values[i] - r.low) * scale, 0.0, 1.0));
        }
    }
    if (mode == Mode::LU6) {
        const Plane ndvi = normalized_difference(raw[3], raw[2]);
        const Plane ndwi = normalized_difference(raw[1], raw[3]);
        s.norm.push_back({0.0, 1.0});
        s.norm.push_back({0.0, 1.0});
        auto dvi = s.channel(4);
        auto dwi = s.channel(5);
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            dvi[i] = ndvi.values[i];
            dwi[i] = ndwi.values[i];
        }
    }
    if (any_invalid) s.valid = std::move(valid);
    return s;
}

bool is_prebuilt_stack(const RasterHeader& header, Mode mode) {
    return header.band_names == channel_names(mode);
}

ChannelStack stack_passthrough(const RasterGrid& grid, Mode mode) {
    if (!is_prebuilt_stack(grid, mode)) throw_validation("grid bands are not a prebuilt channel stack");
    ChannelStack s;
    s.width = grid.width;
    s.height = grid.height;
    s.names = grid.band_names;
    s.norm.assign(s.names.size(), ChannelNorm{});
    const std::size_t n = s.pixels();
    if (grid.dtype == DType::F32) {
        const auto src = grid.samples_as<float>();
        s.data.assign(src.begin(), src.end());
    } else {
        s.data.resize(grid.samples());
        for (std::size_t b = 0; b < grid.bands(); ++b)
            for (std::size_t i = 0; i < n; ++i)
                s.data[b * n + i] = static_cast<float>(grid.value(b, i % grid.width, i / grid.width));
    }
    if (grid.nodata) {
        std::vector<std::uint8_t> valid(n, 1);
        bool any = false;
        const auto nd = static_cast<float>(*grid.nodata);
        for (std::size_t b = 0; b < grid.bands(); ++b)
            for (std::size_t i = 0; i < n; ++i)
                if (s.data[b * n + i] == nd) {
                    valid[i] = 0;
                    any = true;
                }
        if (any) {
            for (std::size_t b = 0; b < grid.bands(); ++b)
                for (std::size_t i = 0; i < n; ++i)
                    if (!valid[i]) s.data[b * n + i] = 0.0f;
            s.valid = std::move(valid);
        }
    }
    return s;
}

}  // namespace lumap

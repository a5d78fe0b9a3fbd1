#include "lumap/tiling.hpp"

#include <algorithm>
#include <cstring>

#include "lumap/error.hpp"

namespace lumap {

namespace {

void check_index(const TilePlan& plan, std::size_t k) {
    if (k >= plan.count())
        throw_validation("tile index " + std::to_string(k) + " out of range (" + std::to_string(plan.count()) +
                         " tiles)");
}

void check_plan_matches(const TilePlan& plan, std::uint64_t w, std::uint64_t h) {
    if (plan.width != w || plan.height != h)
        throw_validation("tile plan is for " + std::to_string(plan.width) + "x" + std::to_string(plan.height) +
                         " but source is " + std::to_string(w) + "x" + std::to_string(h));
}

struct AxisMaps {
    std::vector<std::int64_t> xs;
    std::vector<std::int64_t> ys;
};

AxisMaps tile_axes(const TilePlan& plan, std::size_t k) {
    check_index(plan, k);
    const Window w = plan.tile_window(k);
    return {axis_indices(w.x0, w.w, static_cast<std::int64_t>(plan.width), plan.spec.pad_mode),
            axis_indices(w.y0, w.h, static_cast<std::int64_t>(plan.height), plan.spec.pad_mode)};
}

/// Gathers one plane: dst[y][x] = src[ys[y]][xs[x]], 0 where an index is -1.
/// `src_x0`/`src_y0` shift indices when the source is a sub-window.
template <class T>
void gather(const T* src, std::int64_t src_w, std::int64_t src_x0, std::int64_t src_y0, const AxisMaps& m, T* dst) {
    const std::size_t tw = m.xs.size();
    const bool contiguous = m.xs.front() >= 0 && m.xs.back() - m.xs.front() + 1 == static_cast<std::int64_t>(tw) &&
                            std::is_sorted(m.xs.begin(), m.xs.end());
    for (std::size_t y = 0; y < m.ys.size(); ++y) {
        T* row = dst + y * tw;
        if (m.ys[y] < 0) {
            std::fill_n(row, tw, T{});
            continue;
        }
        const T* srow = src + (m.ys[y] - src_y0) * src_w;
        if (contiguous) {
            std::memcpy(row, srow + (m.xs.front() - src_x0), tw * sizeof(T));
            continue;
        }
        for (std::size_t x = 0; x < tw; ++x) row[x] = m.xs[x] < 0 ? T{} : srow[m.xs[x] - src_x0];
    }
}

std::int64_t min_index(const std::vector<std::int64_t>& v) {
    std::int64_t m = -1;
    for (auto i : v)
        if (i >= 0 && (m < 0 || i < m)) m = i;
    return m;
}

}  // namespace

std::string_view to_string(PadMode mode) {
    switch (mode) {
        case PadMode::Mirror: return "mirror";
        case PadMode::Zero: return "zero";
        case PadMode::Replicate: return "replicate";
    }
    return "?";
}

PadMode parse_pad_mode(std::string_view name) {
    if (name == "mirror") return PadMode::Mirror;
    if (name == "zero") return PadMode::Zero;
    if (name == "replicate") return PadMode::Replicate;
    throw_config("unknown pad mode '" + std::string(name) + "'");
}

TileSpec TileSpec::make(std::int64_t tile, std::int64_t stride, PadMode mode) {
    TileSpec s{tile, stride, (tile - stride) / 2, mode};
    s.validate();
    return s;
}

void TileSpec::validate() const {
    if (tile <= 0 || stride <= 0) throw_validation("tile and stride must be positive");
    if (stride > tile) throw_validation("stride must not exceed tile size");
    if ((tile - stride) % 2 != 0) throw_validation("tile - stride must be even");
    if (pad != (tile - stride) / 2) throw_validation("pad must equal (tile - stride) / 2");
}

nlohmann::ordered_json TileSpec::to_json() const {
    return {{"tile", tile}, {"stride", stride}, {"pad", pad}, {"pad_mode", std::string(to_string(pad_mode))}};
}

TileIndex TilePlan::index(std::size_t k) const { return {k / tiles_x, k % tiles_x}; }

Window TilePlan::tile_window(std::size_t k) const {
    const TileIndex t = index(k);
    return {static_cast<std::int64_t>(t.col) * spec.stride - spec.pad,
            static_cast<std::int64_t>(t.row) * spec.stride - spec.pad, spec.tile, spec.tile};
}

nlohmann::ordered_json TilePlan::to_json() const {
    nlohmann::ordered_json j;
    j["spec"] = spec.to_json();
    j["width"] = width;
    j["height"] = height;
    j["tiles_x"] = tiles_x;
    j["tiles_y"] = tiles_y;
    j["padded_w"] = padded_w;
    j["padded_h"] = padded_h;
    auto tiles = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < count(); ++k) {
        const Window t = tile_window(k);
        const Window c = center_window(*this, k);
        const TileIndex ij = index(k);
        tiles.push_back({{"k", k},
                         {"i", ij.row},
                         {"j", ij.col},
                         {"source", {t.x0, t.y0, t.w, t.h}},
                         {"center", {c.x0, c.y0, c.w, c.h}}});
    }
    j["tiles"] = std::move(tiles);
    return j;
}

TilePlan plan_tiles(std::uint64_t width, std::uint64_t height, const TileSpec& spec) {
    spec.validate();
    if (width == 0 || height == 0) throw_validation("plan_tiles: extent must be at least 1x1");
    TilePlan p;
    p.spec = spec;
    p.width = width;
    p.height = height;
    const auto s = static_cast<std::uint64_t>(spec.stride);
    const auto extra = static_cast<std::uint64_t>(spec.tile - spec.stride);
    p.tiles_x = (width + s - 1) / s;
    p.tiles_y = (height + s - 1) / s;
    p.padded_w = p.tiles_x * s + extra;
    p.padded_h = p.tiles_y * s + extra;
    return p;
}

Window center_window(const TilePlan& plan, std::size_t k) {
    check_index(plan, k);
    const TileIndex t = plan.index(k);
    const std::int64_t s = plan.spec.stride;
    const std::int64_t x0 = static_cast<std::int64_t>(t.col) * s;
    const std::int64_t y0 = static_cast<std::int64_t>(t.row) * s;
    const std::int64_t x1 = std::min<std::int64_t>(x0 + s, static_cast<std::int64_t>(plan.width));
    const std::int64_t y1 = std::min<std::int64_t>(y0 + s, static_cast<std::int64_t>(plan.height));
    return {x0, y0, x1 - x0, y1 - y0};
}

std::int64_t source_index(std::int64_t i, std::int64_t n, PadMode mode) {
    if (i >= 0 && i < n) return i;
    switch (mode) {
        case PadMode::Zero: return -1;
        case PadMode::Replicate: return std::clamp<std::int64_t>(i, 0, n - 1);
        case PadMode::Mirror: {
            const std::int64_t r = i < 0 ? -i - 1 : 2 * n - 1 - i;
            return std::clamp<std::int64_t>(r, 0, n - 1);
        }
    }
    return -1;
}

std::vector<std::int64_t> axis_indices(std::int64_t start, std::int64_t len, std::int64_t n, PadMode mode) {
    std::vector<std::int64_t> v(static_cast<std::size_t>(len));
    for (std::int64_t i = 0; i < len; ++i) v[static_cast<std::size_t>(i)] = source_index(start + i, n, mode);
    return v;
}

ChannelStack extract_tile(const ChannelStack& source, const TilePlan& plan, std::size_t k) {
    check_plan_matches(plan, source.width, source.height);
    const AxisMaps m = tile_axes(plan, k);
    ChannelStack out;
    out.width = out.height = static_cast<std::uint64_t>(plan.spec.tile);
    out.names = source.names;
    out.norm = source.norm;
    out.data.resize(out.channels() * out.pixels());
    const auto sw = static_cast<std::int64_t>(source.width);
    for (std::size_t c = 0; c < source.channels(); ++c)
        gather(source.channel(c).data(), sw, 0, 0, m, out.channel(c).data());
    if (!source.valid.empty()) {
        out.valid.resize(out.pixels());
        gather(source.valid.data(), sw, 0, 0, m, out.valid.data());
    }
    return out;
}

ClassMap extract_tile(const ClassMap& source, const TilePlan& plan, std::size_t k) {
    check_plan_matches(plan, source.width, source.height);
    const AxisMaps m = tile_axes(plan, k);
    const Window w = plan.tile_window(k);
    ClassMap out = ClassMap::filled(static_cast<std::uint64_t>(w.w), static_cast<std::uint64_t>(w.h), 0);
    out.geotransform = translate(source.geotransform, w.x0, w.y0);
    gather(source.labels.data(), static_cast<std::int64_t>(source.width), 0, 0, m, out.labels.data());
    return out;
}

RasterGrid extract_tile(const RasterGrid& source, const TilePlan& plan, std::size_t k) {
    check_plan_matches(plan, source.width, source.height);
    const AxisMaps m = tile_axes(plan, k);
    const Window w = plan.tile_window(k);
    RasterHeader h = source;
    h.width = static_cast<std::uint64_t>(w.w);
    h.height = static_cast<std::uint64_t>(w.h);
    h.geotransform = translate(source.geotransform, w.x0, w.y0);
    RasterGrid out = RasterGrid::zeros(h);
    const auto sw = static_cast<std::int64_t>(source.width);
    for (std::size_t b = 0; b < source.bands(); ++b) {
        std::visit([&](const auto& src) {
            using T = typename std::decay_t<decltype(src)>::value_type;
            gather(src.data() + b * source.width * source.height, sw, 0, 0, m, out.band<T>(b).data());
        }, source.data);
    }
    return out;
}

RasterGrid extract_tile(const RasterReader& source, const TilePlan& plan, std::size_t k) {
    const RasterHeader& sh = source.header();
    check_plan_matches(plan, sh.width, sh.height);
    const AxisMaps m = tile_axes(plan, k);
    const Window w = plan.tile_window(k);

    // Bounding box of every source sample the tile touches.
    const std::int64_t bx0 = min_index(m.xs);
    const std::int64_t by0 = min_index(m.ys);
    const std::int64_t bx1 = *std::max_element(m.xs.begin(), m.xs.end()) + 1;
    const std::int64_t by1 = *std::max_element(m.ys.begin(), m.ys.end()) + 1;

    RasterHeader h = sh;
    h.width = static_cast<std::uint64_t>(w.w);
    h.height = static_cast<std::uint64_t>(w.h);
    h.geotransform = translate(sh.geotransform, w.x0, w.y0);
    RasterGrid out = RasterGrid::zeros(h);
    if (bx0 < 0 || by0 < 0) return out;  // zero mode, tile entirely outside

    const RasterGrid block = source.read_window({bx0, by0, bx1 - bx0, by1 - by0});
    for (std::size_t b = 0; b < sh.bands(); ++b) {
        std::visit([&](const auto& src) {
            using T = typename std::decay_t<decltype(src)>::value_type;
            gather(src.data() + b * block.width * block.height, static_cast<std::int64_t>(block.width), bx0, by0, m,
                   out.band<T>(b).data());
        }, block.data);
    }
    return out;
}

}  // namespace lumap

#include "lumap/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lumap/error.hpp"

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

/// Logits for one pixel into `z`; returns the max.
double logits(std::span<const double> w, std::size_t k, std::size_t f, const float* x, double* z) {
    double zmax = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
        const double* row = w.data() + c * f;
        double s = 0.0;
        for (std::size_t i = 0; i < f; ++i) s += row[i] * x[i];
        z[c] = s;
        zmax = std::max(zmax, s);
    }
    return zmax;
}

class LinearBackend final : public Backend {
public:
    explicit LinearBackend(LinearModel m) : model_(std::move(m)) {}
    std::size_t num_classes() const override { return model_.classes; }
    std::size_t channels() const override { return model_.channels; }
    ClassMap predict(const ChannelStack& tile, const TileContext&) override { return predict_linear(model_, tile); }

private:
    LinearModel model_;
};

}  // namespace

void LinearModel::validate() const {
    if (classes < 2 || classes > 255) throw_validation("model class count must be in [2, 255]");
    if (channels == 0) throw_validation("model needs at least one channel");
    if (channels != channel_count(mode)) throw_validation("model channel count does not match its mode");
    if (weights.size() != classes * features()) throw_validation("model weight count does not match K x F");
    for (float w : weights)
        if (!std::isfinite(w)) throw_validation("model weights must be finite");
}

void LinearModel::save(const std::filesystem::path& path) const {
    validate();
    ojson h;
    h["K"] = classes;
    h["C"] = channels;
    h["feature_version"] = kFeatureVersion;
    h["features"] = "raw+box3x3+bias";
    h["mode"] = std::string(to_string(mode));
    h["norm_stats"] = norm.to_json();
    const std::string text = h.dump();
    const auto hlen = static_cast<std::uint32_t>(text.size());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot write model " + path.string());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(weights.data()), static_cast<std::streamsize>(weights.size() * 4));
    if (!out) throw_io("write failed on " + path.string());
}

LinearModel LinearModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open model " + path.string());
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    if (!in || hlen > (1u << 24)) throw_io("malformed model file " + path.string());
    std::string text(hlen, '\0');
    in.read(text.data(), hlen);
    if (!in) throw_io("truncated model header in " + path.string());
    LinearModel m;
    try {
        const auto h = ojson::parse(text);
        if (h.at("feature_version").get<int>() != kFeatureVersion)
            throw_config("model " + path.string() + " has unsupported feature version");
        m.classes = h.at("K").get<std::size_t>();
        m.channels = h.at("C").get<std::size_t>();
        m.mode = parse_mode(h.at("mode").get<std::string>());
        m.norm = NormStats::from_json(h.at("norm_stats"));
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed model header in " + path.string() + ": " + e.what());
    }
    m.weights.resize(m.classes * m.features());
    in.read(reinterpret_cast<char*>(m.weights.data()), static_cast<std::streamsize>(m.weights.size() * 4));
    if (!in) throw_io("truncated model weights in " + path.string());
    in.peek();
    if (!in.eof()) throw_io("trailing bytes in model file " + path.string());
    m.validate();
    return m;
}

std::vector<float> pixel_features(const ChannelStack& tile) {
    const std::size_t c_n = tile.channels();
    const std::size_t f = feature_count(c_n);
    const auto w = static_cast<std::int64_t>(tile.width);
    const auto h = static_cast<std::int64_t>(tile.height);
    std::vector<float> out(tile.pixels() * f, 0.0f);
    std::vector<double> col(static_cast<std::size_t>(w * h));  // vertical 3-sums
    for (std::size_t c = 0; c < c_n; ++c) {
        const auto plane = tile.channel(c);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                double s = plane[static_cast<std::size_t>(y * w + x)];
                if (y > 0) s += plane[static_cast<std::size_t>((y - 1) * w + x)];
                if (y + 1 < h) s += plane[static_cast<std::size_t>((y + 1) * w + x)];
                col[static_cast<std::size_t>(y * w + x)] = s;
            }
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const auto i = static_cast<std::size_t>(y * w + x);
                double s = col[i];
                if (x > 0) s += col[i - 1];
                if (x + 1 < w) s += col[i + 1];
                out[i * f + c] = plane[i];
                out[i * f + c_n + c] = static_cast<float>(s / 9.0);
            }
    }
    for (std::size_t i = 0; i < tile.pixels(); ++i) out[i * f + f - 1] = 1.0f;
    return out;
}

double cross_entropy(std::span<const double> weights, std::size_t classes, std::span<const float> features,
                     std::span<const std::uint8_t> labels, std::span<double> grad, std::size_t* counted) {
    const std::size_t n = labels.size();
    if (n == 0 || features.size() % n != 0) throw_validation("cross_entropy: feature/label size mismatch");
    const std::size_t f = features.size() / n;
    if (weights.size() != classes * f) throw_validation("cross_entropy: weight size mismatch");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != weights.size()) throw_validation("cross_entropy: gradient size mismatch");
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

    std::vector<double> z(classes);
    double loss = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t y = labels[i];
        if (y == kIgnore) continue;
        if (y >= classes) throw_validation("cross_entropy: label outside class range");
        const float* x = features.data() + i * f;
        const double zmax = logits(weights, classes, f, x, z.data());
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            z[c] = std::exp(z[c] - zmax);
            sum += z[c];
        }
        loss += std::log(sum) - std::log(z[y]);
        ++m;
        if (!want_grad) continue;
        for (std::size_t c = 0; c < classes; ++c) {
            const double d = z[c] / sum - (c == y ? 1.0 : 0.0);
            double* g = grad.data() + c * f;
            for (std::size_t j = 0; j < f; ++j) g[j] += d * x[j];
        }
    }
    if (counted) *counted = m;
    if (m == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(m);
    if (want_grad)
        for (double& g : grad) g *= inv;
    return loss * inv;
}

std::vector<double> softmax_probabilities(std::span<const double> weights, std::size_t classes,
                                          std::span<const float> features) {
    const std::size_t f = weights.size() / classes;
    const std::size_t n = features.size() / f;
    std::vector<double> p(n * classes);
    for (std::size_t i = 0; i < n; ++i) {
        double* z = p.data() + i * classes;
        const double zmax = logits(weights, classes, f, features.data() + i * f, z);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            z[c] = std::exp(z[c] - zmax);
            sum += z[c];
        }
        for (std::size_t c = 0; c < classes; ++c) z[c] /= sum;
    }
    return p;
}

ClassMap predict_linear(const LinearModel& model, const ChannelStack& tile) {
    if (tile.channels() != model.channels)
        throw_validation("model expects " + std::to_string(model.channels) + " channels, got " +
                         std::to_string(tile.channels()));
    const std::vector<float> feats = pixel_features(tile);
    const std::size_t f = model.features();
    const std::size_t k = model.classes;
    ClassMap out = ClassMap::filled(tile.width, tile.height, 0);
    for (std::size_t i = 0; i < tile.pixels(); ++i) {
        if (!tile.is_valid(i)) {
            out.labels[i] = kIgnore;
            continue;
        }
        const float* x = feats.data() + i * f;
        float best = -1e30f;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const float* row = model.weights.data() + c * f;
            float s = 0.0f;
            for (std::size_t j = 0; j < f; ++j) s += row[j] * x[j];
            if (s > best) {
                best = s;
                arg = c;
            }
        }
        out.labels[i] = static_cast<std::uint8_t>(arg);
    }
    return out;
}

std::shared_ptr<Backend> make_linear_backend(LinearModel model) {
    model.validate();
    return std::make_shared<LinearBackend>(std::move(model));
}

}  // namespace lumap

#include "lumap/backend.hpp"

#include <cmath>

#include "lumap/class_scheme.hpp"
#include "lumap/error.hpp"
#include "lumap/rng.hpp"

namespace lumap {

namespace {

class OracleBackend final : public Backend {
public:
    OracleBackend(std::shared_ptr<const ClassMap> truth, std::size_t k) : truth_(std::move(truth)), k_(k) {}

    std::size_t num_classes() const override { return k_; }
    std::size_t channels() const override { return 0; }

    ClassMap predict(const ChannelStack&, const TileContext& ctx) override {
        if (ctx.plan == nullptr) throw_backend("oracle backend needs the tile plan");
        return extract_tile(*truth_, *ctx.plan, ctx.tile_id);
    }

private:
    std::shared_ptr<const ClassMap> truth_;
    std::size_t k_;
};

class EdgeDegradedBackend final : public Backend {
public:
    EdgeDegradedBackend(std::shared_ptr<Backend> inner, std::int64_t band, double p, std::uint64_t seed)
        : inner_(std::move(inner)), band_(band), p_(p), seed_(seed) {}

    std::size_t num_classes() const override { return inner_->num_classes(); }
    std::size_t channels() const override { return inner_->channels(); }
    bool thread_safe() const override { return inner_->thread_safe(); }

    ClassMap predict(const ChannelStack& tile, const TileContext& ctx) override {
        ClassMap out = inner_->predict(tile, ctx);
        const auto w = static_cast<std::int64_t>(out.width);
        const auto h = static_cast<std::int64_t>(out.height);
        if (2 * band_ > std::min(w, h))
            throw_backend("edge band " + std::to_string(band_) + " exceeds half the tile size");
        if (band_ == 0 || p_ == 0.0) return out;
        const std::uint64_t k = inner_->num_classes();
        for (std::int64_t y = 0; y < h; ++y) {
            const bool row_in_band = y < band_ || y >= h - band_;
            for (std::int64_t x = 0; x < w; ++x) {
                if (!row_in_band && x >= band_ && x < w - band_) continue;
                std::uint8_t& v = out.at(static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y));
                if (v == kIgnore) continue;
                const std::uint64_t key = hash_key({seed_, ctx.tile_id, static_cast<std::uint64_t>(x),
                                                    static_cast<std::uint64_t>(y)});
                if (unit_interval(key) >= p_) continue;
                v = static_cast<std::uint8_t>(splitmix64(key) % k);
            }
        }
        return out;
    }

private:
    std::shared_ptr<Backend> inner_;
    std::int64_t band_;
    double p_;
    std::uint64_t seed_;
};

}  // namespace

BackendFactory shared_factory(std::shared_ptr<Backend> backend) {
    return [backend] { return backend; };
}

ClassMap predict_tile(Backend& backend, const ChannelStack& tile, const TileContext& ctx) {
    if (backend.channels() != 0 && backend.channels() != tile.channels())
        throw_validation("backend expects " + std::to_string(backend.channels()) + " channels, tile has " +
                         std::to_string(tile.channels()));
    ClassMap out = backend.predict(tile, ctx);
    if (out.width != tile.width || out.height != tile.height || out.labels.size() != tile.pixels())
        throw_backend("backend returned a " + std::to_string(out.width) + "x" + std::to_string(out.height) +
                      " label tile for a " + std::to_string(tile.width) + "x" + std::to_string(tile.height) +
                      " input (tile " + std::to_string(ctx.tile_id) + ")");
    try {
        check_labels(out, backend.num_classes());
    } catch (const Error& e) {
        throw_backend("tile " + std::to_string(ctx.tile_id) + ": " + e.what());
    }
    return out;
}

std::shared_ptr<Backend> make_oracle_backend(std::shared_ptr<const ClassMap> truth, std::size_t num_classes) {
    if (!truth) throw_validation("oracle backend needs a truth map");
    if (num_classes < 2 || num_classes > 255) throw_validation("oracle backend: K must be in [2, 255]");
    check_labels(*truth, num_classes);
    return std::make_shared<OracleBackend>(std::move(truth), num_classes);
}

std::shared_ptr<Backend> make_edge_degraded(std::shared_ptr<Backend> inner, std::int64_t band, double flip_prob,
                                            std::uint64_t seed) {
    if (!inner) throw_validation("edge degrader needs an inner backend");
    if (band < 0) throw_validation("edge band must be non-negative");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw_validation("flip probability must be in [0, 1]");
    return std::make_shared<EdgeDegradedBackend>(std::move(inner), band, flip_prob, seed);
}

}  // namespace lumap

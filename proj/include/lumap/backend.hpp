#pragma once

// Classifier backend contract and the built-in test backends.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lumap/raster.hpp"
#include "lumap/spectral.hpp"
#include "lumap/tiling.hpp"

namespace lumap {

/// Where a tile came from. tile_id is the plan index k.
struct TileContext {
    std::size_t tile_id = 0;
    const TilePlan* plan = nullptr;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual std::size_t num_classes() const = 0;
    /// Expected input channel count; 0 accepts any.
    virtual std::size_t channels() const = 0;
    /// T x T labels for a T x T tile. Built-in backends are safe to call
    /// concurrently; see thread_safe().
    virtual ClassMap predict(const ChannelStack& tile, const TileContext& ctx) = 0;
    /// False for backends that own a serial channel (external processes);
    /// the pipeline then gives every worker its own instance.
    virtual bool thread_safe() const { return true; }
};

using BackendFactory = std::function<std::shared_ptr<Backend>()>;

/// Factory that hands the same instance to every caller.
BackendFactory shared_factory(std::shared_ptr<Backend> backend);

/// Checks the channel count, runs the backend, and validates the result
/// (shape and label range).
ClassMap predict_tile(Backend& backend, const ChannelStack& tile, const TileContext& ctx);

/// Returns the ground-truth labels of the tile's window, padded the same way
/// the imagery is. Needs ctx.plan.
std::shared_ptr<Backend> make_oracle_backend(std::shared_ptr<const ClassMap> truth, std::size_t num_classes);

/// Within `band` pixels of any tile edge, resamples each predicted label
/// uniformly over the K classes with probability flip_prob. Draws are keyed
/// by (seed, tile_id, x, y), never by thread or call order.
std::shared_ptr<Backend> make_edge_degraded(std::shared_ptr<Backend> inner, std::int64_t band, double flip_prob,
                                            std::uint64_t seed);

}  // namespace lumap

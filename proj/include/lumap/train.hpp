#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "lumap/linear_model.hpp"
#include "lumap/synth.hpp"
#include "lumap/tiling.hpp"

namespace lumap {

/// Adam hyper-parameters. The defaults are the deep-network values
/// (lr 1e-5, weight decay 5e-4, momentum 0.99 read as beta1, batch 12);
/// desk() swaps in a learning rate suited to the linear model.
struct TrainConfig {
    double learning_rate = 1e-5;
    double weight_decay = 5e-4;
    double beta1 = 0.99;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 12;
    std::size_t epochs = 8;
    std::uint64_t seed = 0;
    bool augment = true;
    /// Geometry used to slice training scenes into tiles.
    TileSpec tiles = TileSpec::make(128, 64);
    /// Tiles whose labelled fraction is below this are skipped.
    double min_labeled_fraction = 0.0;

    static TrainConfig desk();
    void validate() const;
    nlohmann::ordered_json to_json() const;
};

/// Provenance of one training tile.
struct TileTag {
    std::size_t scene = 0;
    std::size_t tile = 0;
};

struct TrainLog {
    std::vector<double> epoch_loss;
    double initial_loss = 0.0;
    std::size_t steps = 0;
    std::size_t tiles_per_epoch = 0;
    std::vector<std::size_t> scenes;  // training scenes used
};

struct TrainResult {
    LinearModel model;
    TrainLog log;
};

/// Called with the provenance of every minibatch before its step.
using BatchObserver = std::function<void(std::span<const TileTag>)>;

/// Adam on mean pixel cross-entropy (kIgnore masked), minibatches of tiles
/// drawn from training-split scenes only. Deterministic in config.seed.
TrainResult train_linear(const CorpusManifest& manifest, Mode mode, const TrainConfig& config,
                         const BatchObserver& observer = {});

}  // namespace lumap

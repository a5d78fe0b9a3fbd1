#include "lumap/train.hpp"

#include <algorithm>
#include <cmath>

#include "lumap/augment.hpp"
#include "lumap/error.hpp"
#include "lumap/rng.hpp"

namespace lumap {

namespace {

struct TrainingScene {
    std::size_t index = 0;
    ChannelStack stack;
    ClassMap labels;
    TilePlan plan;
};

}  // namespace

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.learning_rate = 1e-2;
    return c;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw_config("learning_rate must be positive");
    if (!(weight_decay >= 0)) throw_config("weight_decay must be non-negative");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) throw_config("betas must be in (0, 1)");
    if (!(epsilon > 0)) throw_config("epsilon must be positive");
    if (batch_size == 0) throw_config("batch_size must be positive");
    if (epochs == 0) throw_config("epochs must be positive");
    if (!(min_labeled_fraction >= 0 && min_labeled_fraction <= 1)) throw_config("min_labeled_fraction must be in [0, 1]");
    tiles.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["epsilon"] = epsilon;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["augment"] = augment;
    j["tile"] = tiles.tile;
    j["stride"] = tiles.stride;
    j["min_labeled_fraction"] = min_labeled_fraction;
    return j;
}

TrainResult train_linear(const CorpusManifest& manifest, Mode mode, const TrainConfig& config,
                         const BatchObserver& observer) {
    config.validate();
    const std::vector<std::size_t> train_ids = manifest.split_indices("train");
    if (train_ids.empty()) throw_validation("corpus has no training scenes");
    const std::size_t k = manifest.class_scheme.size();

    std::vector<TrainingScene> scenes;
    for (std::size_t id : train_ids) {
        TrainingScene s;
        s.index = id;
        s.stack = build_channel_stack(read_raster(manifest.image_path(id)), mode, manifest.norm_stats);
        s.labels = read_class_map(manifest.labels_path(id));
        if (s.labels.width != s.stack.width || s.labels.height != s.stack.height)
            throw_validation("scene " + std::to_string(id) + ": image and labels differ in size");
        check_labels(s.labels, k);
        s.plan = plan_tiles(s.stack.width, s.stack.height, config.tiles);
        scenes.push_back(std::move(s));
    }

    std::vector<TileTag> pool;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
        const auto& s = scenes[si];
        for (std::size_t t = 0; t < s.plan.count(); ++t) {
            if (config.min_labeled_fraction > 0) {
                const ClassMap lt = extract_tile(s.labels, s.plan, t);
                const auto labeled = std::count_if(lt.labels.begin(), lt.labels.end(),
                                                   [](std::uint8_t v) { return v != kIgnore; });
                if (static_cast<double>(labeled) < config.min_labeled_fraction * static_cast<double>(lt.labels.size()))
                    continue;
            }
            pool.push_back({si, t});
        }
    }
    if (pool.empty()) throw_validation("no training tiles pass the labelled-fraction filter");

    LinearModel model;
    model.classes = k;
    model.channels = channel_count(mode);
    model.mode = mode;
    model.norm = manifest.norm_stats;
    const std::size_t f = model.features();
    const std::size_t nw = k * f;

    std::vector<double> w(nw, 0.0), m1(nw, 0.0), m2(nw, 0.0), grad(nw), tile_grad(nw);
    TrainLog log;
    log.tiles_per_epoch = pool.size();
    for (const auto& s : scenes) log.scenes.push_back(s.index);

    Rng order_rng(hash_key({config.seed, 0x0dde5ULL}));
    std::size_t step = 0;
    bool first = true;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<TileTag> order = pool;
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
            std::span<const TileTag> batch(order.data() + b0, b1 - b0);
            std::vector<TileTag> tags;
            for (const TileTag& t : batch) tags.push_back({scenes[t.scene].index, t.tile});
            if (observer) observer(tags);

            std::fill(grad.begin(), grad.end(), 0.0);
            double loss_sum = 0.0;
            std::size_t pixels = 0;
            for (const TileTag& t : batch) {
                const TrainingScene& s = scenes[t.scene];
                ChannelStack img = extract_tile(s.stack, s.plan, t.tile);
                ClassMap lab = extract_tile(s.labels, s.plan, t.tile);
                if (config.augment) {
                    auto aug = augment(img, lab, hash_key({config.seed, epoch, s.index, t.tile}));
                    img = std::move(aug.image);
                    lab = std::move(aug.labels);
                }
                if (!img.valid.empty())
                    for (std::size_t i = 0; i < img.pixels(); ++i)
                        if (!img.valid[i]) lab.labels[i] = kIgnore;
                const std::vector<float> feats = pixel_features(img);
                std::size_t counted = 0;
                const double l = cross_entropy(w, k, feats, lab.labels, tile_grad, &counted);
                const auto weight = static_cast<double>(counted);
                loss_sum += l * weight;
                pixels += counted;
                for (std::size_t i = 0; i < nw; ++i) grad[i] += tile_grad[i] * weight;
            }
            if (pixels == 0) continue;
            const double inv = 1.0 / static_cast<double>(pixels);
            const double loss = loss_sum * inv;
            if (!std::isfinite(loss))
                throw_backend("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
            if (first) {
                log.initial_loss = loss;
                first = false;
            }
            epoch_loss += loss;
            ++epoch_batches;

            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < nw; ++i) {
                const double g = grad[i] * inv + config.weight_decay * w[i];
                m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g;
                m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g * g;
                w[i] -= config.learning_rate * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + config.epsilon);
            }
        }
        const double mean = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
        if (!std::isfinite(mean)) throw_backend("training diverged (non-finite loss) in epoch " + std::to_string(epoch));
        log.epoch_loss.push_back(mean);
    }
    log.steps = step;

    model.weights.resize(nw);
    for (std::size_t i = 0; i < nw; ++i) model.weights[i] = static_cast<float>(w[i]);
    for (float v : model.weights)
        if (!std::isfinite(v)) throw_backend("training diverged (non-finite weights)");
    return {std::move(model), std::move(log)};
}

}  // namespace lumap

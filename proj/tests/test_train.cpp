#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <set>

#include "lumap/error.hpp"
#include "lumap/linear_model.hpp"
#include "lumap/synth.hpp"
#include "lumap/train.hpp"
#include "test_util.hpp"

using namespace lumap;

namespace {

SceneSpec two_class_spec() {
    SceneSpec s;
    s.width = 192;
    s.height = 160;
    s.background_materials = {material::kWater, material::kForest};
    s.rectangle_materials = {material::kWater, material::kForest};
    s.blob_materials = {material::kWater, material::kForest};
    s.roads = 0;
    s.buildings = 0;
    return s;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("two separable classes are learned") {
    const SceneSpec spec = two_class_spec();
    // Closed-form check: the class means sit many sigmas apart in NIR.
    const Material& water = spec.materials[material::kWater];
    const Material& forest = spec.materials[material::kForest];
    CHECK(std::abs(water.mean[3] - forest.mean[3]) > 10 * std::max(water.sigma, forest.sigma));

    testutil::TempDir dir("train");
    const CorpusManifest m = generate_corpus(spec, 4, 21, dir.path());
    TrainConfig cfg = TrainConfig::desk();
    cfg.epochs = 5;
    const TrainResult r = train_linear(m, Mode::LU6, cfg);

    REQUIRE(r.log.epoch_loss.size() == 5);
    for (double l : r.log.epoch_loss) CHECK(std::isfinite(l));
    CHECK(r.log.epoch_loss.back() < r.log.initial_loss);

    std::uint64_t correct = 0, total = 0;
    for (std::size_t i : m.split_indices("train")) {
        const RasterGrid img = read_raster(m.image_path(i));
        const ClassMap truth = read_class_map(m.labels_path(i));
        const ClassMap pred = predict_linear(r.model, build_channel_stack(img, Mode::LU6, r.model.norm));
        for (std::size_t p = 0; p < truth.labels.size(); ++p) {
            correct += pred.labels[p] == truth.labels[p];
            ++total;
        }
    }
    CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("training is deterministic and never sees validation scenes") {
    testutil::TempDir dir("train");
    SceneSpec spec;
    spec.width = 160;
    spec.height = 160;
    const CorpusManifest m = generate_corpus(spec, 6, 3, dir.path());
    TrainConfig cfg = TrainConfig::desk();
    cfg.epochs = 2;

    std::set<std::size_t> seen;
    const TrainResult a = train_linear(m, Mode::LU6, cfg, [&](std::span<const TileTag> batch) {
        for (const auto& t : batch) seen.insert(t.scene);
    });
    const TrainResult b = train_linear(m, Mode::LU6, cfg);
    a.model.save(dir / "a.lmod");
    b.model.save(dir / "b.lmod");
    CHECK(slurp(dir / "a.lmod") == slurp(dir / "b.lmod"));

    const auto val = m.split_indices("val");
    REQUIRE(val.size() == 1);
    CHECK_FALSE(seen.count(val[0]));
    CHECK(seen.size() == 5);
    CHECK(std::set<std::size_t>(a.log.scenes.begin(), a.log.scenes.end()) == seen);

    cfg.seed = 1;
    const TrainResult c = train_linear(m, Mode::LU6, cfg);
    CHECK_FALSE(c.model.weights == a.model.weights);
}

TEST_CASE("training config validation") {
    TrainConfig cfg;
    CHECK(cfg.learning_rate == 1e-5);
    CHECK(cfg.weight_decay == 5e-4);
    CHECK(cfg.beta1 == 0.99);
    CHECK(cfg.batch_size == 12);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

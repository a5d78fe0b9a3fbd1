#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numeric>

#include "lumap/augment.hpp"
#include "lumap/backend.hpp"
#include "lumap/error.hpp"
#include "lumap/linear_model.hpp"
#include "lumap/rng.hpp"
#include "lumap/tiling.hpp"
#include "test_util.hpp"

using namespace lumap;

namespace {

ClassMap random_labels(std::uint64_t w, std::uint64_t h, std::size_t k, std::uint64_t seed) {
    ClassMap m = ClassMap::filled(w, h, 0);
    Rng rng(seed);
    for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.integer(0, static_cast<std::int64_t>(k) - 1));
    return m;
}

ChannelStack random_stack(std::uint64_t w, std::uint64_t h, std::size_t c, std::uint64_t seed) {
    ChannelStack s;
    s.width = w;
    s.height = h;
    for (std::size_t i = 0; i < c; ++i) s.names.push_back("c" + std::to_string(i));
    s.norm.assign(c, {});
    s.data.resize(c * w * h);
    Rng rng(seed);
    for (auto& v : s.data) v = static_cast<float>(rng.uniform());
    return s;
}

ChannelStack blank_stack(std::uint64_t n, std::size_t c) { return random_stack(n, n, c, 0); }

}  // namespace

TEST_CASE("oracle backend returns the truth tile") {
    auto truth = std::make_shared<const ClassMap>(random_labels(50, 30, 9, 1));
    auto oracle = make_oracle_backend(truth, 9);
    const TilePlan plan = plan_tiles(50, 30, TileSpec::make(32, 16));
    for (std::size_t k = 0; k < plan.count(); ++k) {
        const ClassMap out = predict_tile(*oracle, blank_stack(32, 2), {k, &plan});
        CHECK(out == extract_tile(*truth, plan, k));
    }
    CHECK_THROWS_AS(predict_tile(*oracle, blank_stack(32, 2), {0, nullptr}), Error);
}

TEST_CASE("edge degrader identity cases") {
    auto truth = std::make_shared<const ClassMap>(random_labels(64, 64, 9, 2));
    auto oracle = make_oracle_backend(truth, 9);
    const TilePlan plan = plan_tiles(64, 64, TileSpec::make(32, 16));
    for (auto [band, p] : {std::pair<std::int64_t, double>{0, 0.9}, {8, 0.0}}) {
        auto deg = make_edge_degraded(oracle, band, p, 5);
        for (std::size_t k = 0; k < plan.count(); ++k)
            CHECK(predict_tile(*deg, blank_stack(32, 1), {k, &plan}) == predict_tile(*oracle, blank_stack(32, 1), {k, &plan}));
    }
    auto too_wide = make_edge_degraded(oracle, 17, 0.5, 5);
    CHECK_THROWS_AS(predict_tile(*too_wide, blank_stack(32, 1), {0, &plan}), Error);
}

TEST_CASE("edge degrader touches only the band, at the expected rate") {
    const std::size_t k = 9;
    auto truth = std::make_shared<const ClassMap>(random_labels(640, 640, k, 3));
    auto oracle = make_oracle_backend(truth, k);
    const TilePlan plan = plan_tiles(640, 640, TileSpec::make(640, 640));
    auto deg = make_edge_degraded(oracle, 160, 0.5, 11);
    const ClassMap a = predict_tile(*oracle, blank_stack(640, 1), {0, &plan});
    const ClassMap b = predict_tile(*deg, blank_stack(640, 1), {0, &plan});
    std::size_t in_band = 0, changed_in_band = 0, changed_inside = 0;
    for (std::uint64_t y = 0; y < 640; ++y)
        for (std::uint64_t x = 0; x < 640; ++x) {
            const bool band = x < 160 || y < 160 || x >= 480 || y >= 480;
            const bool changed = a.at(x, y) != b.at(x, y);
            in_band += band;
            changed_in_band += band && changed;
            changed_inside += !band && changed;
        }
    CHECK(changed_inside == 0);
    CHECK(in_band == 640 * 640 - 320 * 320);
    // Resampling uniformly over K leaves 1/K of the draws unchanged.
    const double expect = 0.5 * (k - 1.0) / k;
    const double sigma = std::sqrt(expect * (1 - expect) / in_band);
    const double rate = static_cast<double>(changed_in_band) / in_band;
    CHECK(std::abs(rate - expect) <= 3 * sigma);
    CHECK(predict_tile(*deg, blank_stack(640, 1), {0, &plan}) == b);
}

TEST_CASE("predict_tile validates backend output") {
    struct Broken : Backend {
        std::size_t num_classes() const override { return 3; }
        std::size_t channels() const override { return 2; }
        ClassMap predict(const ChannelStack& t, const TileContext&) override {
            return ClassMap::filled(t.width, t.height, 4);
        }
    } broken;
    CHECK_THROWS_AS(predict_tile(broken, blank_stack(8, 2), {}), Error);
    CHECK_THROWS_AS(predict_tile(broken, blank_stack(8, 3), {}), Error);
}

TEST_CASE("dihedral transforms invert and keep pairs aligned") {
    const ClassMap m = random_labels(9, 9, 9, 4);
    for (Dihedral d = 0; d < 8; ++d) {
        const ClassMap t = apply_dihedral(m, d);
        CHECK(apply_dihedral(t, dihedral_inverse(d)) == m);
        for (std::uint64_t y = 0; y < 9; ++y)
            for (std::uint64_t x = 0; x < 9; ++x) {
                const auto [tx, ty] = dihedral_map(d, 9, x, y);
                CHECK(t.at(tx, ty) == m.at(x, y));
            }
        std::vector<int> h1(256, 0), h2(256, 0);
        for (auto v : m.labels) ++h1[v];
        for (auto v : t.labels) ++h2[v];
        CHECK(h1 == h2);
    }
    // All eight transforms are distinct on a generic map.
    for (Dihedral a = 0; a < 8; ++a)
        for (Dihedral b = a + 1; b < 8; ++b) CHECK_FALSE(apply_dihedral(m, a) == apply_dihedral(m, b));

    ChannelStack img = random_stack(9, 9, 2, 0);
    for (std::size_t i = 0; i < 81; ++i) img.data[i] = m.labels[i] / 10.0f;
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        const AugmentedPair p = augment(img, m, seed);
        for (std::size_t i = 0; i < 81; ++i) CHECK(p.image.data[i] == p.labels.labels[i] / 10.0f);
    }
}

TEST_CASE("pixel features match a brute-force box filter") {
    const ChannelStack s = random_stack(7, 5, 2, 6);
    const auto f = pixel_features(s);
    const std::size_t nf = feature_count(2);
    REQUIRE(f.size() == 35 * nf);
    for (std::int64_t y = 0; y < 5; ++y)
        for (std::int64_t x = 0; x < 7; ++x)
            for (std::size_t c = 0; c < 2; ++c) {
                double sum = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const auto xx = x + dx, yy = y + dy;
                        if (xx >= 0 && xx < 7 && yy >= 0 && yy < 5)
                            sum += s.at(c, static_cast<std::uint64_t>(xx), static_cast<std::uint64_t>(yy));
                    }
                const std::size_t i = static_cast<std::size_t>(y * 7 + x);
                CHECK(f[i * nf + c] == s.at(c, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y)));
                CHECK(f[i * nf + 2 + c] == doctest::Approx(sum / 9.0).epsilon(1e-6));
                CHECK(f[i * nf + 4] == 1.0f);
            }
}

TEST_CASE("cross entropy gradient matches central differences") {
    const std::size_t k = 5, c = 3, f = feature_count(c);
    const ChannelStack s = random_stack(6, 6, c, 7);
    const auto feats = pixel_features(s);
    ClassMap labels = random_labels(6, 6, k, 8);
    labels.labels[3] = kIgnore;
    Rng rng(9);
    std::vector<double> w(k * f);
    for (auto& v : w) v = rng.uniform(-1, 1);
    std::vector<double> grad(w.size(), 0.0), scratch(w.size());
    std::size_t counted = 0;
    cross_entropy(w, k, feats, labels.labels, grad, &counted);
    CHECK(counted == 35);
    for (int t = 0; t < 20; ++t) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w.size()) - 1));
        const double h = 1e-5;
        auto wp = w, wm = w;
        wp[j] += h;
        wm[j] -= h;
        const double numeric =
            (cross_entropy(wp, k, feats, labels.labels, scratch) - cross_entropy(wm, k, feats, labels.labels, scratch)) /
            (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(grad[j]), 1e-8});
        CHECK(std::abs(numeric - grad[j]) / denom <= 1e-4);
    }
}

TEST_CASE("softmax rows sum to one") {
    const std::size_t k = 4, f = feature_count(2);
    const auto feats = pixel_features(random_stack(5, 5, 2, 10));
    Rng rng(11);
    std::vector<double> w(k * f);
    for (auto& v : w) v = rng.uniform(-20, 20);
    const auto p = softmax_probabilities(w, k, feats);
    REQUIRE(p.size() == 25 * k);
    for (std::size_t i = 0; i < 25; ++i) {
        double sum = 0;
        for (std::size_t c = 0; c < k; ++c) {
            CHECK(p[i * k + c] >= 0.0);
            sum += p[i * k + c];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("linear model files round trip and predictions follow the weights") {
    testutil::TempDir dir("model");
    LinearModel m;
    m.classes = 3;
    m.channels = 3;
    m.mode = Mode::LU3;
    m.norm.bands.assign(4, BandRange{0.0, 1000.0});
    m.weights.assign(3 * m.features(), 0.0f);
    // Class c scores channel c.
    for (std::size_t c = 0; c < 3; ++c) m.weights[c * m.features() + c] = 1.0f;
    m.save(dir / "m.lmod");
    CHECK(LinearModel::load(dir / "m.lmod") == m);

    ChannelStack s = random_stack(4, 4, 3, 12);
    const ClassMap pred = predict_linear(m, s);
    for (std::uint64_t y = 0; y < 4; ++y)
        for (std::uint64_t x = 0; x < 4; ++x) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < 3; ++c)
                if (s.at(c, x, y) > s.at(best, x, y)) best = c;
            CHECK(pred.at(x, y) == best);
        }
    s.valid.assign(16, 1);
    s.valid[5] = 0;
    CHECK(predict_linear(m, s).labels[5] == kIgnore);

    std::ofstream(dir / "bad.lmod") << "garbage";
    CHECK_THROWS_AS(LinearModel::load(dir / "bad.lmod"), Error);
}

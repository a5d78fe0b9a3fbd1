#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <fstream>
#include <set>

#include "lumap/error.hpp"
#include "lumap/synth.hpp"
#include "test_util.hpp"

using namespace lumap;

namespace {

SceneSpec small_spec(std::uint64_t seed) {
    SceneSpec s;
    s.width = 256;
    s.height = 192;
    s.seed = seed;
    return s;
}

std::array<double, 4> pixel(const Scene& s, std::uint64_t i) {
    std::array<double, 4> v{};
    for (std::size_t b = 0; b < 4; ++b) v[b] = s.image.value(b, i % s.image.width, i / s.image.width);
    return v;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("scenes are deterministic in the seed") {
    const Scene a = generate_scene(small_spec(11));
    const Scene b = generate_scene(small_spec(11));
    const Scene c = generate_scene(small_spec(12));
    CHECK(a.image == b.image);
    CHECK(a.labels == b.labels);
    CHECK(a.materials == b.materials);
    CHECK_FALSE(a.image == c.image);
}

TEST_CASE("labels match the material that painted each pixel") {
    const SceneSpec spec = small_spec(5);
    const Scene s = generate_scene(spec);
    CHECK(s.image.band_names == raw_band_names());
    CHECK(s.image.dtype == DType::U16);
    std::set<std::uint8_t> seen;
    for (std::size_t i = 0; i < s.labels.labels.size(); ++i) {
        REQUIRE(s.materials[i] < spec.materials.size());
        CHECK(s.labels.labels[i] == spec.materials[s.materials[i]].label);
        seen.insert(s.labels.labels[i]);
    }
    CHECK(seen.size() >= 5);
    CHECK(spec.materials[material::kShadow].label == land_use::kResidential);
}

TEST_CASE("NDVI separates forest from grass") {
    double ndvi[2] = {0, 0};
    std::size_t count[2] = {0, 0};
    for (std::uint64_t seed : {1, 2, 3}) {
        SceneSpec spec;
        spec.seed = seed;
        const Scene s = generate_scene(spec);
        for (std::size_t i = 0; i < s.materials.size(); ++i) {
            const int which = s.materials[i] == material::kForest ? 0 : s.materials[i] == material::kGrass ? 1 : -1;
            if (which < 0) continue;
            const auto v = pixel(s, i);
            ndvi[which] += (v[3] - v[2]) / (v[3] + v[2]);
            ++count[which];
        }
    }
    REQUIRE(count[0] > 1000);
    REQUIRE(count[1] > 1000);
    CHECK(ndvi[0] / count[0] - ndvi[1] / count[1] >= 0.2);
}

TEST_CASE("water and shadow differ only in NIR") {
    std::vector<std::array<double, 4>> px[2];
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        SceneSpec spec;
        spec.seed = seed;
        const Scene s = generate_scene(spec);
        for (std::size_t i = 0; i < s.materials.size(); ++i) {
            if (s.materials[i] == material::kWater) px[0].push_back(pixel(s, i));
            if (s.materials[i] == material::kShadow) px[1].push_back(pixel(s, i));
        }
    }
    REQUIRE(px[0].size() > 500);
    REQUIRE(px[1].size() > 500);
    std::array<double, 4> mean[2]{};
    for (int c = 0; c < 2; ++c) {
        for (const auto& v : px[c])
            for (int b = 0; b < 4; ++b) mean[c][b] += v[b];
        for (int b = 0; b < 4; ++b) mean[c][b] /= static_cast<double>(px[c].size());
    }
    auto nearest = [&](const std::array<double, 4>& v, int bands) {
        double d[2] = {0, 0};
        for (int c = 0; c < 2; ++c)
            for (int b = 0; b < bands; ++b) d[c] += (v[b] - mean[c][b]) * (v[b] - mean[c][b]);
        return d[0] <= d[1] ? 0 : 1;
    };
    std::size_t wrong_rgb = 0, wrong_all = 0, total = 0;
    for (int c = 0; c < 2; ++c)
        for (const auto& v : px[c]) {
            wrong_rgb += nearest(v, 3) != c;
            wrong_all += nearest(v, 4) != c;
            ++total;
        }
    CHECK(static_cast<double>(wrong_rgb) / total >= 0.40);
    CHECK(static_cast<double>(wrong_all) / total <= 0.05);
}

TEST_CASE("validation split size") {
    CHECK(validation_count(20) == 1);
    CHECK(validation_count(2) == 1);
    CHECK(validation_count(21) == 2);
    CHECK(validation_count(100) == 5);
}

TEST_CASE("corpus generation is deterministic and consistent") {
    testutil::TempDir a("corpus"), b("corpus");
    SceneSpec spec = small_spec(0);
    const CorpusManifest m1 = generate_corpus(spec, 5, 99, a.path(), 1);
    const CorpusManifest m2 = generate_corpus(spec, 5, 99, b.path(), 3);
    CHECK(read_text(a / "manifest.json") == read_text(b / "manifest.json"));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(file_checksum(m1.image_path(i)) == file_checksum(m2.image_path(i)));
        CHECK(file_checksum(m1.labels_path(i)) == file_checksum(m2.labels_path(i)));
    }
    CHECK(m1.split_indices("val").size() == 1);
    CHECK(m1.split_indices("train").size() == 4);

    std::vector<std::uint64_t> hist(m1.class_scheme.size(), 0);
    for (std::size_t i = 0; i < 5; ++i)
        for (auto v : read_class_map(m1.labels_path(i)).labels)
            if (v != kIgnore) ++hist[v];
    CHECK(hist == m1.class_histogram);

    const CorpusManifest loaded = CorpusManifest::load(a / "manifest.json");
    CHECK(loaded.scenes.size() == 5);
    CHECK(loaded.norm_stats == m1.norm_stats);
    CHECK(loaded.class_scheme == m1.class_scheme);
    CHECK_THROWS_AS(generate_corpus(spec, 1, 0, a / "x", 1), Error);
}

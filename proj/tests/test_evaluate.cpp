#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "lumap/error.hpp"
#include "lumap/evaluate.hpp"
#include "lumap/pipeline.hpp"
#include "lumap/rng.hpp"
#include "test_util.hpp"

using namespace lumap;

namespace {

ClassMap random_map(std::uint64_t w, std::uint64_t h, std::size_t k, Rng& rng, double ignore = 0.0) {
    ClassMap m = ClassMap::filled(w, h, 0);
    for (auto& v : m.labels)
        v = rng.uniform() < ignore ? kIgnore : static_cast<std::uint8_t>(rng.integer(0, static_cast<std::int64_t>(k) - 1));
    return m;
}

ClassScheme scheme_of(std::size_t k) {
    ClassScheme s;
    for (std::size_t i = 0; i < k; ++i)
        s.classes.push_back({static_cast<std::uint8_t>(i), "class" + std::to_string(i), {0, 0, 0}});
    return s;
}

}  // namespace

TEST_CASE("four pixel example") {
    ClassMap truth = ClassMap::filled(2, 2, 0);
    ClassMap pred = ClassMap::filled(2, 2, 0);
    truth.labels = {0, 0, 1, 1};
    pred.labels = {0, 1, 1, 1};
    const ConfusionMatrix cm = confusion(pred, truth, 2);
    CHECK(cm.counts == std::vector<std::uint64_t>{1, 1, 0, 2});
    CHECK(overall_accuracy(cm) == 0.75);
    const auto pa = producer_accuracy(cm);
    const auto ua = user_accuracy(cm);
    CHECK(pa[0] == 0.5);
    CHECK(pa[1] == 1.0);
    CHECK(ua[0] == 1.0);
    CHECK(ua[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("diagonal matrix gives perfect per-class accuracies") {
    Rng rng(1);
    const ClassMap m = random_map(20, 20, 4, rng);
    const ConfusionMatrix cm = confusion(m, m, 4);
    CHECK(overall_accuracy(cm) == 1.0);
    for (double v : producer_accuracy(cm)) CHECK(v == 1.0);
    for (double v : user_accuracy(cm)) CHECK(v == 1.0);
}

TEST_CASE("ignored pixels are excluded") {
    ClassMap truth = ClassMap::filled(3, 1, 1);
    ClassMap pred = ClassMap::filled(3, 1, 1);
    pred.labels[0] = kIgnore;
    truth.labels[1] = kIgnore;
    pred.labels[2] = 0;
    const ConfusionMatrix cm = confusion(pred, truth, 2);
    CHECK(cm.total() == 1);
    CHECK(overall_accuracy(cm) == 0.0);
    CHECK_THROWS_AS(overall_accuracy(confusion(ClassMap::filled(4, 4, kIgnore), ClassMap::filled(4, 4, 0), 2)), Error);
    CHECK_THROWS_AS(confusion(ClassMap::filled(4, 4, 0), ClassMap::filled(4, 3, 0), 2), Error);
    CHECK_THROWS_AS(confusion(ClassMap::filled(4, 4, 5), ClassMap::filled(4, 4, 0), 2), Error);
}

TEST_CASE("brute-force recount and streamed accumulation") {
    testutil::TempDir dir("eval");
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        const auto w = static_cast<std::uint64_t>(rng.integer(1, 60));
        const auto h = static_cast<std::uint64_t>(rng.integer(1, 60));
        const std::size_t k = static_cast<std::size_t>(rng.integer(2, 9));
        const ClassMap truth = random_map(w, h, k, rng, 0.1);
        const ClassMap pred = random_map(w, h, k, rng, 0.1);
        const ConfusionMatrix cm = confusion(pred, truth, k);
        std::vector<std::uint64_t> brute(k * k, 0);
        for (std::size_t i = 0; i < truth.labels.size(); ++i)
            if (truth.labels[i] != kIgnore && pred.labels[i] != kIgnore) ++brute[truth.labels[i] * k + pred.labels[i]];
        CHECK(cm.counts == brute);
        write_class_map(truth, dir / "t.rstr");
        write_class_map(pred, dir / "p.rstr");
        const auto rows = static_cast<std::uint64_t>(rng.integer(1, 7));
        CHECK(confusion_streamed(dir / "p.rstr", dir / "t.rstr", k, rows) == cm);
    }
}

TEST_CASE("random predictions score about 1/K") {
    Rng rng(3);
    const ClassMap truth = random_map(300, 300, 9, rng);
    const ClassMap pred = random_map(300, 300, 9, rng);
    CHECK(overall_accuracy(confusion(pred, truth, 9)) == doctest::Approx(1.0 / 9).epsilon(0.05));
}

TEST_CASE("relabelling by a bijection permutes counts") {
    Rng rng(4);
    const std::size_t k = 5;
    const ClassMap truth = random_map(40, 30, k, rng);
    const ClassMap pred = random_map(40, 30, k, rng);
    const std::vector<std::uint8_t> perm{3, 0, 4, 1, 2};
    ClassMap pt = truth, pp = pred;
    for (auto& v : pt.labels) v = perm[v];
    for (auto& v : pp.labels) v = perm[v];
    const ConfusionMatrix a = confusion(pred, truth, k);
    const ConfusionMatrix b = confusion(pp, pt, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) CHECK(b.at(perm[i], perm[j]) == a.at(i, j));
    CHECK(overall_accuracy(a) == overall_accuracy(b));
}

TEST_CASE("merging partial matrices") {
    Rng rng(5);
    const ClassMap truth = random_map(30, 20, 3, rng);
    const ClassMap pred = random_map(30, 20, 3, rng);
    ConfusionMatrix sum(3);
    for (std::int64_t y = 0; y < 20; y += 5)
        sum.merge(confusion(crop(pred, {0, y, 30, 5}), crop(truth, {0, y, 30, 5}), 3));
    CHECK(sum == confusion(pred, truth, 3));
    ConfusionMatrix other(4);
    CHECK_THROWS_AS(sum.merge(other), Error);
}

TEST_CASE("report round trip") {
    testutil::TempDir dir("eval");
    Rng rng(6);
    const ClassMap truth = random_map(25, 25, 4, rng);
    const ClassMap pred = random_map(25, 25, 4, rng);
    const ConfusionMatrix cm = confusion(pred, truth, 4);
    report(cm, scheme_of(4), {{"experiment", "unit"}}, dir / "r.json");
    CHECK(read_report(dir / "r.json") == cm);
    CHECK(std::filesystem::exists(dir / "r.csv"));
    const auto j = report_json(cm, scheme_of(4), {});
    std::vector<std::string> keys;
    for (const auto& [key, v] : j.items()) keys.push_back(key);
    CHECK(keys == std::vector<std::string>{"class_names", "counts", "total", "overall_accuracy",
                                           "producer_accuracy", "user_accuracy", "metadata"});
    std::ifstream csv(dir / "r.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("truth\\pred", 0) == 0);
}

TEST_CASE("seam band") {
    const TilePlan plan = plan_tiles(100, 100, TileSpec::make(40, 40));
    CHECK(in_seam_band(plan, 2, 39, 10));
    CHECK(in_seam_band(plan, 2, 41, 10));
    CHECK_FALSE(in_seam_band(plan, 2, 42, 10));
    CHECK_FALSE(in_seam_band(plan, 2, 20, 20));
    CHECK(in_seam_band(plan, 2, 20, 80));
    CHECK_FALSE(in_seam_band(plan, 2, 1, 1));  // the scene border is not a seam
}

TEST_CASE("boundary accuracy with the edge degrader") {
    testutil::TempDir dir("eval");
    Rng rng(7);
    const std::uint64_t n = 256;
    const auto truth = std::make_shared<const ClassMap>(random_map(n, n, 9, rng));
    RasterHeader hd;
    hd.width = n;
    hd.height = n;
    hd.dtype = DType::F32;
    hd.band_names = channel_names(Mode::LU3);
    write_raster(RasterGrid::zeros(hd), dir / "img.rstr");
    auto deg = make_edge_degraded(make_oracle_backend(truth, 9), 16, 0.5, 1);
    for (bool overlap : {true, false}) {
        InferenceJob job;
        job.image = dir / "img.rstr";
        job.mode = Mode::LU3;
        job.spec = overlap ? TileSpec::make(64, 32) : TileSpec::make(64, 64);
        job.backend = shared_factory(deg);
        const ClassMap pred = infer_map(job).map;
        const TilePlan plan = plan_tiles(n, n, job.spec);
        const double oa = overall_accuracy(confusion(pred, *truth, 9));
        const double boa = boundary_accuracy(pred, *truth, plan, 16, 9);
        if (overlap) {
            CHECK(oa == 1.0);
            CHECK(boa == 1.0);
        } else {
            CHECK(boa < oa);
        }
    }
}

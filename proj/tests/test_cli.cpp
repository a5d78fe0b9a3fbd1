#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "lumap/raster.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = LUMAP_CLI;
const std::string kChild = LUMAP_TILE_CHILD;

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    Run r;
    FILE* p = ::popen((kCli + " " + args + " 2>&1").c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

std::string small_config(const fs::path& out) {
    return R"({"output_dir":")" + out.string() +
           R"(","seed":5,"corpus":{"scenes":3,"width":200,"height":180},)"
           R"("train":{"epochs":2},"tile":{"tile":128,"stride":64}})";
}

}  // namespace

TEST_CASE("usage and config errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    const Run missing = run("synth --config /nonexistent/conf.json");
    CHECK(missing.code == 2);
    CHECK(missing.output.find("/nonexistent/conf.json") != std::string::npos);

    testutil::TempDir dir("cli");
    write_text(dir / "bad.json", R"({"seed":1,"colour":"red"})");
    const Run unknown = run("synth --config " + (dir / "bad.json").string());
    CHECK(unknown.code == 2);
    CHECK(unknown.output.find("colour") != std::string::npos);
    write_text(dir / "nested.json", R"({"train":{"lr":0.1}})");
    CHECK(run("synth --config " + (dir / "nested.json").string()).code == 2);
    write_text(dir / "notjson.json", "{");
    CHECK(run("synth --config " + (dir / "notjson.json").string()).code == 2);
}

TEST_CASE("io, protocol and validation failures map to their exit codes") {
    testutil::TempDir dir("cli");
    CHECK(run("slice --image " + (dir / "none.rstr").string()).code == 3);

    lumap::RasterHeader hd;
    hd.width = 40;
    hd.height = 40;
    hd.dtype = lumap::DType::F32;
    hd.band_names = {"B", "G", "R"};
    lumap::write_raster(lumap::RasterGrid::zeros(hd), dir / "img.rstr");
    const Run proto = run("infer --image " + (dir / "img.rstr").string() + " --mode lu3 --tile 32 --stride 16 " +
                          "--backend-cmd '" + kChild + " bad-version' --out " + (dir / "p.rstr").string());
    CHECK(proto.code == 4);
    CHECK(proto.output.find("version mismatch") != std::string::npos);

    lumap::write_class_map(lumap::ClassMap::filled(40, 40, 1), dir / "a.rstr");
    lumap::write_class_map(lumap::ClassMap::filled(30, 40, 1), dir / "b.rstr");
    CHECK(run("eval --pred " + (dir / "a.rstr").string() + " --truth " + (dir / "b.rstr").string()).code == 5);
}

TEST_CASE("synth, train, infer and eval are reproducible") {
    testutil::TempDir dir("cli");
    write_text(dir / "c.json", small_config(dir.path()));
    const std::string cfg = "--config " + (dir / "c.json").string();

    std::uint64_t sums[2][4];
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path corpus = dir / ("corpus" + std::to_string(rep));
        REQUIRE(run("synth " + cfg + " --out " + corpus.string()).code == 0);
        const fs::path model = dir / ("m" + std::to_string(rep) + ".lmod");
        REQUIRE(run("train " + cfg + " --manifest " + (corpus / "manifest.json").string() + " --out " + model.string())
                    .code == 0);
        const std::string image = (corpus / "scene_000_image.rstr").string();
        for (int w = 0; w < 2; ++w) {
            const fs::path out = dir / ("p" + std::to_string(rep) + std::to_string(w) + ".rstr");
            REQUIRE(run("infer " + cfg + " --image " + image + " --model " + model.string() + " --workers " +
                        (w ? "8" : "1") + " --out " + out.string())
                        .code == 0);
            sums[rep][w] = lumap::file_checksum(out);
        }
        sums[rep][2] = lumap::file_checksum(corpus / "scene_001_image.rstr");
        sums[rep][3] = lumap::file_checksum(model);
    }
    CHECK(sums[0][0] == sums[0][1]);
    for (int i = 0; i < 4; ++i) CHECK(sums[0][i] == sums[1][i]);

    const auto summary = read_json(dir / "p00.summary.json");
    CHECK(summary["config"]["seed"] == 5);
    CHECK(summary["config"]["tile"]["tile"] == 128);
    CHECK(summary["tiles"] == 12);
    CHECK(fs::exists(dir / "p00.png"));
    CHECK(fs::exists(dir / "m0.train.json"));

    const Run eval = run("eval " + cfg + " --pred " + (dir / "p00.rstr").string() + " --truth " +
                         (dir / "corpus0" / "scene_000_labels.rstr").string() + " --band 16 --out " +
                         (dir / "rep.json").string());
    REQUIRE(eval.code == 0);
    const auto rep = read_json(dir / "rep.json");
    CHECK(rep["class_names"].size() == 9);
    CHECK(rep["metadata"].contains("boundary_accuracy"));
    CHECK(fs::exists(dir / "rep.csv"));

    const Run slice = run("slice " + cfg + " --image " + (dir / "corpus0" / "scene_000_image.rstr").string() +
                          " --dump-tiles --out " + (dir / "slice").string());
    REQUIRE(slice.code == 0);
    CHECK(read_json(dir / "slice" / "plan.json")["tiles"].size() == 12);
    CHECK(fs::exists(dir / "slice" / "tile_00011.rstr"));
}

TEST_CASE("oracle inference from the command line") {
    testutil::TempDir dir("cli");
    write_text(dir / "c.json", small_config(dir.path()));
    const std::string cfg = "--config " + (dir / "c.json").string();
    REQUIRE(run("synth " + cfg + " --out " + (dir / "corpus").string()).code == 0);
    const std::string truth = (dir / "corpus" / "scene_000_labels.rstr").string();
    const Run r = run("infer " + cfg + " --image " + (dir / "corpus" / "scene_000_image.rstr").string() +
                      " --manifest " + (dir / "corpus" / "manifest.json").string() + " --backend oracle --truth " +
                      truth + " --degrade-band 32 --degrade-p 1 --workers 2 --out " + (dir / "o.rstr").string());
    REQUIRE(r.code == 0);
    CHECK(lumap::read_class_map(dir / "o.rstr") == lumap::read_class_map(truth));
}

TEST_CASE("ablation prints a four-row table") {
    testutil::TempDir dir("cli");
    write_text(dir / "c.json", small_config(dir.path()));
    const std::string cfg = "--config " + (dir / "c.json").string();
    REQUIRE(run("synth " + cfg + " --out " + (dir / "corpus").string()).code == 0);
    const Run r = run("ablation " + cfg + " --manifest " + (dir / "corpus" / "manifest.json").string());
    REQUIRE(r.code == 0);
    const auto j = read_json(dir / "ablation" / "ablation.json");
    REQUIRE(j["rows"].size() == 4);
    CHECK(j["rows"][0]["mode"] == "lu3");
    CHECK(j["rows"][3]["tiling"] == "no-overlap");
    CHECK(r.output.find("no-overlap") != std::string::npos);
}

#include "lumap/experiment.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "lumap/error.hpp"
#include "lumap/pipeline.hpp"

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

void reject_unknown(const ojson& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw_config(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw_config("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
}

template <class T>
void read_key(const ojson& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw_config("config key '" + where + (where.empty() ? "" : ".") + key + "' has the wrong type");
    }
}

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Linear: return "linear";
        case BackendKind::Oracle: return "oracle";
        case BackendKind::External: return "external";
    }
    return "?";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const ojson& j) {
    ExperimentConfig c;
    reject_unknown(j, "", {"output_dir", "seed", "corpus", "tile", "mode", "train", "backend", "workers", "eval"});
    std::string out = c.output_dir.string();
    read_key(j, "output_dir", out, "");
    c.output_dir = out;
    read_key(j, "seed", c.seed, "");
    read_key(j, "workers", c.workers, "");
    if (j.contains("mode")) {
        std::string m;
        read_key(j, "mode", m, "");
        c.mode = parse_mode(m);
    }
    if (j.contains("corpus")) {
        const auto& k = j["corpus"];
        reject_unknown(k, "corpus", {"scenes", "width", "height", "regions", "rectangles", "blobs", "roads", "buildings"});
        read_key(k, "scenes", c.scenes, "corpus");
        read_key(k, "width", c.scene.width, "corpus");
        read_key(k, "height", c.scene.height, "corpus");
        read_key(k, "regions", c.scene.regions, "corpus");
        read_key(k, "rectangles", c.scene.rectangles, "corpus");
        read_key(k, "blobs", c.scene.blobs, "corpus");
        read_key(k, "roads", c.scene.roads, "corpus");
        read_key(k, "buildings", c.scene.buildings, "corpus");
    }
    if (j.contains("tile")) {
        const auto& t = j["tile"];
        reject_unknown(t, "tile", {"tile", "stride", "pad_mode"});
        std::int64_t tile = c.tile.tile;
        std::int64_t stride = c.tile.stride;
        std::string pad = std::string(to_string(c.tile.pad_mode));
        read_key(t, "tile", tile, "tile");
        read_key(t, "stride", stride, "tile");
        read_key(t, "pad_mode", pad, "tile");
        try {
            c.tile = TileSpec::make(tile, stride, parse_pad_mode(pad));
        } catch (const Error& e) {
            throw_config(std::string("tile: ") + e.what());
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown(t, "train", {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon", "batch_size",
                                    "epochs", "augment", "tile", "stride", "min_labeled_fraction"});
        read_key(t, "learning_rate", c.train.learning_rate, "train");
        read_key(t, "weight_decay", c.train.weight_decay, "train");
        read_key(t, "beta1", c.train.beta1, "train");
        read_key(t, "beta2", c.train.beta2, "train");
        read_key(t, "epsilon", c.train.epsilon, "train");
        read_key(t, "batch_size", c.train.batch_size, "train");
        read_key(t, "epochs", c.train.epochs, "train");
        read_key(t, "augment", c.train.augment, "train");
        read_key(t, "min_labeled_fraction", c.train.min_labeled_fraction, "train");
        std::int64_t tile = c.train.tiles.tile;
        std::int64_t stride = c.train.tiles.stride;
        read_key(t, "tile", tile, "train");
        read_key(t, "stride", stride, "train");
        try {
            c.train.tiles = TileSpec::make(tile, stride);
        } catch (const Error& e) {
            throw_config(std::string("train: ") + e.what());
        }
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        reject_unknown(b, "backend", {"kind", "command", "timeout_s"});
        std::string kind = "linear";
        read_key(b, "kind", kind, "backend");
        if (kind == "linear") c.backend = BackendKind::Linear;
        else if (kind == "oracle") c.backend = BackendKind::Oracle;
        else if (kind == "external") c.backend = BackendKind::External;
        else throw_config("backend.kind must be linear, oracle or external");
        read_key(b, "command", c.backend_command, "backend");
        read_key(b, "timeout_s", c.backend_timeout_s, "backend");
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        reject_unknown(e, "eval", {"band"});
        read_key(e, "band", c.eval_band, "eval");
    }
    c.train.seed = c.seed;
    if (c.workers == 0) throw_config("workers must be at least 1");
    if (c.scenes < 2) throw_config("corpus.scenes must be at least 2");
    if (c.eval_band < 1) throw_config("eval.band must be at least 1");
    if (!(c.backend_timeout_s > 0)) throw_config("backend.timeout_s must be positive");
    if (c.backend == BackendKind::External && c.backend_command.empty())
        throw_config("backend.command is required for the external backend");
    c.train.validate();
    try {
        c.scene.validate();
    } catch (const Error& e) {
        throw_config(std::string("corpus: ") + e.what());
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_config("cannot open config file " + path.string());
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw_config("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

ojson ExperimentConfig::to_json() const {
    ojson j;
    j["output_dir"] = output_dir.string();
    j["seed"] = seed;
    j["corpus"] = {{"scenes", scenes},         {"width", scene.width},           {"height", scene.height},
                   {"regions", scene.regions}, {"rectangles", scene.rectangles}, {"blobs", scene.blobs},
                   {"roads", scene.roads},     {"buildings", scene.buildings}};
    j["tile"] = {{"tile", tile.tile}, {"stride", tile.stride}, {"pad_mode", std::string(lumap::to_string(tile.pad_mode))}};
    j["mode"] = std::string(lumap::to_string(mode));
    ojson t = train.to_json();
    t.erase("seed");
    j["train"] = t;
    j["backend"] = {{"kind", std::string(to_string(backend))},
                    {"command", backend_command},
                    {"timeout_s", backend_timeout_s}};
    j["workers"] = workers;
    j["eval"] = {{"band", eval_band}};
    return j;
}

std::vector<AblationRow> run_ablation(const CorpusManifest& manifest, const AblationOptions& options) {
    const auto val = manifest.split_indices("val");
    if (val.empty()) throw_validation("corpus has no validation scenes");
    const std::size_t k = manifest.class_scheme.size();

    std::filesystem::path work = options.work_dir;
    bool temp = false;
    if (work.empty()) {
        work = std::filesystem::temp_directory_path() / ("lumap_ablation_" + std::to_string(::getpid()));
        temp = true;
    }
    std::filesystem::create_directories(work);

    std::vector<AblationRow> rows;
    for (Mode mode : {Mode::LU3, Mode::LU6}) {
        const TrainResult trained = train_linear(manifest, mode, options.train);
        const auto backend = make_linear_backend(trained.model);
        for (bool overlap : {true, false}) {
            AblationRow row;
            row.mode = mode;
            row.overlap = overlap;
            row.confusion = ConfusionMatrix(k);
            row.boundary = ConfusionMatrix(k);
            const TileSpec spec = overlap ? options.tiles : TileSpec::no_overlap(options.tiles.tile);
            for (std::size_t id : val) {
                InferenceJob job;
                job.image = manifest.image_path(id);
                job.mode = mode;
                job.spec = spec;
                job.backend = shared_factory(backend);
                job.norm = trained.model.norm;
                job.workers = options.workers;
                job.output = work / ("scene_" + std::to_string(id) + "_" + std::string(to_string(mode)) +
                                     (overlap ? "_overlap" : "_naive") + ".rstr");
                const InferenceResult r = infer_map(job);
                const ClassMap truth = read_class_map(manifest.labels_path(id));
                row.confusion.merge(confusion(r.map, truth, k));
                const TilePlan seams = plan_tiles(truth.width, truth.height, TileSpec::no_overlap(options.tiles.tile));
                row.boundary.merge(boundary_confusion(r.map, truth, seams, options.band, k));
            }
            row.overall_accuracy = overall_accuracy(row.confusion);
            row.boundary_accuracy = row.boundary.total() ? overall_accuracy(row.boundary) : 0.0;
            rows.push_back(std::move(row));
        }
    }
    if (temp) std::filesystem::remove_all(work);
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = "mode  tiling      OA        boundary_OA\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-5s %-11s %.6f  %.6f\n", std::string(to_string(r.mode)).c_str(),
                      r.overlap ? "overlap" : "no-overlap", r.overall_accuracy, r.boundary_accuracy);
        out += line;
    }
    return out;
}

ojson ablation_json(const std::vector<AblationRow>& rows) {
    auto arr = ojson::array();
    for (const auto& r : rows)
        arr.push_back({{"mode", std::string(to_string(r.mode))},
                       {"tiling", r.overlap ? "overlap" : "no-overlap"},
                       {"overall_accuracy", r.overall_accuracy},
                       {"boundary_accuracy", r.boundary_accuracy},
                       {"evaluated_pixels", r.confusion.total()}});
    return arr;
}

}  // namespace lumap

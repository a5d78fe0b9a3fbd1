// lumap: synthetic corpus, tiling, training, tiled inference, evaluation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lumap/backend.hpp"
#include "lumap/class_scheme.hpp"
#include "lumap/error.hpp"
#include "lumap/evaluate.hpp"
#include "lumap/experiment.hpp"
#include "lumap/linear_model.hpp"
#include "lumap/pipeline.hpp"
#include "lumap/protocol.hpp"
#include "lumap/raster.hpp"
#include "lumap/synth.hpp"
#include "lumap/tiling.hpp"
#include "lumap/train.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace lumap;

namespace {

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return 2;
        case ErrorKind::IO: return 3;
        case ErrorKind::Protocol:
        case ErrorKind::Backend: return 4;
        case ErrorKind::Validation: return 5;
    }
    return 1;
}

void write_json(const ojson& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw_io("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw_io("write failed: " + path.string());
}

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    if (!fs::exists(path)) throw_config("config file not found: " + path);
    return ExperimentConfig::load(path);
}

struct Options {
    std::string config;
    // synth
    std::string out_dir;
    std::optional<std::size_t> scenes;
    std::optional<std::uint64_t> seed;
    // shared
    std::string image, manifest, model, mode, out, truth, pred;
    std::optional<std::size_t> workers;
    bool no_overlap = false;
    // slice
    std::optional<std::int64_t> tile, stride;
    std::string pad_mode;
    bool dump_tiles = false;
    // infer
    std::string backend, backend_cmd;
    std::int64_t degrade_band = 0;
    double degrade_p = 0.0;
    bool progress = false;
    // eval
    std::optional<std::int64_t> band;
};

void apply_common(ExperimentConfig& c, const Options& o) {
    if (o.seed) {
        c.seed = *o.seed;
        c.train.seed = *o.seed;
    }
    if (o.workers) {
        if (*o.workers == 0) throw_config("--workers must be at least 1");
        c.workers = *o.workers;
    }
    if (!o.mode.empty()) c.mode = parse_mode(o.mode);
    if (o.tile || o.stride || !o.pad_mode.empty())
        c.tile = TileSpec::make(o.tile.value_or(c.tile.tile), o.stride.value_or(c.tile.stride),
                                o.pad_mode.empty() ? c.tile.pad_mode : parse_pad_mode(o.pad_mode));
    if (o.no_overlap) c.tile = TileSpec::no_overlap(c.tile.tile);
    if (o.band) c.eval_band = *o.band;
}

int cmd_synth(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    apply_common(c, o);
    if (o.scenes) c.scenes = *o.scenes;
    const fs::path dir = o.out_dir.empty() ? c.output_dir / "corpus" : fs::path(o.out_dir);
    const CorpusManifest m = generate_corpus(c.scene, c.scenes, c.seed, dir, c.workers);
    std::printf("wrote %zu scenes (%zu validation) to %s\n", m.scenes.size(), m.split_indices("val").size(),
                (dir / "manifest.json").c_str());
    return 0;
}

int cmd_slice(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    apply_common(c, o);
    if (o.image.empty()) throw_config("--image is required");
    const RasterReader reader(o.image);
    const TilePlan plan = plan_tiles(reader.header().width, reader.header().height, c.tile);
    const fs::path dir = o.out_dir.empty() ? c.output_dir / "slice" : fs::path(o.out_dir);
    write_json(plan.to_json(), dir / "plan.json");
    if (o.dump_tiles)
        for (std::size_t k = 0; k < plan.count(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "tile_%05zu.rstr", k);
            write_raster(extract_tile(reader, plan, k), dir / name);
        }
    std::printf("%zu x %zu tiles (%zu) padded to %llu x %llu\n", plan.tiles_x, plan.tiles_y, plan.count(),
                static_cast<unsigned long long>(plan.padded_w), static_cast<unsigned long long>(plan.padded_h));
    return 0;
}

int cmd_train(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    apply_common(c, o);
    if (o.manifest.empty()) throw_config("--manifest is required");
    const CorpusManifest m = CorpusManifest::load(o.manifest);
    const fs::path path = o.out.empty() ? c.output_dir / ("model_" + std::string(to_string(c.mode)) + ".lmod")
                                        : fs::path(o.out);
    const TrainResult r = train_linear(m, c.mode, c.train);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    r.model.save(path);
    ojson log;
    log["config"] = c.to_json();
    log["initial_loss"] = r.log.initial_loss;
    log["epoch_loss"] = r.log.epoch_loss;
    log["steps"] = r.log.steps;
    log["tiles_per_epoch"] = r.log.tiles_per_epoch;
    log["training_scenes"] = r.log.scenes;
    fs::path log_path = path;
    log_path.replace_extension(".train.json");
    write_json(log, log_path);
    std::printf("model %s: loss %.4f -> %.4f over %zu epochs\n", path.c_str(), r.log.initial_loss,
                r.log.epoch_loss.empty() ? r.log.initial_loss : r.log.epoch_loss.back(), r.log.epoch_loss.size());
    return 0;
}

int cmd_infer(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    if (!o.backend.empty()) {
        if (o.backend == "linear") c.backend = BackendKind::Linear;
        else if (o.backend == "oracle") c.backend = BackendKind::Oracle;
        else if (o.backend == "external") c.backend = BackendKind::External;
        else throw_config("--backend must be linear, oracle or external");
    }
    if (!o.backend_cmd.empty()) {
        c.backend = BackendKind::External;
        c.backend_command = o.backend_cmd;
    }
    apply_common(c, o);
    if (o.image.empty()) throw_config("--image is required");

    const ClassScheme scheme = ClassScheme::land_use9();
    const std::size_t k = scheme.size();
    InferenceJob job;
    job.image = o.image;
    job.spec = c.tile;
    job.workers = c.workers;
    job.progress = o.progress;
    job.keep_map = false;
    if (!o.manifest.empty()) job.norm = CorpusManifest::load(o.manifest).norm_stats;

    std::shared_ptr<Backend> single;
    switch (c.backend) {
        case BackendKind::Linear: {
            if (o.model.empty()) throw_config("--model is required for the linear backend");
            LinearModel model = LinearModel::load(o.model);
            c.mode = model.mode;
            job.norm = model.norm;
            single = make_linear_backend(std::move(model));
            break;
        }
        case BackendKind::Oracle: {
            if (o.truth.empty()) throw_config("--truth is required for the oracle backend");
            single = make_oracle_backend(std::make_shared<const ClassMap>(read_class_map(o.truth)), k);
            break;
        }
        case BackendKind::External: {
            ExternalOptions eo;
            eo.num_classes = k;
            eo.tile = static_cast<std::size_t>(c.tile.tile);
            eo.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(c.backend_timeout_s * 1000));
            job.backend = external_factory(c.backend_command, channel_count(c.mode), eo);
            break;
        }
    }
    if (single) {
        if (o.degrade_band > 0) single = make_edge_degraded(single, o.degrade_band, o.degrade_p, c.seed);
        job.backend = shared_factory(single);
    }
    job.mode = c.mode;
    job.config = c.to_json();

    const fs::path out = o.out.empty() ? c.output_dir / "prediction.rstr" : fs::path(o.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    job.output = out;
    const InferenceResult r = infer_map(job);

    fs::path png = out, summary = out;
    png.replace_extension(".png");
    summary.replace_extension(".summary.json");
    export_class_png(read_class_map(out), scheme, png);
    write_json(r.summary.to_json(), summary);
    std::printf("%zu tiles, %.2f s, %.0f px/s, peak RSS %.1f MiB -> %s\n", r.summary.tiles, r.summary.seconds,
                r.summary.px_per_s, static_cast<double>(r.summary.peak_rss_bytes) / (1 << 20), out.c_str());
    return 0;
}

int cmd_eval(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    apply_common(c, o);
    if (o.pred.empty() || o.truth.empty()) throw_config("--pred and --truth are required");
    const ClassScheme scheme = ClassScheme::land_use9();
    const ConfusionMatrix cm = confusion_streamed(o.pred, o.truth, scheme.size());
    ojson meta;
    meta["prediction"] = o.pred;
    meta["truth"] = o.truth;
    if (o.band) {
        const ClassMap pred = read_class_map(o.pred);
        const ClassMap truth = read_class_map(o.truth);
        const TilePlan plan = plan_tiles(truth.width, truth.height, c.tile);
        meta["boundary_band"] = c.eval_band;
        meta["boundary_accuracy"] = boundary_accuracy(pred, truth, plan, c.eval_band, scheme.size());
    }
    fs::path path = o.out.empty() ? fs::path(o.pred).replace_extension(".report.json") : fs::path(o.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    report(cm, scheme, meta, path);
    std::printf("OA %.6f over %llu pixels -> %s\n", overall_accuracy(cm),
                static_cast<unsigned long long>(cm.total()), path.c_str());
    return 0;
}

int cmd_ablation(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    apply_common(c, o);
    if (o.manifest.empty()) throw_config("--manifest is required");
    const CorpusManifest m = CorpusManifest::load(o.manifest);
    AblationOptions ao;
    ao.train = c.train;
    ao.workers = c.workers;
    ao.band = c.eval_band;
    ao.tiles = c.train.tiles;
    const fs::path dir = o.out_dir.empty() ? c.output_dir / "ablation" : fs::path(o.out_dir);
    ao.work_dir = dir;
    const auto rows = run_ablation(m, ao);
    ojson j;
    j["config"] = c.to_json();
    j["rows"] = ablation_json(rows);
    write_json(j, dir / "ablation.json");
    std::fputs(format_ablation_table(rows).c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lumap: tiled land-use mapping"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* s) { s->add_option("--config", o.config, "experiment JSON"); };
    auto add_workers = [&](CLI::App* s) { s->add_option("--workers", o.workers, "worker threads"); };
    auto add_tiling = [&](CLI::App* s) {
        s->add_option("--tile", o.tile, "tile size");
        s->add_option("--stride", o.stride, "tile stride");
        s->add_option("--pad-mode", o.pad_mode, "mirror, zero or replicate");
        s->add_flag("--no-overlap", o.no_overlap, "stride equal to tile size");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_config(synth);
    add_workers(synth);
    synth->add_option("--out", o.out_dir, "corpus directory");
    synth->add_option("--scenes", o.scenes, "number of scenes");
    synth->add_option("--seed", o.seed, "corpus seed");

    auto* slice = app.add_subcommand("slice", "write a tile plan (and optionally tiles)");
    add_config(slice);
    add_tiling(slice);
    slice->add_option("--image", o.image, "input .rstr")->required();
    slice->add_option("--out", o.out_dir, "output directory");
    slice->add_flag("--dump-tiles", o.dump_tiles, "write every padded tile as .rstr");

    auto* train = app.add_subcommand("train", "train the linear per-pixel model");
    add_config(train);
    train->add_option("--manifest", o.manifest, "corpus manifest.json")->required();
    train->add_option("--mode", o.mode, "lu3 or lu6");
    train->add_option("--seed", o.seed, "training seed");
    train->add_option("--out", o.out, "model path");

    auto* infer = app.add_subcommand("infer", "tiled inference over one image");
    add_config(infer);
    add_workers(infer);
    add_tiling(infer);
    infer->add_option("--image", o.image, "input .rstr")->required();
    infer->add_option("--model", o.model, "linear model file");
    infer->add_option("--mode", o.mode, "lu3 or lu6 (taken from the model for the linear backend)");
    infer->add_option("--manifest", o.manifest, "corpus manifest providing normalisation stats");
    infer->add_option("--backend", o.backend, "linear, oracle or external");
    infer->add_option("--backend-cmd", o.backend_cmd, "command of an external tile backend");
    infer->add_option("--truth", o.truth, "label .rstr for the oracle backend");
    infer->add_option("--degrade-band", o.degrade_band, "edge band of the degraded oracle");
    infer->add_option("--degrade-p", o.degrade_p, "resample probability inside the edge band");
    infer->add_option("--seed", o.seed, "seed for the degraded oracle");
    infer->add_option("--out", o.out, "output label .rstr");
    infer->add_flag("--progress", o.progress, "print per-tile progress to stderr");

    auto* eval = app.add_subcommand("eval", "confusion matrix and accuracies");
    add_config(eval);
    add_tiling(eval);
    eval->add_option("--pred", o.pred, "predicted label .rstr")->required();
    eval->add_option("--truth", o.truth, "reference label .rstr")->required();
    eval->add_option("--band", o.band, "also report accuracy within this distance of tile seams");
    eval->add_option("--out", o.out, "report path (.json and .csv)");

    auto* ablation = app.add_subcommand("ablation", "LU3/LU6 x overlap/no-overlap table");
    add_config(ablation);
    add_workers(ablation);
    ablation->add_option("--manifest", o.manifest, "corpus manifest.json")->required();
    ablation->add_option("--band", o.band, "seam band width");
    ablation->add_option("--out", o.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*slice) return cmd_slice(o);
        if (*train) return cmd_train(o);
        if (*infer) return cmd_infer(o);
        if (*eval) return cmd_eval(o);
        if (*ablation) return cmd_ablation(o);
    } catch (const Error& e) {
        std::fprintf(stderr, "lumap: %s error: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "lumap: io error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "lumap: error: %s\n", e.what());
        return 1;
    }
    return 2;
}

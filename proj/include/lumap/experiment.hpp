#pragma once

// Experiment configuration and the LU3/LU6 x overlap/no-overlap ablation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumap/evaluate.hpp"
#include "lumap/synth.hpp"
#include "lumap/train.hpp"

namespace lumap {

enum class BackendKind { Linear, Oracle, External };

/// JSON document driving every CLI subcommand. Unknown keys are rejected.
struct ExperimentConfig {
    std::filesystem::path output_dir = "lumap_out";
    std::uint64_t seed = 7;
    std::size_t scenes = 20;
    SceneSpec scene;
    TileSpec tile = TileSpec::overlap();
    Mode mode = Mode::LU6;
    TrainConfig train = TrainConfig::desk();
    BackendKind backend = BackendKind::Linear;
    std::string backend_command;
    double backend_timeout_s = 60.0;
    std::size_t workers = 1;
    std::int64_t eval_band = 16;

    /// Parses and validates; throws Config naming the offending key.
    static ExperimentConfig from_json(const nlohmann::ordered_json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    /// Fully resolved configuration, defaults included.
    nlohmann::ordered_json to_json() const;
};

struct AblationRow {
    Mode mode = Mode::LU6;
    bool overlap = true;
    ConfusionMatrix confusion;
    ConfusionMatrix boundary;
    double overall_accuracy = 0.0;
    double boundary_accuracy = 0.0;
};

struct AblationOptions {
    TrainConfig train = TrainConfig::desk();
    std::size_t workers = 1;
    std::int64_t band = 16;
    /// Overlapped geometry; the naive run uses stride = tile.
    TileSpec tiles = TileSpec::make(128, 64);
    /// Where validation predictions go; a temporary directory when empty.
    std::filesystem::path work_dir;
};

/// Trains one model per mode on the training split and evaluates both with
/// overlapped and naive tiling on the validation split. Boundary accuracy
/// is measured on the seams of the naive tiling for every row. Rows are ordered
/// (LU3, overlap), (LU3, no-overlap), (LU6, overlap), (LU6, no-overlap).
std::vector<AblationRow> run_ablation(const CorpusManifest& manifest, const AblationOptions& options);

std::string format_ablation_table(const std::vector<AblationRow>& rows);
nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace lumap

#pragma once

// Memory-bounded tiled inference with center-crop stitching.
//
// The calling thread plans tiles and acts as the single writer; a pool of
// workers pulls tile indices, extracts (mirror-padded) tiles straight from
// the image file, and predicts. Finished tiles pass through a queue bounded
// by the worker count, so at most O(workers) tiles are alive at once. Only
// the center window of each tile reaches the output, and center windows
// partition the scene, so the result is independent of worker count and
// completion order.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lumap/backend.hpp"
#include "lumap/raster.hpp"
#include "lumap/spectral.hpp"
#include "lumap/tiling.hpp"

namespace lumap {

struct InferenceJob {
    std::filesystem::path image;
    Mode mode = Mode::LU6;
    TileSpec spec = TileSpec::overlap();
    BackendFactory backend;
    /// Needed for raw B,G,R,NIR imagery; ignored when the image bands
    /// already are the channel stack of `mode`.
    std::optional<NormStats> norm;
    std::size_t workers = 1;
    /// .rstr label map written through windowed writes; empty for none.
    std::filesystem::path output;
    /// Assemble the map in memory as well (infer_map's return value).
    bool keep_map = true;
    /// Emit "tile i/j done (n/total)" lines on stderr.
    bool progress = false;
    /// Echoed into the run summary.
    nlohmann::ordered_json config;

    void validate() const;
};

struct RunSummary {
    std::size_t tiles = 0;
    double seconds = 0.0;
    double px_per_s = 0.0;
    std::uint64_t pixels = 0;
    std::uint64_t peak_rss_bytes = 0;
    std::size_t workers = 0;
    nlohmann::ordered_json config;

    nlohmann::ordered_json to_json() const;
};

/// Receives each finished tile on the writer thread.
using TileConsumer = std::function<void(std::size_t k, const ClassMap& tile)>;

/// Runs the tiled inference and hands every finished tile to `consume`.
/// The first failure stops the run and is rethrown with its tile id.
RunSummary run_inference(const InferenceJob& job, const TilePlan& plan, const TileConsumer& consume);

/// Assembles center windows from tiles delivered in any order.
class Stitcher {
public:
    explicit Stitcher(const TilePlan& plan);
    void add(std::size_t k, const ClassMap& tile);
    /// Throws Validation naming the first missing tile as (i,j).
    ClassMap finish();

private:
    TilePlan plan_;
    ClassMap out_;
    std::vector<bool> seen_;
};

/// Copies the center window of tile k (size T x T) into `out`.
void write_center(const TilePlan& plan, std::size_t k, const ClassMap& tile, ClassMap& out);

ClassMap stitch(const std::vector<std::pair<std::size_t, ClassMap>>& predictions, const TilePlan& plan);

struct InferenceResult {
    ClassMap map;  // empty when job.keep_map is false
    RunSummary summary;
};

/// End-to-end: plan, extract, predict, stitch; writes job.output if set.
InferenceResult infer_map(const InferenceJob& job);

/// Peak resident set size of this process so far.
std::uint64_t peak_rss_bytes();

}  // namespace lumap

#pragma once

// Normalized-difference indices and the float channel stacks fed to
// classifiers.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumap/raster.hpp"

namespace lumap {

/// LU3 = [B,G,R]; LU6 = [B,G,R,NIR,NDVI,NDWI].
enum class Mode { LU3, LU6 };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);
const std::vector<std::string>& channel_names(Mode mode);
std::size_t channel_count(Mode mode);

/// Band order expected of raw 4-band imagery.
const std::vector<std::string>& raw_band_names();

struct Plane {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::vector<float> values;
};

/// (a - b) / (a + b) where |a + b| > eps, else 0.
Plane normalized_difference(const Plane& a, const Plane& b, double eps = 1e-12);

struct BandRange {
    double low = 0.0;
    double high = 1.0;
    bool operator==(const BandRange&) const = default;
};

/// Per-band percentile references used to scale raw bands into [0, 1].
struct NormStats {
    std::vector<BandRange> bands;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static NormStats from_json(const nlohmann::ordered_json& j);
    bool operator==(const NormStats&) const = default;
};

/// Nearest-rank percentiles of the non-nodata samples of every band; bands
/// whose low and high coincide are widened to [low, low + 1].
NormStats compute_norm_stats(const RasterGrid& grid, double low_pct = 2.0, double high_pct = 98.0);
/// Same, pooling samples over several grids with identical band layout.
NormStats compute_norm_stats(std::span<const RasterGrid* const> grids, double low_pct = 2.0,
                             double high_pct = 98.0);

struct ChannelNorm {
    double offset = 0.0;
    double scale = 1.0;
};

/// Channel-major float planes with names in the fixed public order.
struct ChannelStack {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::vector<std::string> names;
    std::vector<ChannelNorm> norm;
    std::vector<float> data;
    /// Per-pixel validity (1 = valid). Empty means every pixel is valid.
    std::vector<std::uint8_t> valid;

    std::size_t channels() const { return names.size(); }
    std::size_t pixels() const { return width * height; }
    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(data).subspan(c * pixels(), pixels());
    }
    std::span<float> channel(std::size_t c) { return std::span<float>(data).subspan(c * pixels(), pixels()); }
    float at(std::size_t c, std::uint64_t x, std::uint64_t y) const { return data[c * pixels() + y * width + x]; }
    bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
};

/// Builds the classifier input from 4-band B,G,R,NIR imagery. Indices come
/// from the raw bands; raw bands are then scaled with `stats` and clamped
/// to [0, 1]. Pixels where any band equals nodata are zeroed and masked.
ChannelStack build_channel_stack(const RasterGrid& grid, Mode mode, const NormStats& stats);

/// Wraps a grid whose bands already are the stack for `mode` (same names
/// and order) without rescaling.
ChannelStack stack_passthrough(const RasterGrid& grid, Mode mode);

/// True when the grid's band names equal the channel names of `mode`.
bool is_prebuilt_stack(const RasterHeader& header, Mode mode);

}  // namespace lumap

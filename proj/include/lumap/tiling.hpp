#pragma once

// Overlapped tile geometry with mirror padding.
//
// A scene of width W is cut into tiles_x = ceil(W / S) tiles of size T whose
// origins sit S apart in a padded frame with P = (T - S) / 2 pixels of fill on
// the leading edge. Tile j spans original columns [j*S - P, j*S - P + T); its
// center window [j*S, (j+1)*S) clipped to W is the only part ever written to
// a stitched output. Center windows partition the scene exactly.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lumap/raster.hpp"
#include "lumap/spectral.hpp"

namespace lumap {

enum class PadMode { Mirror, Zero, Replicate };

std::string_view to_string(PadMode mode);
PadMode parse_pad_mode(std::string_view name);

struct TileSpec {
    std::int64_t tile = 640;
    std::int64_t stride = 320;
    std::int64_t pad = 160;
    PadMode pad_mode = PadMode::Mirror;

    /// Spec with pad derived as (tile - stride) / 2.
    static TileSpec make(std::int64_t tile, std::int64_t stride, PadMode mode = PadMode::Mirror);
    /// 640 px tiles with 50% overlap and 160 px padding.
    static TileSpec overlap() { return make(640, 320); }
    /// Naive tiling: stride == tile, no padding.
    static TileSpec no_overlap(std::int64_t tile = 640) { return make(tile, tile); }

    void validate() const;
    nlohmann::ordered_json to_json() const;

    bool operator==(const TileSpec&) const = default;
};

struct TileIndex {
    std::size_t row = 0;  // i
    std::size_t col = 0;  // j
};

struct TilePlan {
    TileSpec spec;
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::uint64_t tiles_x = 0;
    std::uint64_t tiles_y = 0;
    std::uint64_t padded_w = 0;
    std::uint64_t padded_h = 0;

    std::size_t count() const { return tiles_x * tiles_y; }
    TileIndex index(std::size_t k) const;
    /// Tile extent in original coordinates (may start negative).
    Window tile_window(std::size_t k) const;

    nlohmann::ordered_json to_json() const;
};

TilePlan plan_tiles(std::uint64_t width, std::uint64_t height, const TileSpec& spec);

/// Center window of tile k in original coordinates, clipped to the extent.
/// In tile-local coordinates it starts at (pad, pad).
Window center_window(const TilePlan& plan, std::size_t k);

/// Source index that fills padded position `i` along an axis of length n:
/// mirror reflects once without repeating the edge sample and then clamps;
/// replicate clamps; zero returns -1.
std::int64_t source_index(std::int64_t i, std::int64_t n, PadMode mode);

/// Per-axis source indices for positions [start, start + len).
std::vector<std::int64_t> axis_indices(std::int64_t start, std::int64_t len, std::int64_t n, PadMode mode);

ChannelStack extract_tile(const ChannelStack& source, const TilePlan& plan, std::size_t k);
ClassMap extract_tile(const ClassMap& source, const TilePlan& plan, std::size_t k);
RasterGrid extract_tile(const RasterGrid& source, const TilePlan& plan, std::size_t k);
/// Streams only the needed source rows/columns from disk.
RasterGrid extract_tile(const RasterReader& source, const TilePlan& plan, std::size_t k);

}  // namespace lumap

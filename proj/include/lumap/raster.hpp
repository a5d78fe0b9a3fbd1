#pragma once

// Grid types and the single-file .rstr raster format.
//
// File layout (all integers little-endian):
//   "RSTR0001"                8 bytes magic
//   u32 header length         N
//   N bytes UTF-8 JSON        {width, height, bands, dtype, nodata,
//                              geotransform, band_names}
//   payload                   band-sequential, row-major samples
//
// The header is the only source of shape truth; readers always check the
// payload size against it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lumap {

inline constexpr std::uint8_t kIgnore = 255;
inline constexpr std::string_view kRasterMagic = "RSTR0001";

enum class DType { U8, U16, F32 };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType dtype);

/// (origin_x, pixel_w, row_rot, origin_y, col_rot, -pixel_h), meters.
using GeoTransform = std::array<double, 6>;
inline constexpr GeoTransform kUnitGeoTransform{0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

/// Geotransform whose origin sits at pixel (dx, dy) of `gt`.
GeoTransform translate(const GeoTransform& gt, std::int64_t dx, std::int64_t dy);

/// Pixel rectangle. Offsets may be negative in padded coordinates.
struct Window {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    std::int64_t w = 0;
    std::int64_t h = 0;

    std::int64_t x1() const { return x0 + w; }
    std::int64_t y1() const { return y0 + h; }
    std::int64_t area() const { return w * h; }
    bool contains(std::int64_t x, std::int64_t y) const {
        return x >= x0 && x < x1() && y >= y0 && y < y1();
    }
    bool inside(std::uint64_t width, std::uint64_t height) const;

    bool operator==(const Window&) const = default;
};

struct RasterHeader {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    DType dtype = DType::U8;
    std::optional<double> nodata;
    GeoTransform geotransform = kUnitGeoTransform;
    std::vector<std::string> band_names;

    std::size_t bands() const { return band_names.size(); }
    std::uint64_t samples() const { return width * height * bands(); }
    std::uint64_t payload_bytes() const { return samples() * dtype_size(dtype); }

    /// Throws Validation when geometry or georeferencing is inconsistent.
    void validate() const;

    bool operator==(const RasterHeader&) const = default;
};

/// Multi-band grid, band-sequential row-major.
struct RasterGrid : RasterHeader {
    using Samples = std::variant<std::vector<std::uint8_t>,
                                 std::vector<std::uint16_t>,
                                 std::vector<float>>;
    Samples data;

    static RasterGrid zeros(const RasterHeader& header);

    template <class T>
    std::span<const T> samples_as() const { return std::get<std::vector<T>>(data); }
    template <class T>
    std::span<T> samples_as() { return std::get<std::vector<T>>(data); }

    template <class T>
    std::span<const T> band(std::size_t b) const {
        const std::size_t n = width * height;
        return samples_as<T>().subspan(b * n, n);
    }
    template <class T>
    std::span<T> band(std::size_t b) {
        const std::size_t n = width * height;
        return samples_as<T>().subspan(b * n, n);
    }

    std::size_t index(std::size_t b, std::uint64_t x, std::uint64_t y) const {
        return (b * height + y) * width + x;
    }

    /// Sample converted to double regardless of dtype.
    double value(std::size_t b, std::uint64_t x, std::uint64_t y) const;
    /// Stores `v` converted to dtype (no range check).
    void set_value(std::size_t b, std::uint64_t x, std::uint64_t y, double v);

    std::size_t data_size() const;
    const void* raw() const;
    void* raw();

    /// Checks header validity and that the sample vector matches it.
    void validate() const;

    /// Bit-exact comparison, NaN payloads included.
    bool operator==(const RasterGrid& other) const;
};

/// Copies a window (fully inside the grid) out of an in-memory grid.
RasterGrid crop(const RasterGrid& grid, const Window& window);

/// Single-band label grid. Values are class ids or kIgnore.
struct ClassMap {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    GeoTransform geotransform = kUnitGeoTransform;
    std::vector<std::uint8_t> labels;

    static ClassMap filled(std::uint64_t width, std::uint64_t height, std::uint8_t value);

    std::uint8_t at(std::uint64_t x, std::uint64_t y) const { return labels[y * width + x]; }
    std::uint8_t& at(std::uint64_t x, std::uint64_t y) { return labels[y * width + x]; }

    bool operator==(const ClassMap&) const = default;
};

ClassMap crop(const ClassMap& map, const Window& window);

/// A class map as a one-band u8 raster ("label", nodata = kIgnore) and back.
RasterGrid to_raster(const ClassMap& map);
ClassMap to_class_map(const RasterGrid& grid);

void write_raster(const RasterGrid& grid, const std::filesystem::path& path);
RasterGrid read_raster(const std::filesystem::path& path);
RasterGrid read_window(const std::filesystem::path& path, const Window& window);

void write_class_map(const ClassMap& map, const std::filesystem::path& path);
ClassMap read_class_map(const std::filesystem::path& path);

/// Open .rstr file for windowed reads. read_window is safe to call from
/// several threads at once (positional reads, no shared cursor).
class RasterReader {
public:
    explicit RasterReader(const std::filesystem::path& path);
    ~RasterReader();
    RasterReader(const RasterReader&) = delete;
    RasterReader& operator=(const RasterReader&) = delete;
    RasterReader(RasterReader&& other) noexcept;
    RasterReader& operator=(RasterReader&& other) noexcept;

    const RasterHeader& header() const { return header_; }
    const std::filesystem::path& path() const { return path_; }

    RasterGrid read_window(const Window& window) const;
    RasterGrid read_all() const;

private:
    std::filesystem::path path_;
    int fd_ = -1;
    RasterHeader header_;
    std::uint64_t payload_offset_ = 0;
};

/// Creates a .rstr file of the given shape (zero payload) and accepts
/// windowed writes. One writer per file.
class RasterWriter {
public:
    RasterWriter(const std::filesystem::path& path, const RasterHeader& header);
    ~RasterWriter();
    RasterWriter(const RasterWriter&) = delete;
    RasterWriter& operator=(const RasterWriter&) = delete;

    const RasterHeader& header() const { return header_; }

    /// Writes `block` with its top-left corner at (x0, y0).
    void write_window(const RasterGrid& block, std::uint64_t x0, std::uint64_t y0);
    /// Writes rows [y0, y0+h) of the window [x0, x0+w) from a u8 buffer of w*h
    /// samples. Single-band u8 files only.
    void write_labels(std::span<const std::uint8_t> labels, const Window& window);

    void close();

private:
    std::filesystem::path path_;
    int fd_ = -1;
    RasterHeader header_;
    std::uint64_t payload_offset_ = 0;
};

/// FNV-1a 64 of a file's bytes, for reproducibility checks.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace lumap

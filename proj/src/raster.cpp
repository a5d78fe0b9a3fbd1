#include "lumap/raster.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "lumap/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "raster payloads are written in host order and must be little-endian");

namespace lumap {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kPreambleBytes = 12;  // magic + u32 header length

std::string errno_text() { return std::strerror(errno); }

void pread_exact(int fd, void* dst, std::size_t n, std::uint64_t offset,
                 const std::filesystem::path& path) {
    auto* p = static_cast<char*>(dst);
    while (n > 0) {
        const ssize_t got = ::pread(fd, p, n, static_cast<off_t>(offset));
        if (got < 0) {
            if (errno == EINTR) continue;
            throw_io("read failed on " + path.string() + ": " + errno_text());
        }
        if (got == 0) throw_io("truncated payload in " + path.string());
        p += got;
        n -= static_cast<std::size_t>(got);
        offset += static_cast<std::uint64_t>(got);
    }
}

void pwrite_exact(int fd, const void* src, std::size_t n, std::uint64_t offset,
                  const std::filesystem::path& path) {
    const auto* p = static_cast<const char*>(src);
    while (n > 0) {
        const ssize_t put = ::pwrite(fd, p, n, static_cast<off_t>(offset));
        if (put < 0) {
            if (errno == EINTR) continue;
            throw_io("write failed on " + path.string() + ": " + errno_text());
        }
        p += put;
        n -= static_cast<std::size_t>(put);
        offset += static_cast<std::uint64_t>(put);
    }
}

std::string header_json(const RasterHeader& h) {
    ojson j;
    j["width"] = h.width;
    j["height"] = h.height;
    j["bands"] = h.bands();
    j["dtype"] = std::string(to_string(h.dtype));
    j["nodata"] = h.nodata ? ojson(*h.nodata) : ojson(nullptr);
    j["geotransform"] = h.geotransform;
    j["band_names"] = h.band_names;
    return j.dump();
}

RasterHeader parse_header(const std::string& text, const std::filesystem::path& path) {
    RasterHeader h;
    try {
        const auto j = ojson::parse(text);
        h.width = j.at("width").get<std::uint64_t>();
        h.height = j.at("height").get<std::uint64_t>();
        h.dtype = parse_dtype(j.at("dtype").get<std::string>());
        if (!j.at("nodata").is_null()) h.nodata = j.at("nodata").get<double>();
        h.geotransform = j.at("geotransform").get<GeoTransform>();
        h.band_names = j.at("band_names").get<std::vector<std::string>>();
        if (j.at("bands").get<std::size_t>() != h.band_names.size())
            throw_io("header of " + path.string() + ": bands != len(band_names)");
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed header in " + path.string() + ": " + e.what());
    }
    h.validate();
    return h;
}

struct Fd {
    int fd = -1;
    explicit Fd(int f) : fd(f) {}
    ~Fd() {
        if (fd >= 0) ::close(fd);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    int release() { return std::exchange(fd, -1); }
};

/// Reads and validates the preamble and header; returns payload offset.
std::uint64_t open_header(int fd, const std::filesystem::path& path, RasterHeader& out) {
    char pre[kPreambleBytes];
    struct stat st {};
    if (::fstat(fd, &st) != 0) throw_io("stat failed on " + path.string() + ": " + errno_text());
    const auto file_size = static_cast<std::uint64_t>(st.st_size);
    if (file_size < kPreambleBytes) throw_io("bad magic in " + path.string() + " (file too short)");
    pread_exact(fd, pre, kPreambleBytes, 0, path);
    if (std::string_view(pre, 8) != kRasterMagic) throw_io("bad magic in " + path.string());
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, pre + 8, 4);
    if (kPreambleBytes + hlen > file_size) throw_io("truncated header in " + path.string());
    std::string text(hlen, '\0');
    pread_exact(fd, text.data(), hlen, kPreambleBytes, path);
    out = parse_header(text, path);
    const std::uint64_t offset = kPreambleBytes + hlen;
    const std::uint64_t expected = offset + out.payload_bytes();
    if (file_size < expected)
        throw_io("truncated payload in " + path.string() + ": expected " +
                 std::to_string(out.payload_bytes()) + " bytes, found " +
                 std::to_string(file_size - offset));
    if (file_size > expected)
        throw_io("header/payload size mismatch in " + path.string() + ": expected " +
                 std::to_string(out.payload_bytes()) + " payload bytes, found " +
                 std::to_string(file_size - offset));
    return offset;
}

template <class T>
std::vector<T>& ensure_samples(RasterGrid::Samples& s) {
    return std::get<std::vector<T>>(s);
}

}  // namespace

std::string_view to_string(DType dtype) {
    switch (dtype) {
        case DType::U8: return "u8";
        case DType::U16: return "u16";
        case DType::F32: return "f32";
    }
    return "?";
}

DType parse_dtype(std::string_view name) {
    if (name == "u8") return DType::U8;
    if (name == "u16") return DType::U16;
    if (name == "f32") return DType::F32;
    throw_io("unsupported dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::U8: return 1;
        case DType::U16: return 2;
        case DType::F32: return 4;
    }
    return 0;
}

GeoTransform translate(const GeoTransform& gt, std::int64_t dx, std::int64_t dy) {
    GeoTransform out = gt;
    const auto fx = static_cast<double>(dx);
    const auto fy = static_cast<double>(dy);
    out[0] = gt[0] + fx * gt[1] + fy * gt[2];
    out[3] = gt[3] + fx * gt[4] + fy * gt[5];
    return out;
}

bool Window::inside(std::uint64_t width, std::uint64_t height) const {
    return w > 0 && h > 0 && x0 >= 0 && y0 >= 0 &&
           static_cast<std::uint64_t>(x1()) <= width && static_cast<std::uint64_t>(y1()) <= height;
}

void RasterHeader::validate() const {
    if (width == 0 || height == 0) throw_validation("raster must be at least 1x1");
    if (band_names.empty()) throw_validation("raster must have at least one band");
    if (!(geotransform[1] > 0.0) || !(-geotransform[5] > 0.0))
        throw_validation("geotransform pixel size must be positive");
    if (nodata) {
        const double v = *nodata;
        switch (dtype) {
            case DType::U8:
                if (v < 0 || v > 255 || v != std::floor(v)) throw_validation("nodata outside u8 domain");
                break;
            case DType::U16:
                if (v < 0 || v > 65535 || v != std::floor(v)) throw_validation("nodata outside u16 domain");
                break;
            case DType::F32:
                if (!std::isfinite(v)) throw_validation("f32 nodata must be finite");
                break;
        }
    }
}

RasterGrid RasterGrid::zeros(const RasterHeader& header) {
    RasterGrid g;
    static_cast<RasterHeader&>(g) = header;
    const std::size_t n = header.samples();
    switch (header.dtype) {
        case DType::U8: g.data = std::vector<std::uint8_t>(n, 0); break;
        case DType::U16: g.data = std::vector<std::uint16_t>(n, 0); break;
        case DType::F32: g.data = std::vector<float>(n, 0.0f); break;
    }
    return g;
}

double RasterGrid::value(std::size_t b, std::uint64_t x, std::uint64_t y) const {
    const std::size_t i = index(b, x, y);
    return std::visit([i](const auto& v) { return static_cast<double>(v[i]); }, data);
}

void RasterGrid::set_value(std::size_t b, std::uint64_t x, std::uint64_t y, double v) {
    const std::size_t i = index(b, x, y);
    std::visit([i, v](auto& vec) {
        using T = typename std::decay_t<decltype(vec)>::value_type;
        vec[i] = static_cast<T>(v);
    }, data);
}

std::size_t RasterGrid::data_size() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

const void* RasterGrid::raw() const {
    return std::visit([](const auto& v) { return static_cast<const void*>(v.data()); }, data);
}

void* RasterGrid::raw() {
    return std::visit([](auto& v) { return static_cast<void*>(v.data()); }, data);
}

void RasterGrid::validate() const {
    RasterHeader::validate();
    const bool type_ok = (dtype == DType::U8 && std::holds_alternative<std::vector<std::uint8_t>>(data)) ||
                         (dtype == DType::U16 && std::holds_alternative<std::vector<std::uint16_t>>(data)) ||
                         (dtype == DType::F32 && std::holds_alternative<std::vector<float>>(data));
    if (!type_ok) throw_validation("raster sample storage does not match dtype");
    if (data_size() != samples())
        throw_validation("raster data length " + std::to_string(data_size()) +
                         " != width*height*bands " + std::to_string(samples()));
}

bool RasterGrid::operator==(const RasterGrid& other) const {
    if (!(static_cast<const RasterHeader&>(*this) == static_cast<const RasterHeader&>(other))) return false;
    if (data.index() != other.data.index() || data_size() != other.data_size()) return false;
    return std::memcmp(raw(), other.raw(), data_size() * dtype_size(dtype)) == 0;
}

RasterGrid crop(const RasterGrid& grid, const Window& window) {
    if (!window.inside(grid.width, grid.height)) throw_validation("crop window out of bounds");
    RasterHeader h = grid;
    h.width = static_cast<std::uint64_t>(window.w);
    h.height = static_cast<std::uint64_t>(window.h);
    h.geotransform = translate(grid.geotransform, window.x0, window.y0);
    RasterGrid out = RasterGrid::zeros(h);
    const std::size_t sz = dtype_size(grid.dtype);
    const auto* src = static_cast<const char*>(grid.raw());
    auto* dst = static_cast<char*>(out.raw());
    for (std::size_t b = 0; b < grid.bands(); ++b) {
        for (std::int64_t y = 0; y < window.h; ++y) {
            const std::size_t si = grid.index(b, static_cast<std::uint64_t>(window.x0),
                                              static_cast<std::uint64_t>(window.y0 + y));
            const std::size_t di = out.index(b, 0, static_cast<std::uint64_t>(y));
            std::memcpy(dst + di * sz, src + si * sz, static_cast<std::size_t>(window.w) * sz);
        }
    }
    return out;
}

ClassMap ClassMap::filled(std::uint64_t width, std::uint64_t height, std::uint8_t value) {
    ClassMap m;
    m.width = width;
    m.height = height;
    m.labels.assign(width * height, value);
    return m;
}

ClassMap crop(const ClassMap& map, const Window& window) {
    if (!window.inside(map.width, map.height)) throw_validation("crop window out of bounds");
    ClassMap out = ClassMap::filled(static_cast<std::uint64_t>(window.w), static_cast<std::uint64_t>(window.h), 0);
    out.geotransform = translate(map.geotransform, window.x0, window.y0);
    for (std::int64_t y = 0; y < window.h; ++y) {
        const auto* src = map.labels.data() + static_cast<std::size_t>(window.y0 + y) * map.width +
                          static_cast<std::size_t>(window.x0);
        std::copy_n(src, window.w, out.labels.data() + static_cast<std::size_t>(y) * out.width);
    }
    return out;
}

RasterGrid to_raster(const ClassMap& map) {
    RasterGrid g;
    g.width = map.width;
    g.height = map.height;
    g.dtype = DType::U8;
    g.nodata = static_cast<double>(kIgnore);
    g.geotransform = map.geotransform;
    g.band_names = {"label"};
    g.data = map.labels;
    return g;
}

ClassMap to_class_map(const RasterGrid& grid) {
    if (grid.bands() != 1 || grid.dtype != DType::U8)
        throw_validation("class map raster must be single-band u8");
    ClassMap m;
    m.width = grid.width;
    m.height = grid.height;
    m.geotransform = grid.geotransform;
    m.labels = std::get<std::vector<std::uint8_t>>(grid.data);
    return m;
}

void write_raster(const RasterGrid& grid, const std::filesystem::path& path) {
    grid.validate();
    const std::string header = header_json(grid);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open " + path.string() + " for writing");
    const auto hlen = static_cast<std::uint32_t>(header.size());
    out.write(kRasterMagic.data(), static_cast<std::streamsize>(kRasterMagic.size()));
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(grid.raw()), static_cast<std::streamsize>(grid.payload_bytes()));
    out.flush();
    if (!out) throw_io("write failed on " + path.string());
}

RasterGrid read_raster(const std::filesystem::path& path) {
    return RasterReader(path).read_all();
}

RasterGrid read_window(const std::filesystem::path& path, const Window& window) {
    return RasterReader(path).read_window(window);
}

void write_class_map(const ClassMap& map, const std::filesystem::path& path) {
    write_raster(to_raster(map), path);
}

ClassMap read_class_map(const std::filesystem::path& path) {
    return to_class_map(read_raster(path));
}

RasterReader::RasterReader(const std::filesystem::path& path) : path_(path) {
    Fd f(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (f.fd < 0) throw_io("cannot open " + path.string() + ": " + errno_text());
    payload_offset_ = open_header(f.fd, path, header_);
    fd_ = f.release();
}

RasterReader::~RasterReader() {
    if (fd_ >= 0) ::close(fd_);
}

RasterReader::RasterReader(RasterReader&& other) noexcept
    : path_(std::move(other.path_)),
      fd_(std::exchange(other.fd_, -1)),
      header_(std::move(other.header_)),
      payload_offset_(other.payload_offset_) {}

RasterReader& RasterReader::operator=(RasterReader&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        path_ = std::move(other.path_);
        fd_ = std::exchange(other.fd_, -1);
        header_ = std::move(other.header_);
        payload_offset_ = other.payload_offset_;
    }
    return *this;
}

RasterGrid RasterReader::read_window(const Window& window) const {
    if (!window.inside(header_.width, header_.height))
        throw_validation("window (" + std::to_string(window.x0) + "," + std::to_string(window.y0) + " " +
                         std::to_string(window.w) + "x" + std::to_string(window.h) +
                         ") out of bounds for " + std::to_string(header_.width) + "x" +
                         std::to_string(header_.height) + " raster " + path_.string());
    RasterHeader h = header_;
    h.width = static_cast<std::uint64_t>(window.w);
    h.height = static_cast<std::uint64_t>(window.h);
    h.geotransform = translate(header_.geotransform, window.x0, window.y0);
    RasterGrid out = RasterGrid::zeros(h);
    const std::size_t sz = dtype_size(h.dtype);
    auto* dst = static_cast<char*>(out.raw());
    const bool full_rows = static_cast<std::uint64_t>(window.w) == header_.width;
    for (std::size_t b = 0; b < h.bands(); ++b) {
        if (full_rows) {
            const std::uint64_t src = ((b * header_.height + static_cast<std::uint64_t>(window.y0)) * header_.width) * sz;
            pread_exact(fd_, dst + out.index(b, 0, 0) * sz, h.width * h.height * sz,
                        payload_offset_ + src, path_);
            continue;
        }
        for (std::int64_t y = 0; y < window.h; ++y) {
            const std::uint64_t row = b * header_.height + static_cast<std::uint64_t>(window.y0 + y);
            const std::uint64_t src = (row * header_.width + static_cast<std::uint64_t>(window.x0)) * sz;
            pread_exact(fd_, dst + out.index(b, 0, static_cast<std::uint64_t>(y)) * sz,
                        static_cast<std::size_t>(window.w) * sz, payload_offset_ + src, path_);
        }
    }
    return out;
}

RasterGrid RasterReader::read_all() const {
    return read_window(Window{0, 0, static_cast<std::int64_t>(header_.width),
                              static_cast<std::int64_t>(header_.height)});
}

RasterWriter::RasterWriter(const std::filesystem::path& path, const RasterHeader& header)
    : path_(path), header_(header) {
    header_.validate();
    Fd f(::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (f.fd < 0) throw_io("cannot create " + path.string() + ": " + errno_text());
    const std::string text = header_json(header_);
    const auto hlen = static_cast<std::uint32_t>(text.size());
    std::string pre(kRasterMagic);
    pre.append(reinterpret_cast<const char*>(&hlen), 4);
    pre += text;
    pwrite_exact(f.fd, pre.data(), pre.size(), 0, path);
    payload_offset_ = pre.size();
    if (::ftruncate(f.fd, static_cast<off_t>(payload_offset_ + header_.payload_bytes())) != 0)
        throw_io("cannot size " + path.string() + ": " + errno_text());
    fd_ = f.release();
}

RasterWriter::~RasterWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void RasterWriter::write_window(const RasterGrid& block, std::uint64_t x0, std::uint64_t y0) {
    if (fd_ < 0) throw_io("write to closed raster " + path_.string());
    if (block.dtype != header_.dtype || block.bands() != header_.bands())
        throw_validation("block dtype/bands do not match " + path_.string());
    const Window w{static_cast<std::int64_t>(x0), static_cast<std::int64_t>(y0),
                   static_cast<std::int64_t>(block.width), static_cast<std::int64_t>(block.height)};
    if (!w.inside(header_.width, header_.height)) throw_validation("write window out of bounds for " + path_.string());
    const std::size_t sz = dtype_size(header_.dtype);
    const auto* src = static_cast<const char*>(block.raw());
    for (std::size_t b = 0; b < header_.bands(); ++b) {
        for (std::uint64_t y = 0; y < block.height; ++y) {
            const std::uint64_t row = b * header_.height + y0 + y;
            const std::uint64_t off = (row * header_.width + x0) * sz;
            pwrite_exact(fd_, src + block.index(b, 0, y) * sz, block.width * sz, payload_offset_ + off, path_);
        }
    }
}

void RasterWriter::write_labels(std::span<const std::uint8_t> labels, const Window& window) {
    if (fd_ < 0) throw_io("write to closed raster " + path_.string());
    if (header_.dtype != DType::U8 || header_.bands() != 1)
        throw_validation("write_labels needs a single-band u8 raster");
    if (!window.inside(header_.width, header_.height)) throw_validation("write window out of bounds for " + path_.string());
    if (labels.size() != static_cast<std::size_t>(window.area())) throw_validation("label buffer size != window area");
    for (std::int64_t y = 0; y < window.h; ++y) {
        const std::uint64_t off = static_cast<std::uint64_t>(window.y0 + y) * header_.width +
                                  static_cast<std::uint64_t>(window.x0);
        pwrite_exact(fd_, labels.data() + y * window.w, static_cast<std::size_t>(window.w),
                     payload_offset_ + off, path_);
    }
}

void RasterWriter::close() {
    if (fd_ >= 0) {
        const int rc = ::close(fd_);
        fd_ = -1;
        if (rc != 0) throw_io("close failed on " + path_.string() + ": " + errno_text());
    }
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace lumap

#include <png.h>

#include <cstring>
#include <vector>

#include "lumap/class_scheme.hpp"
#include "lumap/error.hpp"

namespace lumap {

void export_class_png(const ClassMap& map, const ClassScheme& scheme, const std::filesystem::path& path) {
    scheme.validate();
    check_labels(map, scheme.size());
    std::vector<std::uint8_t> rgb(map.labels.size() * 3, 0);
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        const std::uint8_t v = map.labels[i];
        if (v == kIgnore) continue;
        const Rgb& c = scheme.classes[v].color;
        rgb[3 * i + 0] = c[0];
        rgb[3 * i + 1] = c[1];
        rgb[3 * i + 2] = c[2];
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(map.width);
    image.height = static_cast<png_uint_32>(map.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw_io("PNG export to " + path.string() + " failed: " + image.message);
}

}  // namespace lumap

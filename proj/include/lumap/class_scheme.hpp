#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumap/raster.hpp"

namespace lumap {

using Rgb = std::array<std::uint8_t, 3>;

struct ClassInfo {
    std::uint8_t id = 0;
    std::string name;
    Rgb color{0, 0, 0};

    bool operator==(const ClassInfo&) const = default;
};

/// Ordered class list; ids are 0..K-1, names unique, 2 <= K <= 255.
struct ClassScheme {
    std::vector<ClassInfo> classes;

    std::size_t size() const { return classes.size(); }
    void validate() const;

    /// The nine land-use classes of the GF-1 Guangdong labels, in label order.
    static ClassScheme land_use9();

    nlohmann::ordered_json to_json() const;
    static ClassScheme from_json(const nlohmann::ordered_json& j);

    bool operator==(const ClassScheme&) const = default;
};

/// Ids of the default scheme.
namespace land_use {
inline constexpr std::uint8_t kCultivated = 0;
inline constexpr std::uint8_t kGarden = 1;
inline constexpr std::uint8_t kForest = 2;
inline constexpr std::uint8_t kGrass = 3;
inline constexpr std::uint8_t kWater = 4;
inline constexpr std::uint8_t kResidential = 5;
inline constexpr std::uint8_t kRoad = 6;
inline constexpr std::uint8_t kBare = 7;
inline constexpr std::uint8_t kAgriFacility = 8;
}  // namespace land_use

/// Throws Validation if any label is >= K and not kIgnore.
void check_labels(const ClassMap& map, std::size_t num_classes);

/// 8-bit RGB PNG, one class color per pixel, kIgnore drawn black.
void export_class_png(const ClassMap& map, const ClassScheme& scheme, const std::filesystem::path& path);

}  // namespace lumap

#pragma once

// Seeded synthetic 4-band scenes with pixel-exact ground truth.
//
// Scenes are painted from "materials", each with a (B,G,R,NIR) mean and a
// white-noise sigma, and each mapped to one land-use class. The default
// material set builds in three spectral confusions that only the NIR band
// (and the indices derived from it) can resolve:
//   water vs building shadow   same B,G,R; NIR(water) << NIR(shadow)
//   grass vs forest            same B,G,R; different NIR, hence NDVI
//   bare land vs residential   same bright, noisy B,G,R; different NIR
// Cultivated and garden land form a fourth such pair.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumap/class_scheme.hpp"
#include "lumap/raster.hpp"
#include "lumap/spectral.hpp"

namespace lumap {

struct Material {
    std::string name;
    std::uint8_t label = 0;
    std::array<double, 4> mean{};  // B, G, R, NIR in sensor counts
    double sigma = 0.0;
};

/// Indices into SceneSpec::materials for the default material set.
namespace material {
inline constexpr std::uint8_t kCultivated = 0;
inline constexpr std::uint8_t kGarden = 1;
inline constexpr std::uint8_t kForest = 2;
inline constexpr std::uint8_t kGrass = 3;
inline constexpr std::uint8_t kWater = 4;
inline constexpr std::uint8_t kRoof = 5;
inline constexpr std::uint8_t kRoad = 6;
inline constexpr std::uint8_t kBare = 7;
inline constexpr std::uint8_t kAgriFacility = 8;
inline constexpr std::uint8_t kShadow = 9;
}  // namespace material

inline constexpr double kSensorMax = 1023.0;  // 10-bit counts

struct SceneSpec {
    std::uint64_t width = 512;
    std::uint64_t height = 512;
    ClassScheme scheme = ClassScheme::land_use9();
    std::vector<Material> materials = default_materials();
    /// Background Voronoi cells, then overlaid shapes.
    std::size_t regions = 10;
    std::size_t rectangles = 10;
    std::size_t blobs = 8;
    std::size_t roads = 3;
    std::size_t buildings = 14;
    /// Materials that background cells, rectangles and blobs draw from.
    std::vector<std::uint8_t> background_materials{material::kCultivated, material::kGarden, material::kForest,
                                                   material::kGrass, material::kBare};
    std::vector<std::uint8_t> rectangle_materials{material::kCultivated, material::kGarden, material::kBare,
                                                  material::kAgriFacility, material::kGrass};
    std::vector<std::uint8_t> blob_materials{material::kWater, material::kForest, material::kGrass};
    std::uint64_t seed = 0;

    static std::vector<Material> default_materials();

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

struct Scene {
    RasterGrid image;                     // u16, bands B,G,R,NIR
    ClassMap labels;
    std::vector<std::uint8_t> materials;  // material index per pixel
};

/// Deterministic in spec.seed.
Scene generate_scene(const SceneSpec& spec);

struct CorpusScene {
    std::string image;   // relative to the manifest directory
    std::string labels;
    std::string split;   // "train" or "val"
};

struct CorpusManifest {
    std::filesystem::path dir;  // where the manifest lives; not serialized
    std::vector<CorpusScene> scenes;
    NormStats norm_stats;
    ClassScheme class_scheme;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> class_histogram;
    nlohmann::ordered_json scene_spec;

    std::filesystem::path image_path(std::size_t i) const { return dir / scenes[i].image; }
    std::filesystem::path labels_path(std::size_t i) const { return dir / scenes[i].labels; }
    std::vector<std::size_t> split_indices(const std::string& split) const;

    nlohmann::ordered_json to_json() const;
    void save(const std::filesystem::path& path) const;
    static CorpusManifest load(const std::filesystem::path& path);
};

/// Number of validation scenes for a corpus of n: ceil(5% of n).
std::size_t validation_count(std::size_t n_scenes);

/// Writes n scenes + labels under `dir` and a manifest.json. Scene i uses
/// seed hash(seed, i); the split is scene-level. Output does not depend on
/// `workers`.
CorpusManifest generate_corpus(const SceneSpec& tmpl, std::size_t n_scenes, std::uint64_t seed,
                               const std::filesystem::path& dir, std::size_t workers = 1);

}  // namespace lumap

#pragma once

// Per-pixel softmax regression, the desk-scale stand-in for a deep
// segmentation network. Features per pixel: the C input channels, their
// 3x3 box means (zero outside the tile), and a bias term.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "lumap/backend.hpp"
#include "lumap/spectral.hpp"

namespace lumap {

inline constexpr int kFeatureVersion = 1;

inline std::size_t feature_count(std::size_t channels) { return 2 * channels + 1; }

struct LinearModel {
    std::size_t classes = 0;
    std::size_t channels = 0;
    Mode mode = Mode::LU6;
    NormStats norm;
    /// classes x feature_count(channels), row-major.
    std::vector<float> weights;

    std::size_t features() const { return feature_count(channels); }
    void validate() const;

    /// u32 LE header length + JSON header + f32 LE weights.
    void save(const std::filesystem::path& path) const;
    static LinearModel load(const std::filesystem::path& path);

    bool operator==(const LinearModel&) const = default;
};

/// Pixel-major feature matrix (pixels x feature_count).
std::vector<float> pixel_features(const ChannelStack& tile);

/// Mean cross-entropy over pixels whose label is not kIgnore. When `grad` is
/// non-empty it receives d(loss)/d(weights). Returns 0 with a zero gradient
/// when every pixel is ignored. `counted` (optional) receives the number of
/// pixels that contributed.
double cross_entropy(std::span<const double> weights, std::size_t classes, std::span<const float> features,
                     std::span<const std::uint8_t> labels, std::span<double> grad, std::size_t* counted = nullptr);

/// Row-wise softmax probabilities (pixels x classes).
std::vector<double> softmax_probabilities(std::span<const double> weights, std::size_t classes,
                                          std::span<const float> features);

/// Argmax labels; masked pixels become kIgnore.
ClassMap predict_linear(const LinearModel& model, const ChannelStack& tile);

std::shared_ptr<Backend> make_linear_backend(LinearModel model);

}  // namespace lumap

#pragma once

// Confusion-matrix accuracy assessment.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "lumap/class_scheme.hpp"
#include "lumap/raster.hpp"
#include "lumap/tiling.hpp"

namespace lumap {

/// counts[t * K + p] = pixels of truth t predicted as p. Pixels where
/// either map holds kIgnore are not counted.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
    std::uint64_t total() const;
    std::uint64_t correct() const;

    /// Elementwise sum; matrices must agree on K.
    ConfusionMatrix& merge(const ConfusionMatrix& other);

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const ClassMap& pred, const ClassMap& truth, std::size_t num_classes);

/// Accumulates block by block from two .rstr label maps; never holds more
/// than `rows_per_block` rows of each in memory.
ConfusionMatrix confusion_streamed(const std::filesystem::path& pred, const std::filesystem::path& truth,
                                   std::size_t num_classes, std::uint64_t rows_per_block = 256);

/// trace / total. Throws Validation on an empty matrix.
double overall_accuracy(const ConfusionMatrix& cm);

/// Per-class diagonal over row sums (producer) and column sums (user);
/// negative where the denominator is zero.
std::vector<double> producer_accuracy(const ConfusionMatrix& cm);
std::vector<double> user_accuracy(const ConfusionMatrix& cm);

/// True when pixel (x, y) lies within `band` pixels of a seam between center
/// windows of `plan` (seams at multiples of the stride inside the extent).
bool in_seam_band(const TilePlan& plan, std::int64_t band, std::uint64_t x, std::uint64_t y);

/// Confusion counts restricted to the seam band.
ConfusionMatrix boundary_confusion(const ClassMap& pred, const ClassMap& truth, const TilePlan& plan,
                                   std::int64_t band, std::size_t num_classes);

/// Overall accuracy restricted to the seam band. Throws Validation when the
/// band holds no evaluable pixel.
double boundary_accuracy(const ClassMap& pred, const ClassMap& truth, const TilePlan& plan, std::int64_t band,
                         std::size_t num_classes);

/// Writes `<stem>.json` and `<stem>.csv` next to `path` (whose extension is
/// replaced). JSON keys: class_names, counts, overall_accuracy,
/// producer_accuracy, user_accuracy, metadata.
void report(const ConfusionMatrix& cm, const ClassScheme& scheme, const nlohmann::ordered_json& metadata,
            const std::filesystem::path& path);

nlohmann::ordered_json report_json(const ConfusionMatrix& cm, const ClassScheme& scheme,
                                   const nlohmann::ordered_json& metadata);

/// Parses the counts back out of a report JSON.
ConfusionMatrix read_report(const std::filesystem::path& path);

}  // namespace lumap

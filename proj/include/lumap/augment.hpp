#pragma once

// Dihedral (D4) augmentation of square tiles: 4 rotations x optional flip,
// applied identically to imagery and labels.

#include <cstdint>
#include <utility>

#include "lumap/raster.hpp"
#include "lumap/spectral.hpp"

namespace lumap {

/// d in [0, 8): bit 2 = mirror columns first, bits 0-1 = clockwise quarter turns.
using Dihedral = int;

inline constexpr Dihedral kIdentityTransform = 0;

/// Where source pixel (x, y) lands in an n x n tile after transform d.
std::pair<std::uint64_t, std::uint64_t> dihedral_map(Dihedral d, std::uint64_t n, std::uint64_t x, std::uint64_t y);
Dihedral dihedral_inverse(Dihedral d);
Dihedral draw_dihedral(std::uint64_t seed);

ChannelStack apply_dihedral(const ChannelStack& tile, Dihedral d);
ClassMap apply_dihedral(const ClassMap& tile, Dihedral d);

struct AugmentedPair {
    ChannelStack image;
    ClassMap labels;
    Dihedral transform = kIdentityTransform;
};

/// Applies draw_dihedral(seed) to both tiles. Tiles must be square and the
/// same size.
AugmentedPair augment(const ChannelStack& image, const ClassMap& labels, std::uint64_t seed);

}  // namespace lumap

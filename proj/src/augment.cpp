#include "lumap/augment.hpp"

#include "lumap/error.hpp"
#include "lumap/rng.hpp"

namespace lumap {

std::pair<std::uint64_t, std::uint64_t> dihedral_map(Dihedral d, std::uint64_t n, std::uint64_t x, std::uint64_t y) {
    if (d & 4) x = n - 1 - x;
    for (int r = 0; r < (d & 3); ++r) {
        const std::uint64_t nx = n - 1 - y;
        y = x;
        x = nx;
    }
    return {x, y};
}

Dihedral dihedral_inverse(Dihedral d) {
    // Flip-then-rotate is a reflection and undoes itself.
    if (d & 4) return d;
    return (4 - (d & 3)) & 3;
}

Dihedral draw_dihedral(std::uint64_t seed) { return static_cast<Dihedral>(splitmix64(seed) % 8); }

ChannelStack apply_dihedral(const ChannelStack& tile, Dihedral d) {
    if (tile.width != tile.height) throw_validation("dihedral transforms need square tiles");
    const std::uint64_t n = tile.width;
    ChannelStack out = tile;
    for (std::uint64_t y = 0; y < n; ++y)
        for (std::uint64_t x = 0; x < n; ++x) {
            const auto [tx, ty] = dihedral_map(d, n, x, y);
            const std::size_t src = y * n + x;
            const std::size_t dst = ty * n + tx;
            for (std::size_t c = 0; c < tile.channels(); ++c) out.data[c * n * n + dst] = tile.data[c * n * n + src];
            if (!tile.valid.empty()) out.valid[dst] = tile.valid[src];
        }
    return out;
}

ClassMap apply_dihedral(const ClassMap& tile, Dihedral d) {
    if (tile.width != tile.height) throw_validation("dihedral transforms need square tiles");
    const std::uint64_t n = tile.width;
    ClassMap out = tile;
    for (std::uint64_t y = 0; y < n; ++y)
        for (std::uint64_t x = 0; x < n; ++x) {
            const auto [tx, ty] = dihedral_map(d, n, x, y);
            out.labels[ty * n + tx] = tile.labels[y * n + x];
        }
    return out;
}

AugmentedPair augment(const ChannelStack& image, const ClassMap& labels, std::uint64_t seed) {
    if (image.width != image.height || labels.width != labels.height)
        throw_validation("augment needs square tiles");
    if (image.width != labels.width) throw_validation("augment: image and label tiles differ in size");
    const Dihedral d = draw_dihedral(seed);
    return {apply_dihedral(image, d), apply_dihedral(labels, d), d};
}

}  // namespace lumap

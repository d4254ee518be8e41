#pragma once

#include <cstdint>
#include <vector>

#include "prototsnet/tensor.hpp"

namespace prototsnet {

// l x d binary routing matrix: delta(i, m) == 1 when encoder group i sees
// input feature m.
struct MaskSet {
    int features = 0;  // d
    int groups = 0;    // l
    double reception = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> delta;  // row-major l x d

    std::uint8_t at(int group, int feature) const {
        return delta[static_cast<std::size_t>(group) * features + feature];
    }
    int kept_per_group() const;
    // Features that no group receives.
    std::vector<int> orphans() const;
    // Pairs (i, j), i < j, of identical rows.
    std::vector<std::pair<int, int>> duplicate_rows() const;

    std::vector<std::uint8_t> packed_bits() const;
    static MaskSet from_packed(int features, int groups, double reception, std::uint64_t seed,
                               const std::vector<std::uint8_t>& bits);

    bool operator==(const MaskSet&) const = default;
};

// Number of features each mask keeps, floor(r * d); throws when r lies
// outside (0, 1] or the count would be zero.
int kept_feature_count(int features, double reception);

// Each row is an independent uniform floor(r*d)-subset of the d features.
MaskSet generate_masks(int features, int groups, double reception, std::uint64_t seed);

MaskSet all_ones_masks(int features, int groups);

// x [d, T] -> [l*d, T], row i*d + m = delta(i, m) * x[m].
Tensor apply_masks(const Tensor& x, const MaskSet& masks);
// Batched form: x [B, d, T] -> [B, l*d, T].
Tensor apply_masks_batch(const Tensor& x, const MaskSet& masks);

}  // namespace prototsnet

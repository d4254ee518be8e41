#include "prototsnet/masks.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace prototsnet {

int kept_feature_count(int features, double reception) {
    if (features < 1) throw std::invalid_argument("mask feature count must be positive");
    if (!(reception > 0.0) || reception > 1.0) {
        throw std::invalid_argument("reception must lie in (0, 1], got " + std::to_string(reception));
    }
    // 0.75 * 4 must give 3 even with representation error in r
    const int kept = static_cast<int>(std::floor(reception * features + 1e-9));
    if (kept < 1) {
        throw std::invalid_argument("reception too small: floor(" + std::to_string(reception) + " * " +
                                    std::to_string(features) + ") == 0");
    }
    return kept;
}

int MaskSet::kept_per_group() const { return kept_feature_count(features, reception); }

std::vector<int> MaskSet::orphans() const {
    std::vector<int> out;
    for (int m = 0; m < features; ++m) {
        bool seen = false;
        for (int i = 0; i < groups && !seen; ++i) seen = at(i, m) != 0;
        if (!seen) out.push_back(m);
    }
    return out;
}

std::vector<std::pair<int, int>> MaskSet::duplicate_rows() const {
    std::vector<std::pair<int, int>> out;
    const auto begin = delta.begin();
    for (int i = 0; i < groups; ++i) {
        for (int j = i + 1; j < groups; ++j) {
            if (std::equal(begin + i * features, begin + (i + 1) * features, begin + j * features)) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<std::uint8_t> MaskSet::packed_bits() const {
    std::vector<std::uint8_t> bits((delta.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < delta.size(); ++k) {
        if (delta[k]) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    return bits;
}

MaskSet MaskSet::from_packed(int features, int groups, double reception, std::uint64_t seed,
                             const std::vector<std::uint8_t>& bits) {
    MaskSet m;
    m.features = features;
    m.groups = groups;
    m.reception = reception;
    m.seed = seed;
    const std::size_t n = static_cast<std::size_t>(features) * groups;
    if (bits.size() != (n + 7) / 8) throw std::invalid_argument("packed mask length mismatch");
    m.delta.resize(n);
    for (std::size_t k = 0; k < n; ++k) m.delta[k] = (bits[k / 8] >> (k % 8)) & 1u;
    return m;
}

MaskSet generate_masks(int features, int groups, double reception, std::uint64_t seed) {
    if (groups < 1) throw std::invalid_argument("mask group count must be positive");
    const int kept = kept_feature_count(features, reception);
    MaskSet m;
    m.features = features;
    m.groups = groups;
    m.reception = reception;
    m.seed = seed;
    m.delta.assign(static_cast<std::size_t>(features) * groups, 0);

    std::mt19937_64 rng(seed);
    std::vector<int> order(static_cast<std::size_t>(features));
    for (int i = 0; i < groups; ++i) {
        std::iota(order.begin(), order.end(), 0);
        // partial Fisher-Yates: the first `kept` slots form a uniform subset
        for (int k = 0; k < kept; ++k) {
            std::uniform_int_distribution<int> pick(k, features - 1);
            std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
            m.delta[static_cast<std::size_t>(i) * features + order[static_cast<std::size_t>(k)]] = 1;
        }
    }

    const auto orphans = m.orphans();
    if (!orphans.empty()) {
        std::clog << "warning: " << orphans.size() << " input feature(s) reach no encoder group; their importance is 0\n";
    }
    return m;
}

MaskSet all_ones_masks(int features, int groups) {
    MaskSet m;
    m.features = features;
    m.groups = groups;
    m.reception = 1.0;
    m.seed = 0;
    m.delta.assign(static_cast<std::size_t>(features) * groups, 1);
    return m;
}

Tensor apply_masks(const Tensor& x, const MaskSet& masks) {
    if (x.rank() != 2 || x.dim(0) != masks.features) {
        throw ShapeError("apply_masks: input " + shape_string(x.shape()) + " does not have " +
                         std::to_string(masks.features) + " feature rows");
    }
    return apply_masks_batch(x.reshaped(Shape{1, x.dim(0), x.dim(1)}), masks)
        .reshaped(Shape{masks.groups * masks.features, x.dim(1)});
}

Tensor apply_masks_batch(const Tensor& x, const MaskSet& masks) {
    if (x.rank() != 3 || x.dim(1) != masks.features) {
        throw ShapeError("apply_masks: input " + shape_string(x.shape()) + " does not have " +
                         std::to_string(masks.features) + " features");
    }
    const int batch = x.dim(0), d = masks.features, len = x.dim(2);
    Tensor out(Shape{batch, masks.groups * d, len});
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < masks.groups; ++i) {
            for (int m = 0; m < d; ++m) {
                if (!masks.at(i, m)) continue;
                for (int t = 0; t < len; ++t) out.at(b, i * d + m, t) = x.at(b, m, t);
            }
        }
    }
    return out;
}

}  // namespace prototsnet

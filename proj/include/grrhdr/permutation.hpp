#pragma once

#include <cstdint>
#include <vector>

#include "grrhdr/image.hpp"
#include "grrhdr/shutter.hpp"

namespace grrhdr {

enum class Direction { Forward, Inverse };

// Bijection between the scene grid and the sensor grid, both flattened
// row-major. forward[k] is the sensor pixel that receives scene pixel k.
// The identity map models a bare lens without shuffling optics.
struct PermutationMap {
    uint32_t size = 0;
    std::vector<uint32_t> forward;
    uint64_t seed = 0;

    bool is_identity() const;
    void validate() const;  // throws param_error unless forward is a bijection
};

PermutationMap identity_permutation(uint32_t n);

// Uniform random permutation, Fisher-Yates driven by Rng(seed).
PermutationMap make_permutation(uint32_t n, uint64_t seed);

// Reorders a flat buffer. Forward scatters out[forward[k]] = in[k];
// Inverse applies the exact inverse gather.
std::vector<double> apply_permutation(const std::vector<double>& in,
                                      const PermutationMap& map, Direction dir);
std::vector<uint16_t> apply_permutation(const std::vector<uint16_t>& in,
                                        const PermutationMap& map, Direction dir);
std::vector<uint8_t> apply_permutation(const std::vector<uint8_t>& in,
                                       const PermutationMap& map, Direction dir);

// Diagonal of P^T S P on the scene grid: entry k is the exposure of the
// sensor row that scene pixel k lands on. width is the sensor width in
// pixels; map.size must equal profile.rows * width.
std::vector<double> conjugated_exposure(const ShutterProfile& profile,
                                        const PermutationMap& map, int width);

}  // namespace grrhdr

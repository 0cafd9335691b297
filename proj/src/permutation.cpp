#include "grrhdr/permutation.hpp"

#include "grrhdr/rng.hpp"

namespace grrhdr {

bool PermutationMap::is_identity() const {
    for (uint32_t k = 0; k < size; ++k)
        if (forward[k] != k) return false;
    return true;
}

void PermutationMap::validate() const {
    if (forward.size() != size)
        throw param_error("permutation table size mismatch");
    std::vector<uint8_t> seen(size, 0);
    for (uint32_t v : forward) {
        if (v >= size)
            throw param_error("permutation entry out of range");
        if (seen[v])
            throw param_error("permutation is not a bijection");
        seen[v] = 1;
    }
}

PermutationMap identity_permutation(uint32_t n) {
    PermutationMap map;
    map.size = n;
    map.forward.resize(n);
    for (uint32_t k = 0; k < n; ++k) map.forward[k] = k;
    return map;
}

PermutationMap make_permutation(uint32_t n, uint64_t seed) {
    PermutationMap map = identity_permutation(n);
    map.seed = seed;
    Rng rng(seed);
    // Fisher-Yates with the rejection-sampled bounded draw keeps the
    // shuffle unbiased and identical on every platform.
    for (uint32_t i = n; i > 1; --i) {
        const uint32_t j = static_cast<uint32_t>(rng.below(i));
        std::swap(map.forward[i - 1], map.forward[j]);
    }
    return map;
}

template <typename T>
static std::vector<T> apply_impl(const std::vector<T>& in,
                                 const PermutationMap& map, Direction dir) {
    if (in.size() != map.size)
        throw param_error("buffer size does not match permutation size");
    map.validate();
    std::vector<T> out(in.size());
    if (dir == Direction::Forward) {
        for (uint32_t k = 0; k < map.size; ++k) out[map.forward[k]] = in[k];
    } else {
        for (uint32_t k = 0; k < map.size; ++k) out[k] = in[map.forward[k]];
    }
    return out;
}

std::vector<double> apply_permutation(const std::vector<double>& in,
                                      const PermutationMap& map, Direction dir) {
    return apply_impl(in, map, dir);
}
std::vector<uint16_t> apply_permutation(const std::vector<uint16_t>& in,
                                        const PermutationMap& map, Direction dir) {
    return apply_impl(in, map, dir);
}
std::vector<uint8_t> apply_permutation(const std::vector<uint8_t>& in,
                                       const PermutationMap& map, Direction dir) {
    return apply_impl(in, map, dir);
}

std::vector<double> conjugated_exposure(const ShutterProfile& profile,
                                        const PermutationMap& map, int width) {
    if (width <= 0)
        throw param_error("sensor width must be positive");
    if (map.size != static_cast<uint64_t>(profile.rows) * width)
        throw param_error("permutation size does not match shutter grid");
    map.validate();
    std::vector<double> lambda(map.size);
    for (uint32_t k = 0; k < map.size; ++k)
        lambda[k] = profile.exposure_row(static_cast<int>(map.forward[k]) / width);
    return lambda;
}

}  // namespace grrhdr

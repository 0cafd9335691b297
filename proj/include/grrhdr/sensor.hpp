#pragma once

#include <cstdint>
#include <vector>

#include "grrhdr/image.hpp"

namespace grrhdr {

// ADC and noise model. gain converts integrated energy
// (radiance * seconds) to digital numbers; noise_sigma is in DN and is
// added before clipping and rounding.
struct SensorConfig {
    int bit_depth = 8;        // 1..16
    double gain = 1.0;        // DN per unit energy
    double noise_sigma = 0.0; // DN, >= 0
    uint64_t seed = 0;        // noise stream seed

    int max_dn() const { return (1 << bit_depth) - 1; }
    void validate() const;
};

// Convention used by the CLI: unit radiance integrated for the base
// exposure lands at mid-scale.
double default_gain(int bit_depth, double t0);

// One captured frame. dn holds the quantized samples; erasure flags
// pixels that survived clipping screens (1 = valid, 0 = erased).
struct Measurement {
    int width = 0;
    int height = 0;
    int bit_depth = 8;
    std::vector<uint16_t> dn;
    std::vector<uint8_t> erasure;

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    int max_dn() const { return (1 << bit_depth) - 1; }
    void validate() const;
};

// Clip to [0, 2^bits - 1], then round half away from zero.
// NaN input throws param_error.
uint16_t quantize(double v, int bit_depth);

// Full ADC path for an energy grid: add gaussian read noise (when
// sigma > 0), clip, round.
std::vector<uint16_t> quantize_frame(const std::vector<double>& energy,
                                     const SensorConfig& config);

}  // namespace grrhdr

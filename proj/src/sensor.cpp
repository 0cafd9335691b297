#include "grrhdr/sensor.hpp"

#include <cmath>

#include "grrhdr/rng.hpp"

namespace grrhdr {

void SensorConfig::validate() const {
    if (bit_depth < 1 || bit_depth > 16)
        throw param_error("bit depth must be in [1, 16]");
    if (!std::isfinite(gain) || gain <= 0.0)
        throw param_error("sensor gain must be positive and finite");
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0)
        throw param_error("noise sigma must be >= 0 and finite");
}

double default_gain(int bit_depth, double t0) {
    if (bit_depth < 1 || bit_depth > 16)
        throw param_error("bit depth must be in [1, 16]");
    if (!(t0 > 0.0))
        throw param_error("base exposure must be positive");
    return std::ldexp(1.0, bit_depth - 1) / t0;
}

void Measurement::validate() const {
    if (width <= 0 || height <= 0)
        throw param_error("measurement dimensions must be positive");
    if (bit_depth < 1 || bit_depth > 16)
        throw param_error("bit depth must be in [1, 16]");
    if (dn.size() != pixel_count())
        throw param_error("measurement buffer size mismatch");
    if (!erasure.empty() && erasure.size() != pixel_count())
        throw param_error("erasure mask size mismatch");
    const int cap = max_dn();
    for (uint16_t v : dn)
        if (v > cap) throw param_error("sample exceeds the ADC range");
    for (uint8_t e : erasure)
        if (e > 1) throw param_error("erasure mask entries must be 0 or 1");
}

uint16_t quantize(double v, int bit_depth) {
    if (bit_depth < 1 || bit_depth > 16)
        throw param_error("bit depth must be in [1, 16]");
    if (std::isnan(v))
        throw param_error("cannot quantize a NaN sample");
    const double cap = static_cast<double>((1 << bit_depth) - 1);
    const double clipped = std::fmin(std::fmax(v, 0.0), cap);
    // llround rounds halves away from zero.
    return static_cast<uint16_t>(std::llround(clipped));
}

std::vector<uint16_t> quantize_frame(const std::vector<double>& energy,
                                     const SensorConfig& config) {
    config.validate();
    std::vector<uint16_t> dn(energy.size());
    if (config.noise_sigma > 0.0) {
        Rng rng(config.seed);
        for (size_t i = 0; i < energy.size(); ++i)
            dn[i] = quantize(energy[i] + config.noise_sigma * rng.gaussian(),
                             config.bit_depth);
    } else {
        for (size_t i = 0; i < energy.size(); ++i)
            dn[i] = quantize(energy[i], config.bit_depth);
    }
    return dn;
}

}  // namespace grrhdr

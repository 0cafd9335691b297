#pragma once

#include "grrhdr/image.hpp"
#include "grrhdr/permutation.hpp"
#include "grrhdr/sensor.hpp"
#include "grrhdr/shutter.hpp"

namespace grrhdr {

// Complete description of one acquisition: shuffling optics (identity for
// a bare lens), row-graded shutter, ADC. The sensor grid has the same
// dimensions as the scene grid.
struct AcquisitionSpec {
    ShutterProfile shutter;
    PermutationMap optics;
    SensorConfig sensor;
    int low_threshold = 0;           // DN at or below this count as underexposed
    bool erase_underexposed = false; // extend the erasure mask to dark pixels

    void validate(int scene_width, int scene_height) const;
};

// b = Q{ S P x + eta }. Scene pixel k lands on sensor pixel
// optics.forward[k] and integrates for that sensor row's exposure.
// The erasure mask flags saturated samples (and, optionally, dark ones).
Measurement forward(const RadianceImage& scene, const AcquisitionSpec& spec);

// Same ADC path with an explicit per-pixel exposure grid and no optics.
// Used for conjugated-exposure simulation and synthetic bracketed stacks.
Measurement forward_with_exposures(const RadianceImage& scene,
                                   const std::vector<double>& exposures,
                                   const SensorConfig& sensor,
                                   int low_threshold = 0,
                                   bool erase_underexposed = false);

// Undo the optical shuffle: reorder samples and mask back to scene order.
Measurement unshuffle(const Measurement& m, const PermutationMap& map);

double saturation_rate(const Measurement& m);
double underexposure_rate(const Measurement& m, int low_threshold);

enum class SaturationKnob { SceneScale, BaseExposure };

struct SaturationSearch {
    AcquisitionSpec spec;      // base exposure updated when that knob is used
    double scene_scale = 1.0;  // multiplier applied to the scene
    double achieved = 0.0;     // noiseless saturation rate at the chosen knob
    bool attained = false;
    Measurement measurement;   // final capture, noise applied once
};

// Finds a knob value whose noiseless saturation rate is within 10% of
// target by geometric bisection (the rate is monotone in either knob).
// Targets below one pixel's worth of saturation are met by a zero rate.
// When no knob value can reach the target the search reports the closest
// achievable rate with attained = false.
SaturationSearch calibrate_exposure_for_saturation(const RadianceImage& scene,
                                                   const AcquisitionSpec& spec,
                                                   double target,
                                                   SaturationKnob knob);

}  // namespace grrhdr

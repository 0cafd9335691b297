#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grrhdr/image.hpp"

namespace grrhdr {

// One configuration row of the optics/shutter/prior study. tau_rel scales
// the TV weight relative to (2^B-1) * gain * mean exposure; 0 disables
// the prior.
struct AblationScenario {
    std::string name;
    bool shuffle = false;
    bool grr = false;
    double tau_rel = 0.0;
    double target_saturation = 0.10;
};

struct AblationConfig {
    double t0 = 189e-6;
    double tr = 51e-6;           // applied only to GRR scenarios
    int bit_depth = 8;
    double sigma_norm = 0.01;    // noise sigma = sigma_norm * (2^B - 1) DN
    int max_iters = 300;
    double rel_tol = 1e-7;
    int tv_inner_iters = 10;
    uint64_t seed = 1;
};

struct AblationRow {
    std::string scenario;
    std::string scene;
    double psnr = 0.0, psnr_gamma = 0.0, ssim = 0.0;
    double achieved_saturation = 0.0;
    bool attained = false;
    int iterations = 0;
};

struct AblationSummary {
    std::string scenario;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_psnr_gamma = 0.0;
    double mean_ssim = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::vector<AblationSummary> summaries;
};

// Per scene and scenario: target the saturation rate by scene scaling,
// capture once with noise, reconstruct, and score against the scaled
// scene. Randomness (shuffle map, noise stream) depends on the scene
// index but not the scenario, so scenario columns are directly comparable.
AblationResult run_ablation(const std::vector<RadianceImage>& scenes,
                            const std::vector<std::string>& scene_names,
                            const std::vector<AblationScenario>& scenarios,
                            const AblationConfig& config);

}  // namespace grrhdr

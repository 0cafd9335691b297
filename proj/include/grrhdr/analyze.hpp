#pragma once

#include <vector>

#include "grrhdr/image.hpp"
#include "grrhdr/sensor.hpp"

namespace grrhdr {

// Native sensor range stretched by an attenuation span:
// 20 log10((imax/imin) * (emax/emin)).
double dynamic_range_nd(double imax, double imin, double emax, double emin);

// Range of a row-graded shutter between rows u_min and u_max (1-based):
// 20 log10(imax/imin) + 20 log10(1 + (u_max - u_min)/(t0/tr + u_min - 1)).
// tr = 0 yields the native term alone.
double dynamic_range_grr(double imax, double imin, double t0, double tr,
                         int u_min, int u_max);

struct PatchDrStats {
    int size = 0;
    size_t count = 0;          // number of stride-1 placements
    double mean_db = 0.0;
    double p5_db = 0.0;
    double p95_db = 0.0;
    int first_bin_db = 0;      // lower edge of bins[0]
    std::vector<size_t> bins;  // 1 dB wide
};

struct DrReport {
    double global_db = 0.0;
    std::vector<PatchDrStats> per_size;
};

// Slides s x s windows (stride 1) over a per-pixel exposure grid and bins
// each patch's range: native DR plus the patch's exposure spread. The
// native floor uses imin = 1 DN.
DrReport patch_dr_histogram(const std::vector<double>& exposures, int width,
                            int height, const SensorConfig& sensor,
                            const std::vector<int>& sizes = {2, 3, 4, 5});

// Positive part of the negated 5-point Laplacian of sum-normalized
// luminance, summed over all pixels. Symmetric (mirror) boundaries.
double isolated_highlight_density(const RadianceImage& img);

// Ground-truth HDR oracle: triangle-weighted average of dn/T over frames
// where the sample is inside (low_threshold, 2^B-2]. Pixels valid nowhere
// fall back to the shortest exposure. Output units are DN per second.
RadianceImage merge_exposures(const std::vector<Measurement>& frames,
                              const std::vector<double>& times,
                              int low_threshold = 0);

enum class MetricNormalization { Max, Mean };

struct FidelityMetrics {
    double psnr_db = 0.0;
    double psnr_gamma_db = 0.0;  // after a 1/2.2 power encode
    double ssim = 0.0;
};

// Both images are scaled by the reference's max (or mean) and clipped to
// [0, 1] before scoring. PSNR values are capped at 99 dB; SSIM uses the
// 11-tap Gaussian window on the luma plane.
FidelityMetrics fidelity_metrics(const RadianceImage& ref,
                                 const RadianceImage& test,
                                 MetricNormalization norm = MetricNormalization::Max);

}  // namespace grrhdr

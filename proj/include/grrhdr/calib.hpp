#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "grrhdr/simulate.hpp"

namespace grrhdr {

// Exposure-bracketed captures of one calibration source position.
struct ExposureStack {
    int source_index = 0;
    std::vector<double> exposures;  // seconds, strictly increasing after sort
    std::vector<Measurement> frames;

    void canonicalize();   // sorts frames by exposure, rejects duplicates
    void validate() const;
};

struct SparseEntry {
    uint32_t sensor = 0;
    uint32_t scene = 0;
    double flux = 0.0;  // DN per second per unit scene value
};

// Calibrated forward operator. Entries are sorted by (scene, sensor);
// invalid_pixels lists sensor indices discarded by the screening rules,
// which therefore carry no entries.
struct SparseSystemMatrix {
    uint32_t n_sensor = 0;
    uint32_t n_scene = 0;
    std::vector<SparseEntry> entries;
    std::vector<uint32_t> invalid_pixels;  // sorted, unique

    void validate() const;
};

struct FluxScreen {
    int valid_low = 2;              // DN floor; a valid sample is (valid_low, 2^B-2]
    double min_correlation = 0.95;  // Pearson corr(T, dn) must exceed this
};

struct FluxEstimate {
    double flux = 0.0;
    bool valid = false;
    int used = 0;  // samples that survived per-frame screening
};

// Per-pixel flux from a bracketed stack: the mean of dn_l / T_l over valid
// frames. Invalid when fewer than 3 samples survive, or the exposure/DN
// correlation is below the screen (undefined correlation rejects), or the
// pixel is on the caller's dark list.
FluxEstimate estimate_flux(const ExposureStack& stack, int u, int v,
                           const FluxScreen& screen = {});

// Assembles the sparse system matrix from one stack per scene point.
// Dark screening: sensor pixels whose mean dark DN exceeds dark_threshold
// go to invalid_pixels and contribute no entries. Entries below
// sparsity_floor times their column maximum are dropped.
SparseSystemMatrix build_matrix(const std::vector<ExposureStack>& stacks,
                                const std::vector<Measurement>& dark_frames,
                                int dark_threshold = 2,
                                const FluxScreen& screen = {},
                                double sparsity_floor = 1e-3);

// Ideal matrix for known permutation optics: one entry per scene column,
// sensor index forward[k], flux = gain.
SparseSystemMatrix matrix_from_permutation(const PermutationMap& map, double gain);

enum class CfaPhase { RGGB, BGGR, GRBG, GBRG };

// Plane order is positional: 0 = (even row, even col), 1 = (even, odd),
// 2 = (odd, even), 3 = (odd, odd). channel[p] maps each plane to its scene
// color channel (RGGB gives {R, G, G, B} = {0, 1, 1, 2}).
struct BayerPlanes {
    std::array<Measurement, 4> planes;
    std::array<ShutterProfile, 4> shutters;
    std::array<SparseSystemMatrix, 4> matrices;
    std::array<int, 4> channel = {0, 1, 1, 2};
    CfaPhase phase = CfaPhase::RGGB;
};

// Splits an even-dimension mosaic into the four CFA planes. Each plane
// inherits every other shutter row (t0' = t0 + tr for odd planes, tr' = 2tr)
// and the rows of the system matrix that land on its sensor sites, with
// sensor indices remapped to plane-local coordinates. Scene columns are
// left at full resolution so the two green planes share one channel.
BayerPlanes bayer_split(const Measurement& mosaic, const ShutterProfile& shutter,
                        const SparseSystemMatrix& matrix,
                        CfaPhase phase = CfaPhase::RGGB);

// Exact inverse of the split.
Measurement bayer_reassemble(const BayerPlanes& planes);

// CFA color channel observed at mosaic position (r, c).
int cfa_channel(CfaPhase phase, int r, int c);

// Color acquisition: sensor site (u, v) records the CFA-selected channel
// of whichever scene pixel the optics deposit there.
Measurement simulate_bayer(const RadianceImage& scene, const AcquisitionSpec& spec,
                           CfaPhase phase = CfaPhase::RGGB);

}  // namespace grrhdr

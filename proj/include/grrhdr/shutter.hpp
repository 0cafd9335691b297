#pragma once

namespace grrhdr {

// Row-graded exposure profile of a global-reset-release shutter. All rows
// begin integrating together; row u (1-based) stops after
//   exposure(u) = t0 + tr * (u - 1)
// seconds. tr = 0 degenerates to an ordinary global shutter.
struct ShutterProfile {
    double t0 = 0.0;  // base exposure of the first row, seconds
    double tr = 0.0;  // per-row readout increment, seconds
    int rows = 0;

    double exposure(int u) const { return t0 + tr * (u - 1); }  // 1-based
    double exposure_row(int r) const { return t0 + tr * r; }    // 0-based
    double min_exposure() const { return t0; }
    double max_exposure() const { return exposure_row(rows - 1); }
    double ratio() const { return max_exposure() / t0; }
    bool is_global() const { return tr == 0.0; }
};

// Validates and returns the profile. t0 must be > 0, tr >= 0, rows >= 1.
ShutterProfile make_grr_profile(double t0, double tr, int rows);

}  // namespace grrhdr

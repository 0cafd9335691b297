#include "grrhdr/shutter.hpp"

#include <cmath>

#include "grrhdr/image.hpp"

namespace grrhdr {

ShutterProfile make_grr_profile(double t0, double tr, int rows) {
    if (!std::isfinite(t0) || t0 <= 0.0)
        throw param_error("shutter base exposure must be positive and finite");
    if (!std::isfinite(tr) || tr < 0.0)
        throw param_error("shutter row increment must be >= 0 and finite");
    if (rows < 1)
        throw param_error("shutter needs at least one row");
    return ShutterProfile{t0, tr, rows};
}

}  // namespace grrhdr

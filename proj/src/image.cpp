#include "grrhdr/image.hpp"

#include <cmath>

namespace grrhdr {

void RadianceImage::validate() const {
    if (width <= 0 || height <= 0)
        throw param_error("image dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw param_error("image must have 1 or 3 channels");
    const size_t expect = static_cast<size_t>(width) * height * channels;
    if (data.size() != expect)
        throw param_error("image buffer size does not match dimensions");
    for (double v : data) {
        if (!std::isfinite(v))
            throw param_error("image contains a non-finite sample");
        if (v < 0.0)
            throw param_error("image contains a negative sample");
    }
}

}  // namespace grrhdr

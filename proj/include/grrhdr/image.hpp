#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace grrhdr {

// Error taxonomy. The CLI maps these onto distinct exit codes
// (parameter = 2, format = 3, convergence = 4).
class param_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class convergence_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scene or reconstruction in linear radiometric units. Values are
// proportional to radiant flux and must be finite and >= 0.
// Row-major storage with interleaved channels:
// data[(r*width + c)*channels + ch].
struct RadianceImage {
    int width = 0;
    int height = 0;
    int channels = 1;  // 1 or 3
    std::vector<double> data;

    RadianceImage() = default;
    RadianceImage(int w, int h, int ch = 1, double fill = 0.0)
        : width(w), height(h), channels(ch),
          data(static_cast<size_t>(w) * h * ch, fill) {}

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }

    double& at(int r, int c, int ch = 0) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }

    // Throws param_error on size mismatch, negative or non-finite samples.
    void validate() const;
};

}  // namespace grrhdr

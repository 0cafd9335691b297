#pragma once

#include <string>
#include <vector>

#include "grrhdr/calib.hpp"
#include "grrhdr/image.hpp"
#include "grrhdr/sensor.hpp"
#include "grrhdr/shutter.hpp"

namespace grrhdr {

// All writers go through temp-file + rename so partially written outputs
// never appear under the final name.
void write_file_atomic(const std::string& path, const std::string& data);
std::string read_file(const std::string& path);

// Scenes and reconstructions travel as PFM (little-endian, scale -1.0,
// rows bottom-up). Structural problems raise format_error; NaN or negative
// samples raise param_error since the file parses but violates the domain.
RadianceImage read_pfm(const std::string& path);
void write_pfm(const std::string& path, const RadianceImage& img);

// Raw binary PGM; maxval must equal 2^bit_depth - 1. Samples are one byte
// up to maxval 255, two big-endian bytes above.
std::vector<uint16_t> read_pgm(const std::string& path, int* width, int* height,
                               int* maxval);
void write_pgm(const std::string& path, const std::vector<uint16_t>& dn,
               int width, int height, int maxval);

// Raw PBM used for erasure masks; a set bit means the pixel is valid.
std::vector<uint8_t> read_pbm(const std::string& path, int* width, int* height);
void write_pbm(const std::string& path, const std::vector<uint8_t>& mask,
               int width, int height);

SparseSystemMatrix read_matrix(const std::string& path);
void write_matrix(const std::string& path, const SparseSystemMatrix& m);

// Sidecar record describing how a measurement was produced; enough to
// rebuild the synthetic operator for reconstruction.
struct MeasurementMeta {
    int bit_depth = 8;
    std::string layout = "sensor";  // "sensor" (as captured) or "scene" (unshuffled)
    std::string cfa;                // empty for monochrome, else e.g. "rggb"
    ShutterProfile shutter;
    bool shuffled = false;
    uint64_t optics_seed = 0;
    double gain = 1.0;
    double noise_sigma = 0.0;
    uint64_t noise_seed = 0;
    int low_threshold = 0;
    bool erase_underexposed = false;
    double scene_scale = 1.0;
    double achieved_saturation = -1.0;  // < 0 when no targeting ran
    bool saturation_attained = false;
};

// Measurement trio: <path> (PGM), <path>.mask.pbm, <path>.json.
void write_measurement(const std::string& path, const Measurement& m,
                       const MeasurementMeta& meta);
Measurement read_measurement(const std::string& path, MeasurementMeta* meta);

// Sidecar-independent helpers for the trio's companion paths.
std::string mask_path(const std::string& measurement_path);
std::string sidecar_path(const std::string& measurement_path);

}  // namespace grrhdr

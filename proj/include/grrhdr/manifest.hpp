#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace grrhdr {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kMeasurementFormatVersion = 1;
inline constexpr int kMatrixFormatVersion = 1;
inline constexpr int kScenarioFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

struct HashedFile {
    std::string path;
    std::string sha256;
};

// Record of one CLI invocation, written next to the first output.
// Rerunning the stored argv reproduces every output byte for byte;
// nothing time- or host-dependent is stored.
struct RunManifest {
    std::string command;
    std::vector<std::string> args;  // argv after the program name
    nlohmann::json parameters;
    std::vector<HashedFile> inputs;
    std::vector<HashedFile> outputs;
};

std::string sha256_file(const std::string& path);

void write_run_manifest(const std::string& path, const RunManifest& m);
RunManifest read_run_manifest(const std::string& path);

}  // namespace grrhdr

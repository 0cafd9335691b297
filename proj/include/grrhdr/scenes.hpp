#pragma once

#include <cstdint>
#include <string>

#include "grrhdr/image.hpp"

namespace grrhdr {

// Synthetic HDR test content. Blobs and Blocks are the general-purpose
// corpus scenes; Wedge is the 5000:1 log attenuation ramp; Ramp is a plain
// linear gradient; Dots scatters isolated single-pixel highlights.
enum class SceneKind { Blobs, Blocks, Wedge, Ramp, Dots };

SceneKind scene_kind_from_name(const std::string& name);
std::string scene_kind_name(SceneKind kind);

RadianceImage make_test_scene(SceneKind kind, int width, int height,
                              uint64_t seed, int channels = 1);

}  // namespace grrhdr

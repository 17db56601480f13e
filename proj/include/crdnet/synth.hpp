#pragma once

#include <cstdint>
#include <utility>

#include "crdnet/density.hpp"
#include "crdnet/tensor.hpp"

namespace crdnet {

// Procedural crowd stand-in: soft blobs on a noisy background, blob radius
// shrinking toward the top of the frame to mimic perspective scale change.
struct SynthConfig {
    int image_size = 64;
    int count_min = 1;
    int count_max = 30;
    double radius_top = 1.5;     // blob radius at y = 0 (far)
    double radius_bottom = 4.0;  // blob radius at y = H-1 (near)
    double noise_amplitude = 0.02;
    std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct Scene {
    Tensor image;  // (1,1,S,S) grayscale
    PointAnnotation annotation;
};

// Pure function of (cfg, seed): same inputs give a bit-identical scene.
Scene generate_scene(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace crdnet

#pragma once

#include <vector>

#include "crdnet/tape.hpp"

namespace crdnet {

struct ConvLayerSpec {
    int out_channels = 0;
    int kernel = 3;
    int dilation = 1;
};

// One stage per pyramid level, finest first. Stage k runs at 1/scale^k of the
// input resolution, its last activation is tapped as pyramid level k, and the
// map is downscaled by `scale` (repeated 2x maxpool) before the next stage.
struct BackboneConfig {
    std::vector<std::vector<ConvLayerSpec>> stages;
    int scale = 2;

    int levels() const { return static_cast<int>(stages.size()); }
    void validate() const;
};

// 4 stages of two 3x3 convolutions, widths 16/32/64/64.
BackboneConfig default_backbone_config();

struct ConvLayer {
    Parameter weight;
    Parameter bias;
    ConvSpec spec;
};

struct Backbone {
    BackboneConfig config;
    int in_channels = 1;
    std::vector<std::vector<ConvLayer>> stages;

    std::vector<Parameter*> parameters();
};

Backbone build_backbone(const BackboneConfig& cfg, int in_channels, std::uint64_t seed);

// levels[0] is the finest level, at the input image's resolution.
struct FeaturePyramid {
    std::vector<ValueId> levels;
};

FeaturePyramid extract_pyramid(Tape& tape, ValueId image, Backbone& net, bool trainable = true);

}  // namespace crdnet

#pragma once

#include <vector>

#include "crdnet/pnet.hpp"
#include "crdnet/tape.hpp"

namespace crdnet {

// Refines the running density map at one pyramid level: the upsampled map is
// concatenated with that level's features and reduced back to one channel by
// a 1x1 convolution (optionally after a small conv stack).
struct ResidualDensityModule {
    std::vector<ConvLayer> pre;
    Parameter head_weight;
    Parameter head_bias;

    std::vector<Parameter*> parameters();
};

// Per-level pre-convolution stacks, finest first; empty means none anywhere.
struct CnetConfig {
    std::vector<std::vector<ConvLayerSpec>> pre_stacks;
};

struct Cnet {
    int scale = 2;
    std::vector<ResidualDensityModule> modules;  // finest first, aligned with pyramid levels

    std::vector<Parameter*> parameters();
};

Cnet build_cnet(const BackboneConfig& backbone, const CnetConfig& cfg, std::uint64_t seed);

struct StepResult {
    ValueId upsampled;
    ValueId residual;
    ValueId density;
};

// One refinement: R = head(concat(u_s(d_prev), feature)), D = u_s(d_prev) + R.
StepResult residual_step(Tape& tape, ValueId d_prev, ValueId feature, ResidualDensityModule& module,
                         int scale, bool trainable = true);

// Internal step order runs coarsest to finest: step j consumes pyramid level
// K-1-j and module K-1-j. densities[0] is the initial zero map.
struct CascadeState {
    std::vector<ValueId> densities;
    std::vector<ValueId> upsampled;  // u_s(densities[j]) consumed by step j
    std::vector<ValueId> residuals;
    ValueId final_density = -1;
};

// steps = -1 runs the full cascade; otherwise only the first `steps` internal
// steps (coarsest first). trainable_modules is indexed by internal step and
// empty means every module is trainable.
CascadeState estimate_density(Tape& tape, const FeaturePyramid& pyramid, Cnet& net, int steps = -1,
                              const std::vector<bool>& trainable_modules = {});

// Residual tensors in internal (coarsest first) order.
std::vector<Tensor> decompose(const Tape& tape, const CascadeState& cascade);

// Rebuilds the final map from residuals alone: acc = R_0, then
// acc = u_s(acc) + R_j for each later step.
Tensor reconstruct_from_residuals(const std::vector<Tensor>& residuals, int scale);

}  // namespace crdnet

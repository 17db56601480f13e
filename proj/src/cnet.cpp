#include <cmath>
#include <stdexcept>
#include <string>

#include "crdnet/cnet.hpp"
#include "crdnet/rng.hpp"

namespace crdnet {

std::vector<Parameter*> ResidualDensityModule::parameters() {
    std::vector<Parameter*> out;
    for (ConvLayer& layer : pre) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    out.push_back(&head_weight);
    out.push_back(&head_bias);
    return out;
}

std::vector<Parameter*> Cnet::parameters() {
    std::vector<Parameter*> out;
    for (ResidualDensityModule& m : modules)
        for (Parameter* p : m.parameters()) out.push_back(p);
    return out;
}

namespace {

ConvLayer make_conv(const std::string& name, int in_c, const ConvLayerSpec& spec, Rng& rng) {
    ConvLayer layer;
    Tensor w({spec.out_channels, in_c, spec.kernel, spec.kernel});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c) * spec.kernel * spec.kernel));
    for (Scalar& v : w.vec()) v = stddev * rng.normal();
    layer.weight = Parameter(name + ".w", std::move(w));
    layer.bias = Parameter(name + ".b", Shape{1, 1, 1, spec.out_channels});
    layer.spec.stride = 1;
    layer.spec.padding = (spec.kernel / 2) * spec.dilation;
    layer.spec.dilation = spec.dilation;
    return layer;
}

}  // namespace

Cnet build_cnet(const BackboneConfig& backbone, const CnetConfig& cfg, std::uint64_t seed) {
    backbone.validate();
    const int levels = backbone.levels();
    if (!cfg.pre_stacks.empty() && static_cast<int>(cfg.pre_stacks.size()) != levels)
        throw std::invalid_argument("cnet pre_stacks must be empty or have one entry per pyramid level");

    Cnet net;
    net.scale = backbone.scale;
    Rng rng(seed);
    for (int k = 0; k < levels; ++k) {
        const std::string base = "cnet.m" + std::to_string(k);
        // Features from this level plus the one upsampled-density channel.
        int channels = backbone.stages[k].back().out_channels + 1;

        ResidualDensityModule module;
        if (!cfg.pre_stacks.empty())
            for (std::size_t j = 0; j < cfg.pre_stacks[k].size(); ++j) {
                const ConvLayerSpec& spec = cfg.pre_stacks[k][j];
                module.pre.push_back(make_conv(base + ".pre" + std::to_string(j), channels, spec, rng));
                channels = spec.out_channels;
            }

        Tensor head({1, channels, 1, 1});
        const double stddev = std::sqrt(2.0 / channels);
        for (Scalar& v : head.vec()) v = stddev * rng.normal();
        module.head_weight = Parameter(base + ".head.w", std::move(head));
        module.head_bias = Parameter(base + ".head.b", Shape{1, 1, 1, 1});

        net.modules.push_back(std::move(module));
    }
    return net;
}

StepResult residual_step(Tape& tape, ValueId d_prev, ValueId feature, ResidualDensityModule& module,
                         int scale, bool trainable) {
    StepResult r;
    r.upsampled = tape.upsample_bilinear(d_prev, scale);
    const Shape up = tape.value(r.upsampled).shape();
    const Shape fs = tape.value(feature).shape();
    if (up.h != fs.h || up.w != fs.w || up.n != fs.n)
        throw std::invalid_argument("upsampled density " + up.str() + " does not align with features " +
                                    fs.str());

    ValueId x = tape.concat_channels(r.upsampled, feature);
    for (ConvLayer& layer : module.pre) {
        x = tape.conv2d(x, layer.weight, layer.bias, layer.spec, trainable);
        x = tape.relu(x);
    }
    r.residual = tape.conv2d(x, module.head_weight, module.head_bias, ConvSpec{}, trainable);
    r.density = tape.add(r.upsampled, r.residual);
    return r;
}

CascadeState estimate_density(Tape& tape, const FeaturePyramid& pyramid, Cnet& net, int steps,
                              const std::vector<bool>& trainable_modules) {
    const int levels = static_cast<int>(pyramid.levels.size());
    if (static_cast<int>(net.modules.size()) != levels)
        throw std::invalid_argument("cascade has " + std::to_string(net.modules.size()) +
                                    " modules for " + std::to_string(levels) + " pyramid levels");
    if (steps < 0) steps = levels;
    if (steps < 1 || steps > levels)
        throw std::invalid_argument("cascade step count out of range");
    if (!trainable_modules.empty() && static_cast<int>(trainable_modules.size()) < steps)
        throw std::invalid_argument("trainable mask shorter than the cascade");

    const Shape coarsest = tape.value(pyramid.levels[levels - 1]).shape();
    if (coarsest.h % net.scale != 0 || coarsest.w % net.scale != 0)
        throw std::invalid_argument("coarsest level " + coarsest.str() +
                                    " is not divisible by the cascade scale");

    CascadeState state;
    ValueId d = tape.constant(
        Tensor::full({coarsest.n, 1, coarsest.h / net.scale, coarsest.w / net.scale}, 0.0));
    state.densities.push_back(d);
    for (int j = 0; j < steps; ++j) {
        const int level = levels - 1 - j;  // internal order is coarsest first
        const bool trainable = trainable_modules.empty() || trainable_modules[j];
        StepResult r = residual_step(tape, d, pyramid.levels[level], net.modules[level], net.scale,
                                     trainable);
        d = r.density;
        state.densities.push_back(d);
        state.upsampled.push_back(r.upsampled);
        state.residuals.push_back(r.residual);
    }
    state.final_density = d;
    return state;
}

std::vector<Tensor> decompose(const Tape& tape, const CascadeState& cascade) {
    std::vector<Tensor> out;
    out.reserve(cascade.residuals.size());
    for (ValueId id : cascade.residuals) out.push_back(tape.value(id));
    return out;
}

Tensor reconstruct_from_residuals(const std::vector<Tensor>& residuals, int scale) {
    if (residuals.empty()) throw std::invalid_argument("nothing to reconstruct from");
    Tensor acc = residuals[0];  // u_s of the zero initial map contributes nothing
    for (std::size_t j = 1; j < residuals.size(); ++j) {
        Tensor up = upsample_bilinear_tensor(acc, scale);
        if (!(up.shape() == residuals[j].shape()))
            throw std::invalid_argument("residual " + residuals[j].shape().str() +
                                        " does not chain onto " + up.shape().str());
        for (std::size_t i = 0; i < up.numel(); ++i) up.vec()[i] += residuals[j].vec()[i];
        acc = std::move(up);
    }
    return acc;
}

}  // namespace crdnet

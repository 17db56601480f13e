#include <cmath>
#include <stdexcept>
#include <string>

#include "crdnet/pnet.hpp"
#include "crdnet/rng.hpp"

namespace crdnet {

namespace {

// scale must be a power of two; downscaling is repeated 2x2 maxpool.
int pool_steps(int scale) {
    int steps = 0;
    int v = scale;
    while (v > 1 && v % 2 == 0) {
        v /= 2;
        ++steps;
    }
    if (v != 1) throw std::invalid_argument("pyramid scale must be a power of two, got " + std::to_string(scale));
    return steps;
}

}  // namespace

void BackboneConfig::validate() const {
    if (stages.empty()) throw std::invalid_argument("backbone needs at least one stage");
    if (scale < 2) throw std::invalid_argument("pyramid scale must be at least 2");
    pool_steps(scale);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].empty())
            throw std::invalid_argument("backbone stage " + std::to_string(i) + " has no layers");
        for (const ConvLayerSpec& l : stages[i]) {
            if (l.out_channels < 1)
                throw std::invalid_argument("backbone stage " + std::to_string(i) +
                                            " has a layer with out_channels < 1");
            if (l.kernel < 1 || l.kernel % 2 == 0)
                throw std::invalid_argument("backbone kernels must be odd and positive, got " +
                                            std::to_string(l.kernel));
            if (l.dilation < 1)
                throw std::invalid_argument("backbone dilation must be at least 1");
        }
    }
}

BackboneConfig default_backbone_config() {
    BackboneConfig cfg;
    for (int width : {16, 32, 64, 64}) cfg.stages.push_back({{width, 3, 1}, {width, 3, 1}});
    cfg.scale = 2;
    return cfg;
}

std::vector<Parameter*> Backbone::parameters() {
    std::vector<Parameter*> out;
    for (auto& stage : stages)
        for (ConvLayer& layer : stage) {
            out.push_back(&layer.weight);
            out.push_back(&layer.bias);
        }
    return out;
}

Backbone build_backbone(const BackboneConfig& cfg, int in_channels, std::uint64_t seed) {
    cfg.validate();
    if (in_channels < 1) throw std::invalid_argument("backbone in_channels must be at least 1");

    Backbone net;
    net.config = cfg;
    net.in_channels = in_channels;
    Rng rng(seed);

    int channels = in_channels;
    for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
        std::vector<ConvLayer> stage;
        for (std::size_t li = 0; li < cfg.stages[si].size(); ++li) {
            const ConvLayerSpec& spec = cfg.stages[si][li];
            const std::string base = "pnet.s" + std::to_string(si) + ".l" + std::to_string(li);

            ConvLayer layer;
            Tensor w({spec.out_channels, channels, spec.kernel, spec.kernel});
            const double fan_in = static_cast<double>(channels) * spec.kernel * spec.kernel;
            const double stddev = std::sqrt(2.0 / fan_in);
            for (Scalar& v : w.vec()) v = stddev * rng.normal();
            layer.weight = Parameter(base + ".w", std::move(w));
            layer.bias = Parameter(base + ".b", Shape{1, 1, 1, spec.out_channels});

            layer.spec.stride = 1;
            layer.spec.padding = (spec.kernel / 2) * spec.dilation;
            layer.spec.dilation = spec.dilation;

            stage.push_back(std::move(layer));
            channels = spec.out_channels;
        }
        net.stages.push_back(std::move(stage));
    }
    return net;
}

FeaturePyramid extract_pyramid(Tape& tape, ValueId image, Backbone& net, bool trainable) {
    const Shape in_shape = tape.value(image).shape();
    const int levels = net.config.levels();
    int need = 1;
    for (int k = 1; k < levels; ++k) need *= net.config.scale;
    if (in_shape.h % need != 0 || in_shape.w % need != 0)
        throw std::invalid_argument("input " + std::to_string(in_shape.h) + "x" +
                                    std::to_string(in_shape.w) + " is not divisible by " +
                                    std::to_string(need) + " (scale^(levels-1))");
    if (in_shape.c != net.in_channels)
        throw std::invalid_argument("backbone expects " + std::to_string(net.in_channels) +
                                    " input channels, got " + std::to_string(in_shape.c));

    const int pools = pool_steps(net.config.scale);
    FeaturePyramid pyr;
    ValueId x = image;
    for (int k = 0; k < levels; ++k) {
        if (k > 0)
            for (int p = 0; p < pools; ++p) x = tape.maxpool2(x);
        for (ConvLayer& layer : net.stages[k]) {
            x = tape.conv2d(x, layer.weight, layer.bias, layer.spec, trainable);
            x = tape.relu(x);
        }
        pyr.levels.push_back(x);
    }
    return pyr;
}

}  // namespace crdnet

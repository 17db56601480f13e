#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crdnet/density.hpp"
#include "crdnet/tape.hpp"

namespace crdnet {

DensityMap generate_density_map(const PointAnnotation& ann, double sigma) {
    if (sigma <= 0) throw std::invalid_argument("generate_density_map: sigma must be > 0");
    DensityMap map(ann.height, ann.width);
    const double radius = 4.0 * sigma;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (const Point& p : ann.points) {
        if (p.x < 0 || p.x >= ann.width || p.y < 0 || p.y >= ann.height)
            throw std::invalid_argument("annotation point (" + std::to_string(p.x) + ", " +
                                        std::to_string(p.y) + ") outside image bounds");
        const int x0 = std::max(0, static_cast<int>(std::ceil(p.x - radius)));
        const int x1 = std::min(ann.width - 1, static_cast<int>(std::floor(p.x + radius)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(p.y - radius)));
        const int y1 = std::min(ann.height - 1, static_cast<int>(std::floor(p.y + radius)));
        Scalar norm = 0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - p.x, dy = y - p.y;
                norm += std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - p.x, dy = y - p.y;
                map.at(y, x) += std::exp(-(dx * dx + dy * dy) * inv2s2) / norm;
            }
    }
    return map;
}

DensityMap downsample_density(const DensityMap& map, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample_density: factor must be >= 1");
    if (map.height % factor != 0 || map.width % factor != 0)
        throw std::invalid_argument("downsample_density: " + std::to_string(map.height) + "x" +
                                    std::to_string(map.width) + " not divisible by " +
                                    std::to_string(factor));
    DensityMap out(map.height / factor, map.width / factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            Scalar acc = 0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) acc += map.at(y * factor + dy, x * factor + dx);
            out.at(y, x) = acc;
        }
    return out;
}

TargetPyramid build_target_pyramid(const DensityMap& gt, int levels) {
    if (levels < 1) throw std::invalid_argument("build_target_pyramid: levels must be >= 1");
    TargetPyramid pyr;
    pyr.levels.reserve(levels);
    int factor = 1;
    for (int k = 0; k < levels; ++k) {
        pyr.levels.push_back(k == 0 ? gt : downsample_density(gt, factor));
        factor *= 2;
    }
    return pyr;
}

DensityMap target_residual(const DensityMap& target, const DensityMap& d_prev, int factor) {
    const Tensor up = upsample_bilinear_tensor(density_to_tensor(d_prev), factor);
    if (up.shape().h != target.height || up.shape().w != target.width)
        throw std::invalid_argument("target_residual: upsampled previous map is " +
                                    up.shape().str() + ", target is " + std::to_string(target.height) +
                                    "x" + std::to_string(target.width));
    DensityMap out(target.height, target.width);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = target.values[i] - up.data()[i];
    return out;
}

Tensor density_to_tensor(const DensityMap& m) {
    return Tensor(Shape{1, 1, m.height, m.width}, m.values);
}

DensityMap tensor_to_density(const Tensor& t, int batch_index) {
    const Shape s = t.shape();
    if (s.c != 1) throw std::invalid_argument("tensor_to_density expects a single channel");
    DensityMap out(s.h, s.w);
    const Scalar* src = t.data() + t.offset(batch_index, 0, 0, 0);
    std::copy(src, src + out.values.size(), out.values.begin());
    return out;
}

}  // namespace crdnet

#pragma once

#include <vector>

#include "crdnet/tensor.hpp"

namespace crdnet {

struct Point {
    double x = 0;
    double y = 0;
};

// Head positions for one image; points live in [0, width) x [0, height).
struct PointAnnotation {
    int width = 0;
    int height = 0;
    std::vector<Point> points;
};

// Single-channel non-negative grid whose sum is a person count. Estimated
// maps can carry negative values; ground truth never does.
struct DensityMap {
    int height = 0;
    int width = 0;
    std::vector<Scalar> values;

    DensityMap() = default;
    DensityMap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0) {}

    Scalar& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    Scalar at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    Scalar sum() const {
        Scalar acc = 0;
        for (Scalar v : values) acc += v;
        return acc;
    }
};

// One discretized 2-D Gaussian per head, truncated at 4*sigma and
// renormalized over its in-image support so each kernel sums to exactly 1.
DensityMap generate_density_map(const PointAnnotation& ann, double sigma);

// Non-overlapping factor x factor block sums; the map's integral is a crowd
// count, so downsampling must preserve it.
DensityMap downsample_density(const DensityMap& map, int factor);

// Training targets at every cascade resolution: levels[k] is the ground
// truth downsampled by 2^k (levels[0] is the full-resolution map).
struct TargetPyramid {
    std::vector<DensityMap> levels;
};

TargetPyramid build_target_pyramid(const DensityMap& gt, int levels);

// Supervision for one cascade level: target minus the upsampled previous
// estimate. May be negative.
DensityMap target_residual(const DensityMap& target, const DensityMap& d_prev, int factor);

// DensityMap <-> (1,1,h,w) tensor bridges.
Tensor density_to_tensor(const DensityMap& m);
DensityMap tensor_to_density(const Tensor& t, int batch_index = 0);

}  // namespace crdnet

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "crdnet/density.hpp"
#include "crdnet/tensor.hpp"

namespace crdnet {

// Annotation file: UTF-8 JSON {"width": W, "height": H, "points": [[x, y], ...]}.
PointAnnotation load_annotation(const std::filesystem::path& path);
void save_annotation(const std::filesystem::path& path, const PointAnnotation& ann);

// Density grid file: magic "CRD1", height and width as u32 LE, then
// height*width f32 LE values, row-major. Values are stored at single
// precision; reading widens back to the working precision.
DensityMap read_density(const std::filesystem::path& path);
void write_density(const std::filesystem::path& path, const DensityMap& map);

// Per-map max-normalized 8-bit grayscale PNG, for eyeballing only.
void write_density_png(const std::filesystem::path& path, const DensityMap& map);

// Checkpoint container: magic "CRDC", format version, then each parameter's
// name, shape and f64 LE values.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace crdnet

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crdnet/rng.hpp"
#include "crdnet/synth.hpp"

namespace crdnet {

void validate(const SynthConfig& cfg) {
    if (cfg.image_size < 8) throw std::invalid_argument("synth: image size too small");
    if (cfg.count_min < 0 || cfg.count_min > cfg.count_max)
        throw std::invalid_argument("synth: need 0 <= count_min <= count_max");
    if (cfg.radius_top <= 0 || cfg.radius_bottom <= 0)
        throw std::invalid_argument("synth: blob radii must be > 0");
    if (cfg.noise_amplitude < 0) throw std::invalid_argument("synth: negative noise amplitude");
}

Scene generate_scene(const SynthConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    const int S = cfg.image_size;

    struct Blob {
        double cx, cy, radius, amplitude;
    };
    const int count = static_cast<int>(rng.uniform_int(cfg.count_min, cfg.count_max));
    // rounding can land an in-[0,1) draw exactly on the excluded upper bound
    const auto coord = [&rng](int size) {
        const double v = rng.uniform(0.0, size);
        return v < size ? v : std::nextafter(static_cast<double>(size), 0.0);
    };
    std::vector<Blob> blobs;
    blobs.reserve(count);
    for (int i = 0; i < count; ++i) {
        Blob b;
        b.cx = coord(S);
        b.cy = coord(S);
        const double depth = b.cy / (S - 1);  // 0 at top (far), 1 at bottom (near)
        b.radius = (cfg.radius_top + (cfg.radius_bottom - cfg.radius_top) * depth) * rng.uniform(0.85, 1.15);
        b.amplitude = rng.uniform(0.6, 1.0);
        blobs.push_back(b);
    }

    Scene scene;
    scene.image = Tensor(Shape{1, 1, S, S});
    scene.annotation.width = S;
    scene.annotation.height = S;
    for (const Blob& b : blobs) {
        const double inv2r2 = 1.0 / (2.0 * b.radius * b.radius);
        const double cut = 3.0 * b.radius;
        const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - cut)));
        const int x1 = std::min(S - 1, static_cast<int>(std::ceil(b.cx + cut)));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - cut)));
        const int y1 = std::min(S - 1, static_cast<int>(std::ceil(b.cy + cut)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - b.cx, dy = y - b.cy;
                scene.image.at(0, 0, y, x) += b.amplitude * std::exp(-(dx * dx + dy * dy) * inv2r2);
            }
        scene.annotation.points.push_back({b.cx, b.cy});
    }

    if (cfg.noise_amplitude > 0)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                scene.image.at(0, 0, y, x) += cfg.noise_amplitude * rng.uniform(-1.0, 1.0);

    return scene;
}

}  // namespace crdnet

#pragma once

// Shared oracles and the finite-difference harness. Everything here is
// deliberately naive: these are the independent references the fast paths
// are judged against.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crdnet/rng.hpp"
#include "crdnet/tape.hpp"

namespace testsupport {

using crdnet::ConvSpec;
using crdnet::Parameter;
using crdnet::Rng;
using crdnet::Scalar;
using crdnet::Shape;
using crdnet::Tape;
using crdnet::Tensor;
using crdnet::ValueId;

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (Scalar& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

// Plain quadruple-loop cross-correlation.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, ConvSpec spec = {}) {
    const Shape xs = x.shape(), ws = w.shape();
    const int kh = ws.h, kw = ws.w;
    const int out_h = (xs.h + 2 * spec.padding - spec.dilation * (kh - 1) - 1) / spec.stride + 1;
    const int out_w = (xs.w + 2 * spec.padding - spec.dilation * (kw - 1) - 1) / spec.stride + 1;
    Tensor out({xs.n, ws.n, out_h, out_w});
    for (int i = 0; i < xs.n; ++i)
        for (int oc = 0; oc < ws.n; ++oc)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    Scalar acc = b.data()[oc];
                    for (int ic = 0; ic < xs.c; ++ic)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
                                const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                                acc += x.at(i, ic, iy, ix) * w.at(oc, ic, ky, kx);
                            }
                    out.at(i, oc, oy, ox) = acc;
                }
    return out;
}

// Exhaustive per-anchor patch enumeration of the local count loss, summing
// |sum over h x h window of (est - tgt)| over the stride-t anchor grid,
// averaged over the batch.
inline Scalar brute_force_local_count(const Tensor& est, const Tensor& tgt, int h, int t) {
    const Shape s = est.shape();
    Scalar total = 0;
    for (int i = 0; i < s.n; ++i)
        for (int ay = 0; ay + h <= s.h; ay += t)
            for (int ax = 0; ax + h <= s.w; ax += t) {
                Scalar patch = 0;
                for (int y = ay; y < ay + h; ++y)
                    for (int x = ax; x < ax + h; ++x)
                        patch += est.at(i, 0, y, x) - tgt.at(i, 0, y, x);
                total += std::abs(patch);
            }
    return total / static_cast<Scalar>(s.n);
}

// Direct double-loop Euclidean loss: batch mean of summed squared pixel
// differences.
inline Scalar brute_force_euclidean(const Tensor& est, const Tensor& tgt) {
    const Shape s = est.shape();
    Scalar total = 0;
    for (int i = 0; i < s.n; ++i)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const Scalar d = est.at(i, c, y, x) - tgt.at(i, c, y, x);
                    total += d * d;
                }
    return total / static_cast<Scalar>(s.n);
}

// Per-output-pixel bilinear upsampling oracle with half-pixel centers and
// edge clamping, written against the definition rather than the fast path.
inline Tensor naive_upsample(const Tensor& in, int factor) {
    const Shape s = in.shape();
    Tensor out({s.n, s.c, s.h * factor, s.w * factor});
    auto src_of = [&](int o, int limit) {
        double src = (o + 0.5) / factor - 0.5;
        int lo = static_cast<int>(std::floor(src));
        double f = src - lo;
        if (lo < 0) { lo = 0; f = 0; }
        if (lo >= limit - 1) { lo = limit - 1; f = 0; }
        return std::pair<int, double>(lo, f);
    };
    for (int i = 0; i < s.n; ++i)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < s.h * factor; ++oy)
                for (int ox = 0; ox < s.w * factor; ++ox) {
                    const auto [y0, fy] = src_of(oy, s.h);
                    const auto [x0, fx] = src_of(ox, s.w);
                    const int y1 = std::min(y0 + 1, s.h - 1);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const Scalar top = in.at(i, c, y0, x0) + fx * (in.at(i, c, y0, x1) - in.at(i, c, y0, x0));
                    const Scalar bot = in.at(i, c, y1, x0) + fx * (in.at(i, c, y1, x1) - in.at(i, c, y1, x0));
                    out.at(i, c, oy, ox) = top + fy * (bot - top);
                }
    return out;
}

using GraphFn = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

struct GradientCheck {
    double max_rel_err = 0;
    std::size_t checked = 0;
};

// Central finite differences against the tape gradient for every entry of
// every input. Relative error uses a floor so near-zero gradients are judged
// on a small absolute scale instead of blowing up the ratio.
inline GradientCheck check_gradient(const GraphFn& graph, const std::vector<Tensor>& inputs,
                                    double step = 1e-5) {
    std::vector<Parameter> params;
    params.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        params.emplace_back("in" + std::to_string(i), inputs[i]);

    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(params.size());
    for (Parameter& p : params) ids.push_back(tape.leaf(p, true));
    tape.backward(graph(tape, ids));

    auto eval = [&](const std::vector<Tensor>& probe) {
        Tape t;
        std::vector<ValueId> vids;
        vids.reserve(probe.size());
        for (const Tensor& x : probe) vids.push_back(t.constant(x));
        return t.scalar_value(graph(t, vids));
    };

    GradientCheck result;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
            std::vector<Tensor> probe = inputs;
            probe[i].vec()[j] = inputs[i].vec()[j] + step;
            const Scalar up = eval(probe);
            probe[i].vec()[j] = inputs[i].vec()[j] - step;
            const Scalar down = eval(probe);
            const Scalar fd = (up - down) / (2 * step);
            const Scalar an = params[i].grad().vec()[j];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            result.max_rel_err = std::max(result.max_rel_err, std::abs(fd - an) / denom);
            ++result.checked;
        }
    }
    return result;
}

}  // namespace testsupport

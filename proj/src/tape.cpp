#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

#include "crdnet/kernels.hpp"
#include "crdnet/tape.hpp"

namespace crdnet {

namespace {

struct AxisMap {
    std::vector<int> lo, hi;
    std::vector<Scalar> frac;
};

// Source taps for one output axis: position (o + 0.5)/f - 0.5, edge-clamped.
AxisMap make_axis_map(int in_size, int factor) {
    AxisMap m;
    const int out_size = in_size * factor;
    m.lo.resize(out_size);
    m.hi.resize(out_size);
    m.frac.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
        Scalar src = (o + Scalar(0.5)) / factor - Scalar(0.5);
        if (src < 0) src = 0;
        if (src > in_size - 1) src = in_size - 1;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in_size - 1) lo = in_size - 1;
        m.lo[o] = lo;
        m.hi[o] = lo + 1 < in_size ? lo + 1 : in_size - 1;
        m.frac[o] = src - lo;
    }
    return m;
}

inline Scalar lerp(Scalar a, Scalar b, Scalar f) { return a + f * (b - a); }

struct ConvDims {
    int out_h, out_w, col_rows, col_cols;
};

ConvDims conv_dims(const Shape& x, const Shape& w, const ConvSpec& s) {
    if (w.c != x.c)
        throw std::invalid_argument("conv2d channel mismatch: input has " + std::to_string(x.c) +
                                    " channels, weights expect " + std::to_string(w.c));
    if (s.stride < 1 || s.padding < 0 || s.dilation < 1)
        throw std::invalid_argument("conv2d: invalid stride/padding/dilation");
    const int eff_h = s.dilation * (w.h - 1) + 1;
    const int eff_w = s.dilation * (w.w - 1) + 1;
    const int out_h = (x.h + 2 * s.padding - eff_h) / s.stride + 1;
    const int out_w = (x.w + 2 * s.padding - eff_w) / s.stride + 1;
    if (x.h + 2 * s.padding < eff_h || x.w + 2 * s.padding < eff_w || out_h < 1 || out_w < 1)
        throw std::invalid_argument("conv2d output size < 1 for input " + x.str());
    return {out_h, out_w, x.c * w.h * w.w, out_h * out_w};
}

// col[(c*kh+i)*kw+j, oy*out_w+ox] = x[c, oy*stride + i*dil - pad, ...]
void im2col(const Scalar* x, const Shape& xs, const Shape& ws, const ConvSpec& s,
            const ConvDims& d, Scalar* col) {
    const int kh = ws.h, kw = ws.w;
    for (int c = 0; c < xs.c; ++c) {
        const Scalar* plane = x + static_cast<std::size_t>(c) * xs.h * xs.w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                Scalar* row = col + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * d.col_cols;
                for (int oy = 0; oy < d.out_h; ++oy) {
                    const int iy = oy * s.stride + ki * s.dilation - s.padding;
                    Scalar* out = row + static_cast<std::size_t>(oy) * d.out_w;
                    if (iy < 0 || iy >= xs.h) {
                        std::memset(out, 0, sizeof(Scalar) * d.out_w);
                        continue;
                    }
                    const Scalar* in_row = plane + static_cast<std::size_t>(iy) * xs.w;
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const int ix = ox * s.stride + kj * s.dilation - s.padding;
                        out[ox] = (ix >= 0 && ix < xs.w) ? in_row[ix] : Scalar(0);
                    }
                }
            }
        }
    }
}

void col2im_add(const Scalar* col, const Shape& xs, const Shape& ws, const ConvSpec& s,
                const ConvDims& d, Scalar* gx) {
    const int kh = ws.h, kw = ws.w;
    for (int c = 0; c < xs.c; ++c) {
        Scalar* plane = gx + static_cast<std::size_t>(c) * xs.h * xs.w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const Scalar* row = col + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * d.col_cols;
                for (int oy = 0; oy < d.out_h; ++oy) {
                    const int iy = oy * s.stride + ki * s.dilation - s.padding;
                    if (iy < 0 || iy >= xs.h) continue;
                    Scalar* out_row = plane + static_cast<std::size_t>(iy) * xs.w;
                    const Scalar* in_row = row + static_cast<std::size_t>(oy) * d.out_w;
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const int ix = ox * s.stride + kj * s.dilation - s.padding;
                        if (ix >= 0 && ix < xs.w) out_row[ix] += in_row[ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Shape& w, const ConvSpec& s) {
    return w.h == 1 && w.w == 1 && s.stride == 1 && s.padding == 0 && s.dilation == 1;
}

}  // namespace

ValueId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(ValueId id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

ValueId Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
}

ValueId Tape::leaf(Parameter& p, bool trainable) {
    if (!trainable) return constant(p.value());
    Node n;
    n.value = p.value();
    n.requires_grad = true;
    n.param = &p;
    n.backprop = [](Tape&, Node& self) {
        kernels::active().axpy(Scalar(1), self.grad.data(), self.param->grad().data(), self.grad.numel());
    };
    return push(std::move(n));
}

const Tensor& Tape::value(ValueId id) const { return nodes_[id].value; }

Scalar Tape::scalar_value(ValueId id) const {
    const Tensor& t = nodes_[id].value;
    if (t.numel() != 1) throw std::logic_error("scalar_value on non-scalar node");
    return t.data()[0];
}

const Tensor* Tape::node_grad(ValueId id) const {
    return nodes_[id].has_grad ? &nodes_[id].grad : nullptr;
}

ValueId Tape::conv2d(ValueId x, Parameter& w, Parameter& b, ConvSpec spec, bool trainable) {
    return conv2d(x, leaf(w, trainable), leaf(b, trainable), spec);
}

ValueId Tape::conv2d(ValueId xid, ValueId wid, ValueId bid, ConvSpec spec) {
    const Tensor& x = nodes_[xid].value;
    const Tensor& w = nodes_[wid].value;
    const Tensor& b = nodes_[bid].value;
    const Shape xs = x.shape(), ws = w.shape();
    const ConvDims d = conv_dims(xs, ws, spec);
    if (static_cast<int>(b.numel()) != ws.n)
        throw std::invalid_argument("conv2d bias size must equal output channels");

    const auto& K = kernels::active();
    Node n;
    n.value = Tensor(Shape{xs.n, ws.n, d.out_h, d.out_w});
    const bool pointwise = is_pointwise(ws, spec);
    std::vector<Scalar> col;
    if (!pointwise) col.resize(static_cast<std::size_t>(d.col_rows) * d.col_cols);
    for (int i = 0; i < xs.n; ++i) {
        const Scalar* xin = x.data() + x.offset(i, 0, 0, 0);
        const Scalar* cols = xin;
        if (!pointwise) {
            im2col(xin, xs, ws, spec, d, col.data());
            cols = col.data();
        }
        Scalar* out = n.value.data() + n.value.offset(i, 0, 0, 0);
        K.gemm_nn(ws.n, d.col_cols, d.col_rows, w.data(), cols, out, false);
        for (int oc = 0; oc < ws.n; ++oc) {
            const Scalar bias = b.data()[oc];
            Scalar* plane = out + static_cast<std::size_t>(oc) * d.col_cols;
            for (int j = 0; j < d.col_cols; ++j) plane[j] += bias;
        }
    }

    n.requires_grad = wants_grad(xid) || wants_grad(wid) || wants_grad(bid);
    if (n.requires_grad) {
        n.backprop = [xid, wid, bid, spec, d, pointwise](Tape& t, Node& self) {
            const Tensor& x = t.node(xid).value;
            const Tensor& w = t.node(wid).value;
            const Shape xs = x.shape(), ws = w.shape();
            const auto& K = kernels::active();
            const bool need_x = t.wants_grad(xid);
            const bool need_w = t.wants_grad(wid);
            const bool need_b = t.wants_grad(bid);
            std::vector<Scalar> col, dcol;
            if (!pointwise && need_w) col.resize(static_cast<std::size_t>(d.col_rows) * d.col_cols);
            if (!pointwise && need_x) dcol.resize(static_cast<std::size_t>(d.col_rows) * d.col_cols);
            for (int i = 0; i < xs.n; ++i) {
                const Scalar* gy = self.grad.data() + self.grad.offset(i, 0, 0, 0);
                if (need_b) {
                    Tensor& gb = t.grad_buf(bid);
                    for (int oc = 0; oc < ws.n; ++oc) {
                        const Scalar* plane = gy + static_cast<std::size_t>(oc) * d.col_cols;
                        Scalar acc = 0;
                        for (int j = 0; j < d.col_cols; ++j) acc += plane[j];
                        gb.data()[oc] += acc;
                    }
                }
                if (need_w) {
                    const Scalar* xin = x.data() + x.offset(i, 0, 0, 0);
                    const Scalar* cols = xin;
                    if (!pointwise) {
                        im2col(xin, xs, ws, spec, d, col.data());
                        cols = col.data();
                    }
                    K.gemm_nt(ws.n, d.col_rows, d.col_cols, gy, cols, t.grad_buf(wid).data(), true);
                }
                if (need_x) {
                    Scalar* gx = t.grad_buf(xid).data() + x.offset(i, 0, 0, 0);
                    if (pointwise) {
                        K.gemm_tn(d.col_rows, d.col_cols, ws.n, w.data(), gy, gx, true);
                    } else {
                        K.gemm_tn(d.col_rows, d.col_cols, ws.n, w.data(), gy, dcol.data(), false);
                        col2im_add(dcol.data(), xs, ws, spec, d, gx);
                    }
                }
            }
        };
    }
    return push(std::move(n));
}

ValueId Tape::relu(ValueId xid) {
    const Tensor& x = nodes_[xid].value;
    Node n;
    n.value = Tensor(x.shape());
    kernels::active().relu_fwd(x.data(), n.value.data(), x.numel());
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid](Tape& t, Node& self) {
            const Tensor& x = t.node(xid).value;
            kernels::active().relu_bwd(x.data(), self.grad.data(), t.grad_buf(xid).data(), x.numel());
        };
    }
    return push(std::move(n));
}

ValueId Tape::maxpool2(ValueId xid) {
    const Tensor& x = nodes_[xid].value;
    const Shape xs = x.shape();
    if (xs.h % 2 != 0 || xs.w % 2 != 0)
        throw std::invalid_argument("maxpool2 requires even spatial dims, got " + xs.str());
    Node n;
    n.value = Tensor(Shape{xs.n, xs.c, xs.h / 2, xs.w / 2});
    auto argmax = std::make_shared<std::vector<std::size_t>>(n.value.numel());
    const Shape os = n.value.shape();
    std::size_t o = 0;
    for (int i = 0; i < xs.n; ++i)
        for (int c = 0; c < xs.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int xcol = 0; xcol < os.w; ++xcol, ++o) {
                    // first occurrence wins on ties: scan order with strict >
                    std::size_t best_idx = x.offset(i, c, 2 * y, 2 * xcol);
                    Scalar best = x.data()[best_idx];
                    const int ys[2] = {2 * y, 2 * y + 1};
                    const int xsc[2] = {2 * xcol, 2 * xcol + 1};
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = x.offset(i, c, ys[dy], xsc[dx]);
                            if (x.data()[idx] > best) {
                                best = x.data()[idx];
                                best_idx = idx;
                            }
                        }
                    n.value.data()[o] = best;
                    (*argmax)[o] = best_idx;
                }
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid, argmax](Tape& t, Node& self) {
            Tensor& gx = t.grad_buf(xid);
            for (std::size_t j = 0; j < self.grad.numel(); ++j)
                gx.data()[(*argmax)[j]] += self.grad.data()[j];
        };
    }
    return push(std::move(n));
}

Tensor upsample_bilinear_tensor(const Tensor& in, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
    const Shape xs = in.shape();
    const AxisMap my = make_axis_map(xs.h, factor);
    const AxisMap mx = make_axis_map(xs.w, factor);
    Tensor out(Shape{xs.n, xs.c, xs.h * factor, xs.w * factor});
    for (int i = 0; i < xs.n; ++i)
        for (int c = 0; c < xs.c; ++c) {
            const Scalar* plane = in.data() + in.offset(i, c, 0, 0);
            Scalar* oplane = out.data() + out.offset(i, c, 0, 0);
            for (int y = 0; y < xs.h * factor; ++y) {
                const Scalar* r0 = plane + static_cast<std::size_t>(my.lo[y]) * xs.w;
                const Scalar* r1 = plane + static_cast<std::size_t>(my.hi[y]) * xs.w;
                const Scalar fy = my.frac[y];
                Scalar* orow = oplane + static_cast<std::size_t>(y) * xs.w * factor;
                for (int xo = 0; xo < xs.w * factor; ++xo) {
                    const Scalar fx = mx.frac[xo];
                    const Scalar v0 = lerp(r0[mx.lo[xo]], r0[mx.hi[xo]], fx);
                    const Scalar v1 = lerp(r1[mx.lo[xo]], r1[mx.hi[xo]], fx);
                    orow[xo] = lerp(v0, v1, fy);
                }
            }
        }
    return out;
}

ValueId Tape::upsample_bilinear(ValueId xid, int factor) {
    Node n;
    n.value = upsample_bilinear_tensor(nodes_[xid].value, factor);
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid, factor](Tape& t, Node& self) {
            const Shape xs = t.node(xid).value.shape();
            const AxisMap my = make_axis_map(xs.h, factor);
            const AxisMap mx = make_axis_map(xs.w, factor);
            Tensor& gx = t.grad_buf(xid);
            for (int i = 0; i < xs.n; ++i)
                for (int c = 0; c < xs.c; ++c) {
                    Scalar* gplane = gx.data() + gx.offset(i, c, 0, 0);
                    const Scalar* gout = self.grad.data() + self.grad.offset(i, c, 0, 0);
                    for (int y = 0; y < xs.h * factor; ++y) {
                        const Scalar fy = my.frac[y];
                        Scalar* g0 = gplane + static_cast<std::size_t>(my.lo[y]) * xs.w;
                        Scalar* g1 = gplane + static_cast<std::size_t>(my.hi[y]) * xs.w;
                        const Scalar* grow = gout + static_cast<std::size_t>(y) * xs.w * factor;
                        for (int xo = 0; xo < xs.w * factor; ++xo) {
                            const Scalar fx = mx.frac[xo];
                            const Scalar g = grow[xo];
                            g0[mx.lo[xo]] += (1 - fy) * (1 - fx) * g;
                            g0[mx.hi[xo]] += (1 - fy) * fx * g;
                            g1[mx.lo[xo]] += fy * (1 - fx) * g;
                            g1[mx.hi[xo]] += fy * fx * g;
                        }
                    }
                }
        };
    }
    return push(std::move(n));
}

ValueId Tape::concat_channels(ValueId aid, ValueId bid) {
    const Tensor& a = nodes_[aid].value;
    const Tensor& b = nodes_[bid].value;
    const Shape as = a.shape(), bs = b.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
        throw std::invalid_argument("concat_channels mismatch: " + as.str() + " vs " + bs.str());
    Node n;
    n.value = Tensor(Shape{as.n, as.c + bs.c, as.h, as.w});
    const std::size_t plane = static_cast<std::size_t>(as.h) * as.w;
    for (int i = 0; i < as.n; ++i) {
        Scalar* out = n.value.data() + n.value.offset(i, 0, 0, 0);
        std::memcpy(out, a.data() + static_cast<std::size_t>(i) * as.c * plane,
                    sizeof(Scalar) * as.c * plane);
        std::memcpy(out + static_cast<std::size_t>(as.c) * plane,
                    b.data() + static_cast<std::size_t>(i) * bs.c * plane,
                    sizeof(Scalar) * bs.c * plane);
    }
    n.requires_grad = wants_grad(aid) || wants_grad(bid);
    if (n.requires_grad) {
        n.backprop = [aid, bid, as, bs, plane](Tape& t, Node& self) {
            const auto& K = kernels::active();
            for (int i = 0; i < as.n; ++i) {
                const Scalar* g = self.grad.data() + self.grad.offset(i, 0, 0, 0);
                if (t.wants_grad(aid) && as.c > 0)
                    K.axpy(Scalar(1), g, t.grad_buf(aid).data() + static_cast<std::size_t>(i) * as.c * plane,
                           as.c * plane);
                if (t.wants_grad(bid) && bs.c > 0)
                    K.axpy(Scalar(1), g + static_cast<std::size_t>(as.c) * plane,
                           t.grad_buf(bid).data() + static_cast<std::size_t>(i) * bs.c * plane, bs.c * plane);
            }
        };
    }
    return push(std::move(n));
}

ValueId Tape::add(ValueId aid, ValueId bid) {
    const Tensor& a = nodes_[aid].value;
    const Tensor& b = nodes_[bid].value;
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument("add shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
    Node n;
    n.value = Tensor(a.shape());
    kernels::active().add(a.data(), b.data(), n.value.data(), a.numel());
    n.requires_grad = wants_grad(aid) || wants_grad(bid);
    if (n.requires_grad) {
        n.backprop = [aid, bid](Tape& t, Node& self) {
            const auto& K = kernels::active();
            if (t.wants_grad(aid)) K.axpy(Scalar(1), self.grad.data(), t.grad_buf(aid).data(), self.grad.numel());
            if (t.wants_grad(bid)) K.axpy(Scalar(1), self.grad.data(), t.grad_buf(bid).data(), self.grad.numel());
        };
    }
    return push(std::move(n));
}

ValueId Tape::sub(ValueId aid, ValueId bid) {
    const Tensor& a = nodes_[aid].value;
    const Tensor& b = nodes_[bid].value;
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument("sub shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
    Node n;
    n.value = Tensor(a.shape());
    kernels::active().sub(a.data(), b.data(), n.value.data(), a.numel());
    n.requires_grad = wants_grad(aid) || wants_grad(bid);
    if (n.requires_grad) {
        n.backprop = [aid, bid](Tape& t, Node& self) {
            const auto& K = kernels::active();
            if (t.wants_grad(aid)) K.axpy(Scalar(1), self.grad.data(), t.grad_buf(aid).data(), self.grad.numel());
            if (t.wants_grad(bid)) K.axpy(Scalar(-1), self.grad.data(), t.grad_buf(bid).data(), self.grad.numel());
        };
    }
    return push(std::move(n));
}

ValueId Tape::scale(ValueId xid, Scalar s) {
    const Tensor& x = nodes_[xid].value;
    Node n;
    n.value = Tensor(x.shape());
    kernels::active().scale(x.data(), s, n.value.data(), x.numel());
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid, s](Tape& t, Node& self) {
            kernels::active().axpy(s, self.grad.data(), t.grad_buf(xid).data(), self.grad.numel());
        };
    }
    return push(std::move(n));
}

ValueId Tape::sum(ValueId xid) {
    const Tensor& x = nodes_[xid].value;
    Scalar acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    Node n;
    n.value = Tensor(Shape{1, 1, 1, 1}, {acc});
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid](Tape& t, Node& self) {
            const Scalar g = self.grad.data()[0];
            Tensor& gx = t.grad_buf(xid);
            for (std::size_t i = 0; i < gx.numel(); ++i) gx.data()[i] += g;
        };
    }
    return push(std::move(n));
}

ValueId Tape::sum_squares(ValueId xid) {
    const Tensor& x = nodes_[xid].value;
    Scalar acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i] * x.data()[i];
    Node n;
    n.value = Tensor(Shape{1, 1, 1, 1}, {acc});
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid](Tape& t, Node& self) {
            const Scalar g = self.grad.data()[0];
            const Tensor& x = t.node(xid).value;
            kernels::active().axpy(2 * g, x.data(), t.grad_buf(xid).data(), x.numel());
        };
    }
    return push(std::move(n));
}

ValueId Tape::abs_sum(ValueId xid) {
    const Tensor& x = nodes_[xid].value;
    Scalar acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += std::abs(x.data()[i]);
    Node n;
    n.value = Tensor(Shape{1, 1, 1, 1}, {acc});
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid](Tape& t, Node& self) {
            const Scalar g = self.grad.data()[0];
            const Tensor& x = t.node(xid).value;
            Tensor& gx = t.grad_buf(xid);
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const Scalar v = x.data()[i];
                if (v > 0) gx.data()[i] += g;
                else if (v < 0) gx.data()[i] -= g;
            }
        };
    }
    return push(std::move(n));
}

ValueId Tape::sum_pool(ValueId xid, int patch, int stride) {
    const Tensor& x = nodes_[xid].value;
    const Shape xs = x.shape();
    if (patch < 1 || patch > xs.h || patch > xs.w)
        throw std::invalid_argument("sum_pool patch " + std::to_string(patch) +
                                    " does not fit input " + xs.str());
    if (stride < 1) throw std::invalid_argument("sum_pool stride must be >= 1");
    const int out_h = (xs.h - patch) / stride + 1;
    const int out_w = (xs.w - patch) / stride + 1;
    Node n;
    n.value = Tensor(Shape{xs.n, xs.c, out_h, out_w});
    for (int i = 0; i < xs.n; ++i)
        for (int c = 0; c < xs.c; ++c)
            for (int ay = 0; ay < out_h; ++ay)
                for (int ax = 0; ax < out_w; ++ax) {
                    Scalar acc = 0;
                    for (int dy = 0; dy < patch; ++dy) {
                        const Scalar* row = x.data() + x.offset(i, c, ay * stride + dy, ax * stride);
                        for (int dx = 0; dx < patch; ++dx) acc += row[dx];
                    }
                    n.value.at(i, c, ay, ax) = acc;
                }
    n.requires_grad = wants_grad(xid);
    if (n.requires_grad) {
        n.backprop = [xid, patch, stride, out_h, out_w](Tape& t, Node& self) {
            Tensor& gx = t.grad_buf(xid);
            const Shape xs = gx.shape();
            for (int i = 0; i < xs.n; ++i)
                for (int c = 0; c < xs.c; ++c)
                    for (int ay = 0; ay < out_h; ++ay)
                        for (int ax = 0; ax < out_w; ++ax) {
                            const Scalar g = self.grad.at(i, c, ay, ax);
                            for (int dy = 0; dy < patch; ++dy) {
                                Scalar* row = gx.data() + gx.offset(i, c, ay * stride + dy, ax * stride);
                                for (int dx = 0; dx < patch; ++dx) row[dx] += g;
                            }
                        }
        };
    }
    return push(std::move(n));
}

void Tape::backward(ValueId root) {
    if (backward_done_)
        throw std::logic_error("backward already run on this tape; re-record before calling again");
    if (nodes_[root].value.numel() != 1)
        throw std::logic_error("backward root must be a scalar node");
    backward_done_ = true;
    grad_buf(root).data()[0] = Scalar(1);
    for (ValueId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.has_grad && n.requires_grad && n.backprop) n.backprop(*this, n);
    }
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    if (items.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const Shape s0 = items[0].shape();
    if (s0.n != 1) throw std::invalid_argument("stack_batch expects single-item tensors");
    Tensor out(Shape{static_cast<int>(items.size()), s0.c, s0.h, s0.w});
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!(items[i].shape() == s0))
            throw std::invalid_argument("stack_batch: mismatched shapes");
        std::memcpy(out.data() + i * s0.numel(), items[i].data(), sizeof(Scalar) * s0.numel());
    }
    return out;
}

}  // namespace crdnet

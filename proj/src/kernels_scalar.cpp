#include <cmath>
#include <cstring>

#include "crdnet/kernels.hpp"

// Reference kernels. Plain loops, fixed accumulation order; these define the
// semantics the vector backends are tested against.
namespace crdnet::kernels {
namespace {

void gemm_nn_scalar(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(m) * n * sizeof(Scalar));
    for (int i = 0; i < m; ++i) {
        Scalar* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const Scalar av = a[static_cast<std::size_t>(i) * k + p];
            const Scalar* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_scalar(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const Scalar* arow = a + static_cast<std::size_t>(i) * k;
        Scalar* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const Scalar* brow = b + static_cast<std::size_t>(j) * k;
            Scalar acc = 0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_tn_scalar(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(m) * n * sizeof(Scalar));
    for (int p = 0; p < k; ++p) {
        const Scalar* arow = a + static_cast<std::size_t>(p) * m;
        const Scalar* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const Scalar av = arow[i];
            Scalar* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_scalar_k(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar_k(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_scalar_k(const Scalar* a, Scalar s, Scalar* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar_k(Scalar s, const Scalar* x, Scalar* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

void relu_fwd_scalar(const Scalar* x, Scalar* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > Scalar(0) ? x[i] : Scalar(0);
}

void relu_bwd_scalar(const Scalar* x, const Scalar* gy, Scalar* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > Scalar(0)) gx[i] += gy[i];
}

void adam_step_scalar(Scalar* w, Scalar* m, Scalar* v, const Scalar* g, std::size_t n,
                      Scalar lr, Scalar beta1, Scalar beta2, Scalar eps,
                      Scalar bias1, Scalar bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (Scalar(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (Scalar(1) - beta2) * g[i] * g[i];
        const Scalar mhat = m[i] / bias1;
        const Scalar vhat = v[i] / bias2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend backend{
        "scalar",
        gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar,
        add_scalar_k, sub_scalar_k, scale_scalar_k, axpy_scalar_k,
        relu_fwd_scalar, relu_bwd_scalar,
        adam_step_scalar,
    };
    return backend;
}

}  // namespace crdnet::kernels

#include "crdnet/kernels.hpp"

// AVX2+FMA variants. Compiled with -mavx2 -mfma for this translation unit
// only; callers reach it through the runtime-dispatched backend table, so the
// process never executes these instructions on CPUs without AVX2.
#if defined(__x86_64__) || defined(_M_X64)

#include <cmath>
#include <cstring>
#include <immintrin.h>

namespace crdnet::kernels {
namespace {

// 4 doubles per lane-group; the j loop walks two vectors (8 columns) at a time.
constexpr int kLanes = 4;

// gemm_nn: broadcast A[i,p], FMA across B row. 2x8 register tile keeps four
// accumulators live over the full p loop.
void gemm_nn_avx2(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(m) * n * sizeof(Scalar));
    const int n8 = n - n % (2 * kLanes);
    int i = 0;
    for (; i + 1 < m; i += 2) {
        const Scalar* a0 = a + static_cast<std::size_t>(i) * k;
        const Scalar* a1 = a0 + k;
        Scalar* c0 = c + static_cast<std::size_t>(i) * n;
        Scalar* c1 = c0 + n;
        for (int j = 0; j < n8; j += 2 * kLanes) {
            __m256d acc00 = _mm256_loadu_pd(c0 + j);
            __m256d acc01 = _mm256_loadu_pd(c0 + j + kLanes);
            __m256d acc10 = _mm256_loadu_pd(c1 + j);
            __m256d acc11 = _mm256_loadu_pd(c1 + j + kLanes);
            for (int p = 0; p < k; ++p) {
                const Scalar* brow = b + static_cast<std::size_t>(p) * n + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + kLanes);
                const __m256d av0 = _mm256_set1_pd(a0[p]);
                const __m256d av1 = _mm256_set1_pd(a1[p]);
                acc00 = _mm256_fmadd_pd(av0, b0, acc00);
                acc01 = _mm256_fmadd_pd(av0, b1, acc01);
                acc10 = _mm256_fmadd_pd(av1, b0, acc10);
                acc11 = _mm256_fmadd_pd(av1, b1, acc11);
            }
            _mm256_storeu_pd(c0 + j, acc00);
            _mm256_storeu_pd(c0 + j + kLanes, acc01);
            _mm256_storeu_pd(c1 + j, acc10);
            _mm256_storeu_pd(c1 + j + kLanes, acc11);
        }
        for (int j = n8; j < n; ++j) {
            Scalar s0 = c0[j], s1 = c1[j];
            for (int p = 0; p < k; ++p) {
                const Scalar bv = b[static_cast<std::size_t>(p) * n + j];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    for (; i < m; ++i) {
        const Scalar* arow = a + static_cast<std::size_t>(i) * k;
        Scalar* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n8; j += 2 * kLanes) {
            __m256d acc0 = _mm256_loadu_pd(crow + j);
            __m256d acc1 = _mm256_loadu_pd(crow + j + kLanes);
            for (int p = 0; p < k; ++p) {
                const Scalar* brow = b + static_cast<std::size_t>(p) * n + j;
                const __m256d av = _mm256_set1_pd(arow[p]);
                acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), acc0);
                acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + kLanes), acc1);
            }
            _mm256_storeu_pd(crow + j, acc0);
            _mm256_storeu_pd(crow + j + kLanes, acc1);
        }
        for (int j = n8; j < n; ++j) {
            Scalar s = crow[j];
            for (int p = 0; p < k; ++p) s += arow[p] * b[static_cast<std::size_t>(p) * n + j];
            crow[j] = s;
        }
    }
}

inline Scalar hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// gemm_nt: rows of A dotted with rows of B.
void gemm_nt_avx2(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    const int k4 = k - k % kLanes;
    for (int i = 0; i < m; ++i) {
        const Scalar* arow = a + static_cast<std::size_t>(i) * k;
        Scalar* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const Scalar* brow = b + static_cast<std::size_t>(j) * k;
            __m256d acc = _mm256_setzero_pd();
            for (int p = 0; p < k4; p += kLanes)
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
            Scalar s = hsum(acc);
            for (int p = k4; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// gemm_tn: broadcast A[p,i], FMA across B row p into C row i.
void gemm_tn_avx2(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(m) * n * sizeof(Scalar));
    const int n8 = n - n % (2 * kLanes);
    for (int p = 0; p < k; ++p) {
        const Scalar* arow = a + static_cast<std::size_t>(p) * m;
        const Scalar* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const __m256d av = _mm256_set1_pd(arow[i]);
            Scalar* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n8; j += 2 * kLanes) {
                __m256d acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j));
                __m256d acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + kLanes),
                                               _mm256_loadu_pd(crow + j + kLanes));
                _mm256_storeu_pd(crow + j, acc0);
                _mm256_storeu_pd(crow + j + kLanes, acc1);
            }
            const Scalar av_s = arow[i];
            for (int j = n8; j < n; ++j) crow[j] += av_s * brow[j];
        }
    }
}

void add_avx2(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_avx2(const Scalar* a, Scalar s, Scalar* out, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(Scalar s, const Scalar* x, Scalar* y, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += s * x[i];
}

void relu_fwd_avx2(const Scalar* x, Scalar* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) out[i] = x[i] > Scalar(0) ? x[i] : Scalar(0);
}

void relu_bwd_avx2(const Scalar* x, const Scalar* gy, Scalar* gx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), pass));
    }
    for (; i < n; ++i)
        if (x[i] > Scalar(0)) gx[i] += gy[i];
}

void adam_step_avx2(Scalar* w, Scalar* m, Scalar* v, const Scalar* g, std::size_t n,
                    Scalar lr, Scalar beta1, Scalar beta2, Scalar eps,
                    Scalar bias1, Scalar bias2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d one_b1 = _mm256_set1_pd(Scalar(1) - beta1);
    const __m256d one_b2 = _mm256_set1_pd(Scalar(1) - beta2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    const __m256d b1v = _mm256_set1_pd(bias1);
    const __m256d b2v = _mm256_set1_pd(bias2);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_b1, gv));
        __m256d vv = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(one_b2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_div_pd(mv, b1v);
        const __m256d vhat = _mm256_div_pd(vv, b2v);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom);
        _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (Scalar(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (Scalar(1) - beta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
    }
}

}  // namespace

const Backend* avx2_backend() {
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
    static const Backend backend{
        "avx2",
        gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2,
        add_avx2, sub_avx2, scale_avx2, axpy_avx2,
        relu_fwd_avx2, relu_bwd_avx2,
        adam_step_avx2,
    };
    return &backend;
}

}  // namespace crdnet::kernels

#else  // non-x86 builds fall back to the scalar reference

namespace crdnet::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace crdnet::kernels

#endif

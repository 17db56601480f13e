#pragma once

#include <cstddef>
#include <string_view>

#include "crdnet/tensor.hpp"

// Data-parallel inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation; wider variants (AVX2 on x86) are selected at
// runtime and equivalence-tested against the reference. All kernels are
// single-threaded with a fixed accumulation order, so results are
// reproducible run to run for whichever backend is active.
namespace crdnet::kernels {

// Row-major GEMM variants. Inner accumulation order is fixed per backend.
//   gemm_nn: C[m x n] (+)= A[m x k] * B[k x n]
//   gemm_nt: C[m x n] (+)= A[m x k] * B[n x k]^T
//   gemm_tn: C[m x n] (+)= A[k x m]^T * B[k x n]
struct Backend {
    const char* name;

    void (*gemm_nn)(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate);
    void (*gemm_nt)(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate);
    void (*gemm_tn)(int m, int n, int k, const Scalar* a, const Scalar* b, Scalar* c, bool accumulate);

    void (*add)(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n);
    void (*sub)(const Scalar* a, const Scalar* b, Scalar* out, std::size_t n);
    void (*scale)(const Scalar* a, Scalar s, Scalar* out, std::size_t n);
    void (*axpy)(Scalar s, const Scalar* x, Scalar* y, std::size_t n);  // y += s*x
    void (*relu_fwd)(const Scalar* x, Scalar* out, std::size_t n);
    void (*relu_bwd)(const Scalar* x, const Scalar* gy, Scalar* gx, std::size_t n);  // gx += gy where x > 0

    // One fused adaptive-moment update step over a flat parameter block.
    // bias1/bias2 are the 1-b^t corrections for the current step.
    void (*adam_step)(Scalar* w, Scalar* m, Scalar* v, const Scalar* g, std::size_t n,
                      Scalar lr, Scalar beta1, Scalar beta2, Scalar eps,
                      Scalar bias1, Scalar bias2);
};

const Backend& scalar_backend();

// nullptr when the build or the running CPU lacks AVX2+FMA.
const Backend* avx2_backend();

// The active backend: best available, overridable with CRDNET_BACKEND=scalar|avx2.
const Backend& active();

// Force a backend by name; returns false if unavailable. Used by tests.
bool set_active(std::string_view name);

}  // namespace crdnet::kernels

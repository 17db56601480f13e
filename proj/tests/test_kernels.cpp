#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "crdnet/kernels.hpp"
#include "crdnet/rng.hpp"

using namespace crdnet;
using kernels::Backend;

namespace {

std::vector<Scalar> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<Scalar> v(n);
    for (Scalar& x : v) x = rng.uniform(lo, hi);
    return v;
}

void check_close(const std::vector<Scalar>& a, const std::vector<Scalar>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1.0});
        REQUIRE(std::abs(a[i] - b[i]) <= tol * scale);
    }
}

using GemmFn = void (*)(int, int, int, const Scalar*, const Scalar*, Scalar*, bool);

void compare_gemm(GemmFn ref, GemmFn simd, int m, int n, int k, Rng& rng) {
    const std::vector<Scalar> a = random_vec(static_cast<std::size_t>(m) * std::max(k, m), rng);
    const std::vector<Scalar> b = random_vec(static_cast<std::size_t>(std::max(k, n)) * std::max(n, k), rng);
    for (bool accumulate : {false, true}) {
        std::vector<Scalar> c0 = random_vec(static_cast<std::size_t>(m) * n, rng);
        std::vector<Scalar> c1 = c0;
        ref(m, n, k, a.data(), b.data(), c0.data(), accumulate);
        simd(m, n, k, a.data(), b.data(), c1.data(), accumulate);
        check_close(c0, c1, 1e-12);
    }
}

}  // namespace

TEST_CASE("scalar gemm_nn matches a by-hand 2x2") {
    const Backend& k = kernels::scalar_backend();
    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    const std::vector<Scalar> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    std::vector<Scalar> c(4, -1.0);
    k.gemm_nn(2, 2, 2, a.data(), b.data(), c.data(), false);
    CHECK(c == std::vector<Scalar>{19, 22, 43, 50});

    k.gemm_nn(2, 2, 2, a.data(), b.data(), c.data(), true);
    CHECK(c == std::vector<Scalar>{38, 44, 86, 100});
}

TEST_CASE("scalar gemm_nt and gemm_tn agree with gemm_nn through explicit transposes") {
    const Backend& k = kernels::scalar_backend();
    Rng rng(7);
    const int m = 5, n = 7, kk = 3;
    const std::vector<Scalar> a = random_vec(m * kk, rng);
    const std::vector<Scalar> b = random_vec(kk * n, rng);

    std::vector<Scalar> want(m * n, 0.0);
    k.gemm_nn(m, n, kk, a.data(), b.data(), want.data(), false);

    std::vector<Scalar> bt(n * kk);
    for (int i = 0; i < kk; ++i)
        for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * kk + i] = b[static_cast<std::size_t>(i) * n + j];
    std::vector<Scalar> got(m * n, 0.0);
    k.gemm_nt(m, n, kk, a.data(), bt.data(), got.data(), false);
    check_close(want, got, 1e-14);

    std::vector<Scalar> at(kk * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < kk; ++j) at[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * kk + j];
    got.assign(m * n, 0.0);
    k.gemm_tn(m, n, kk, at.data(), b.data(), got.data(), false);
    check_close(want, got, 1e-14);
}

TEST_CASE("avx2 gemm variants match the scalar reference, tails included") {
    const Backend* simd = kernels::avx2_backend();
    if (!simd) return;  // nothing to compare on this machine
    const Backend& ref = kernels::scalar_backend();
    Rng rng(21);
    // Sizes straddle the 8-wide column tiles and 2-row blocking.
    const int sizes[][3] = {{1, 1, 1},  {1, 8, 4},   {2, 16, 9},  {3, 7, 5},
                            {5, 9, 13}, {8, 24, 16}, {7, 23, 11}, {16, 33, 40}};
    for (const auto& s : sizes) {
        compare_gemm(ref.gemm_nn, simd->gemm_nn, s[0], s[1], s[2], rng);
        compare_gemm(ref.gemm_nt, simd->gemm_nt, s[0], s[1], s[2], rng);
        compare_gemm(ref.gemm_tn, simd->gemm_tn, s[0], s[1], s[2], rng);
    }
}

TEST_CASE("avx2 elementwise kernels match scalar") {
    const Backend* simd = kernels::avx2_backend();
    if (!simd) return;
    const Backend& ref = kernels::scalar_backend();
    Rng rng(5);
    for (std::size_t n : {1u, 3u, 8u, 9u, 31u, 64u, 100u}) {
        const std::vector<Scalar> a = random_vec(n, rng), b = random_vec(n, rng);
        std::vector<Scalar> r0(n), r1(n);

        ref.add(a.data(), b.data(), r0.data(), n);
        simd->add(a.data(), b.data(), r1.data(), n);
        CHECK(r0 == r1);

        ref.sub(a.data(), b.data(), r0.data(), n);
        simd->sub(a.data(), b.data(), r1.data(), n);
        CHECK(r0 == r1);

        ref.scale(a.data(), 1.7, r0.data(), n);
        simd->scale(a.data(), 1.7, r1.data(), n);
        CHECK(r0 == r1);

        std::vector<Scalar> y0 = b, y1 = b;
        ref.axpy(-0.3, a.data(), y0.data(), n);
        simd->axpy(-0.3, a.data(), y1.data(), n);
        check_close(y0, y1, 1e-15);  // fused multiply-add may differ by one rounding

        ref.relu_fwd(a.data(), r0.data(), n);
        simd->relu_fwd(a.data(), r1.data(), n);
        CHECK(r0 == r1);

        std::vector<Scalar> g0(n, 0.5), g1(n, 0.5);
        ref.relu_bwd(a.data(), b.data(), g0.data(), n);
        simd->relu_bwd(a.data(), b.data(), g1.data(), n);
        CHECK(g0 == g1);
    }
}

TEST_CASE("relu kernels: forward clamps, backward masks and accumulates") {
    const Backend& k = kernels::scalar_backend();
    const std::vector<Scalar> x{-2.0, 0.0, 3.5, -0.1};
    std::vector<Scalar> y(4);
    k.relu_fwd(x.data(), y.data(), 4);
    CHECK(y == std::vector<Scalar>{0.0, 0.0, 3.5, 0.0});

    const std::vector<Scalar> gy{1.0, 1.0, 1.0, 1.0};
    std::vector<Scalar> gx{10.0, 10.0, 10.0, 10.0};
    k.relu_bwd(x.data(), gy.data(), gx.data(), 4);
    CHECK(gx == std::vector<Scalar>{10.0, 10.0, 11.0, 10.0});
}

TEST_CASE("avx2 adam matches scalar adam") {
    const Backend* simd = kernels::avx2_backend();
    if (!simd) return;
    const Backend& ref = kernels::scalar_backend();
    Rng rng(33);
    for (std::size_t n : {1u, 4u, 7u, 32u, 65u}) {
        std::vector<Scalar> w0 = random_vec(n, rng);
        std::vector<Scalar> m0 = random_vec(n, rng, 0.0, 0.1), v0 = random_vec(n, rng, 0.0, 0.1);
        const std::vector<Scalar> g = random_vec(n, rng);
        std::vector<Scalar> w1 = w0, m1 = m0, v1 = v0;

        ref.adam_step(w0.data(), m0.data(), v0.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1,
                      0.001999);
        simd->adam_step(w1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1,
                        0.001999);
        check_close(w0, w1, 1e-13);
        check_close(m0, m1, 1e-13);
        check_close(v0, v1, 1e-13);
    }
}

TEST_CASE("backend dispatch honors set_active and reports a name") {
    REQUIRE(kernels::set_active("scalar"));
    CHECK(std::string_view(kernels::active().name) == "scalar");
    CHECK_FALSE(kernels::set_active("no-such-backend"));
    CHECK(std::string_view(kernels::active().name) == "scalar");
    if (kernels::avx2_backend()) {
        REQUIRE(kernels::set_active("avx2"));
        CHECK(std::string_view(kernels::active().name) == "avx2");
    }
    // Leave the default in place for whoever runs next.
    kernels::set_active(kernels::avx2_backend() ? "avx2" : "scalar");
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "crdnet/losses.hpp"
#include "crdnet/rng.hpp"
#include "support.hpp"

using namespace crdnet;

TEST_CASE("perfect estimate costs nothing") {
    Rng rng(7);
    const Tensor m = testsupport::random_tensor({3, 1, 6, 6}, rng);
    Tape tape;
    const ValueId est = tape.constant(m);
    const ValueId tgt = tape.constant(m);
    CHECK(tape.scalar_value(euclidean_loss(tape, est, tgt)) == 0.0);
    CHECK(tape.scalar_value(local_count_loss(tape, est, tgt, 2, 1)) == 0.0);
}

TEST_CASE("hand-computed pixel cases") {
    // single pixel off by 2 -> euclidean 4
    Tensor est({1, 1, 4, 4});
    Tensor tgt({1, 1, 4, 4});
    est.at(0, 0, 1, 2) = 2.0;
    Tape tape;
    const ValueId e = tape.constant(est);
    const ValueId q = tape.constant(tgt);
    CHECK(tape.scalar_value(euclidean_loss(tape, e, q)) == 4.0);

    // h=2, t=2 on a 4x4: four disjoint patches, only one sees the error
    CHECK(tape.scalar_value(local_count_loss(tape, e, q, 2, 2)) == 2.0);

    // h=2, t=1: the offending pixel (1,2) lands in the four overlapping
    // patches anchored at (0,1), (0,2), (1,1), (1,2)
    CHECK(tape.scalar_value(local_count_loss(tape, e, q, 2, 1)) == 8.0);
}

TEST_CASE("batch normalization divides by M, not by the pixel count") {
    Tensor est({2, 1, 2, 2});
    Tensor tgt({2, 1, 2, 2});
    est.at(0, 0, 0, 0) = 3.0;  // image 0 contributes 9
    est.at(1, 0, 1, 1) = 1.0;  // image 1 contributes 1
    Tape tape;
    const ValueId id = euclidean_loss(tape, tape.constant(est), tape.constant(tgt));
    CHECK(tape.scalar_value(id) == 5.0);
}

TEST_CASE("losses agree with exhaustive enumeration on every small map") {
    Rng rng(11);
    for (int hmap = 1; hmap <= 8; ++hmap)
        for (int wmap = 1; wmap <= 8; ++wmap) {
            const Tensor est = testsupport::random_tensor({2, 1, hmap, wmap}, rng);
            const Tensor tgt = testsupport::random_tensor({2, 1, hmap, wmap}, rng);
            Tape tape;
            const ValueId e = tape.constant(est);
            const ValueId q = tape.constant(tgt);
            CHECK(tape.scalar_value(euclidean_loss(tape, e, q)) ==
                  testsupport::brute_force_euclidean(est, tgt));
            for (int h : {1, 2, 4}) {
                if (h > hmap || h > wmap) continue;
                for (int t : {1, 2})
                    CHECK(tape.scalar_value(local_count_loss(tape, e, q, h, t)) ==
                          testsupport::brute_force_local_count(est, tgt, h, t));
            }
        }
}

TEST_CASE("both losses are symmetric in estimate and target") {
    Rng rng(13);
    const Tensor a = testsupport::random_tensor({1, 1, 7, 5}, rng);
    const Tensor b = testsupport::random_tensor({1, 1, 7, 5}, rng);
    Tape tape;
    const ValueId ia = tape.constant(a);
    const ValueId ib = tape.constant(b);
    CHECK(tape.scalar_value(euclidean_loss(tape, ia, ib)) ==
          tape.scalar_value(euclidean_loss(tape, ib, ia)));
    CHECK(tape.scalar_value(local_count_loss(tape, ia, ib, 2, 1)) ==
          tape.scalar_value(local_count_loss(tape, ib, ia, 2, 1)));
}

TEST_CASE("opposite errors inside one patch cancel; across patches they don't") {
    Tensor est({1, 1, 4, 4});
    const Tensor tgt({1, 1, 4, 4});
    est.at(0, 0, 0, 0) = 1.0;
    est.at(0, 0, 1, 1) = -1.0;
    Tape tape;
    const ValueId e = tape.constant(est);
    const ValueId q = tape.constant(tgt);
    // the dipole sits inside the (0,0) patch at h=t=2: invisible to counts
    CHECK(tape.scalar_value(local_count_loss(tape, e, q, 2, 2)) == 0.0);
    // pixel-level patches see both spikes
    CHECK(tape.scalar_value(local_count_loss(tape, e, q, 1, 1)) == 2.0);
    // the euclidean term still penalizes the configuration
    CHECK(tape.scalar_value(euclidean_loss(tape, e, q)) == 2.0);
}

TEST_CASE("h=1, t=1 local count is the plain L1 distance") {
    Rng rng(17);
    const Tensor est = testsupport::random_tensor({2, 1, 5, 6}, rng);
    const Tensor tgt = testsupport::random_tensor({2, 1, 5, 6}, rng);
    Scalar l1 = 0;
    for (std::size_t i = 0; i < est.numel(); ++i) l1 += std::abs(est.vec()[i] - tgt.vec()[i]);
    Tape tape;
    const ValueId id = local_count_loss(tape, tape.constant(est), tape.constant(tgt), 1, 1);
    CHECK(tape.scalar_value(id) == doctest::Approx(l1 / 2).epsilon(1e-14));
}

TEST_CASE("total loss composition") {
    Rng rng(19);
    const Tensor est = testsupport::random_tensor({2, 1, 8, 8}, rng);
    const Tensor tgt = testsupport::random_tensor({2, 1, 8, 8}, rng);

    LossConfig cfg;
    cfg.lambda = 1e-4;
    cfg.patch_size = 4;
    cfg.patch_stride = 2;

    Tape tape;
    const TotalLoss loss = total_loss(tape, tape.constant(est), tape.constant(tgt), cfg);
    const LossReport report = make_report(tape, loss);
    CHECK(report.euclidean == testsupport::brute_force_euclidean(est, tgt));
    CHECK(report.local_count == testsupport::brute_force_local_count(est, tgt, 4, 2));
    CHECK(report.total == report.euclidean + cfg.lambda * report.local_count);
    CHECK(report.patch_count_errors.shape() == Shape{2, 1, 3, 3});

    SUBCASE("lambda = 0 makes the total literally the euclidean node") {
        Tape t2;
        LossConfig off = cfg;
        off.lambda = 0;
        const TotalLoss l2 = total_loss(t2, t2.constant(est), t2.constant(tgt), off);
        CHECK(l2.total == l2.euclidean);
        CHECK(t2.scalar_value(l2.total) == report.euclidean);
    }
}

TEST_CASE("patch sums report signed per-anchor count errors") {
    Tensor est({1, 1, 4, 4});
    const Tensor tgt({1, 1, 4, 4});
    est.at(0, 0, 0, 0) = 2.5;
    est.at(0, 0, 2, 2) = -1.0;
    LossConfig cfg;
    cfg.patch_size = 2;
    cfg.patch_stride = 2;
    Tape tape;
    const TotalLoss loss = total_loss(tape, tape.constant(est), tape.constant(tgt), cfg);
    const LossReport report = make_report(tape, loss);
    REQUIRE(report.patch_count_errors.shape() == Shape{1, 1, 2, 2});
    CHECK(report.patch_count_errors.at(0, 0, 0, 0) == 2.5);
    CHECK(report.patch_count_errors.at(0, 0, 0, 1) == 0.0);
    CHECK(report.patch_count_errors.at(0, 0, 1, 0) == 0.0);
    CHECK(report.patch_count_errors.at(0, 0, 1, 1) == -1.0);
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    cfg.validate();
    cfg.lambda = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.patch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.patch_stride = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("total loss gradient matches finite differences") {
    Rng rng(23);
    const Tensor est = testsupport::random_tensor({2, 1, 6, 6}, rng);
    const Tensor tgt = testsupport::random_tensor({2, 1, 6, 6}, rng);

    LossConfig cfg;
    cfg.lambda = 0.05;  // large enough that the count term shows in the total
    cfg.patch_size = 3;
    cfg.patch_stride = 2;

    const auto graph = [&](Tape& tape, const std::vector<ValueId>& in) {
        return total_loss(tape, in[0], tape.constant(tgt), cfg).total;
    };
    const auto check = testsupport::check_gradient(graph, {est});
    CHECK(check.checked == est.numel());
    CHECK(check.max_rel_err < 1e-4);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "crdnet/pnet.hpp"
#include "crdnet/rng.hpp"
#include "support.hpp"

using namespace crdnet;

namespace {

ValueId pyramid_scalar(Tape& tape, const FeaturePyramid& pyr) {
    ValueId acc = tape.sum(pyr.levels[0]);
    for (std::size_t k = 1; k < pyr.levels.size(); ++k)
        acc = tape.add(acc, tape.sum(pyr.levels[k]));
    return acc;
}

}  // namespace

TEST_CASE("default config yields the 16/32/64/64 ladder at halved resolutions") {
    Backbone net = build_backbone(default_backbone_config(), 1, 7);
    Rng rng(3);
    Tape tape;
    const ValueId img = tape.constant(testsupport::random_tensor({2, 1, 64, 64}, rng));
    const FeaturePyramid pyr = extract_pyramid(tape, img, net);

    REQUIRE(pyr.levels.size() == 4);
    CHECK(tape.value(pyr.levels[0]).shape() == Shape{2, 16, 64, 64});
    CHECK(tape.value(pyr.levels[1]).shape() == Shape{2, 32, 32, 32});
    CHECK(tape.value(pyr.levels[2]).shape() == Shape{2, 64, 16, 16});
    CHECK(tape.value(pyr.levels[3]).shape() == Shape{2, 64, 8, 8});
}

TEST_CASE("construction is a pure function of config and seed") {
    Backbone a = build_backbone(default_backbone_config(), 1, 42);
    Backbone b = build_backbone(default_backbone_config(), 1, 42);
    Backbone c = build_backbone(default_backbone_config(), 1, 43);

    auto pa = a.parameters();
    auto pb = b.parameters();
    auto pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff_from_c = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name() == pb[i]->name());
        CHECK(pa[i]->value().vec() == pb[i]->value().vec());
        if (pa[i]->value().vec() != pc[i]->value().vec()) any_diff_from_c = true;
    }
    CHECK(any_diff_from_c);
}

TEST_CASE("zero image maps to a zero pyramid (biases start at zero)") {
    Backbone net = build_backbone(default_backbone_config(), 1, 5);
    Tape tape;
    const FeaturePyramid pyr = extract_pyramid(tape, tape.constant(Tensor({1, 1, 32, 32})), net);
    for (ValueId level : pyr.levels)
        for (Scalar v : tape.value(level).vec()) CHECK(v == 0.0);
}

TEST_CASE("single-stage backbone keeps the input resolution") {
    BackboneConfig cfg;
    cfg.stages = {{{8, 3, 1}, {4, 3, 1}}};
    Backbone net = build_backbone(cfg, 2, 11);
    Rng rng(13);
    Tape tape;
    const FeaturePyramid pyr =
        extract_pyramid(tape, tape.constant(testsupport::random_tensor({1, 2, 9, 7}, rng)), net);
    REQUIRE(pyr.levels.size() == 1);
    CHECK(tape.value(pyr.levels[0]).shape() == Shape{1, 4, 9, 7});
}

TEST_CASE("config validation rejects degenerate settings") {
    BackboneConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // no stages

    cfg = default_backbone_config();
    cfg.stages[1][0].kernel = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = default_backbone_config();
    cfg.stages[0][0].out_channels = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = default_backbone_config();
    cfg.stages[2][1].dilation = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = default_backbone_config();
    cfg.scale = 3;  // downscaling is repeated 2x pooling
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("extraction rejects mismatched inputs") {
    Backbone net = build_backbone(default_backbone_config(), 1, 17);
    Tape tape;
    // 36 is not divisible by 2^(levels-1) = 8.
    CHECK_THROWS_AS(extract_pyramid(tape, tape.constant(Tensor({1, 1, 36, 36})), net),
                    std::invalid_argument);
    CHECK_THROWS_AS(extract_pyramid(tape, tape.constant(Tensor({1, 3, 32, 32})), net),
                    std::invalid_argument);
}

TEST_CASE("every parameter of every stage receives gradient") {
    BackboneConfig cfg;
    cfg.stages = {{{2, 3, 1}, {2, 3, 1}}, {{3, 3, 1}}, {{2, 3, 1}}};
    Backbone net = build_backbone(cfg, 1, 19);
    for (Parameter* p : net.parameters()) {
        for (Scalar& v : p->value().vec()) v = 0.1;  // all-positive net: relu passes everything
        p->zero_grad();
    }

    Tape tape;
    const ValueId img = tape.constant(Tensor::full({1, 1, 8, 8}, 1.0));
    tape.backward(pyramid_scalar(tape, extract_pyramid(tape, img, net)));

    for (Parameter* p : net.parameters()) {
        double max_abs = 0;
        for (Scalar g : p->grad().vec()) max_abs = std::max(max_abs, std::abs(g));
        INFO("param ", p->name());
        CHECK(max_abs > 0.0);
    }
}

TEST_CASE("backbone gradients match finite differences") {
    BackboneConfig cfg;
    cfg.stages = {{{2, 3, 1}}, {{2, 3, 1}}};
    Backbone net = build_backbone(cfg, 1, 23);
    Rng rng(29);
    const Tensor img = testsupport::random_tensor({1, 1, 8, 8}, rng, 0.5, 1.5);

    for (Parameter* p : net.parameters()) p->zero_grad();
    Tape tape;
    tape.backward(pyramid_scalar(tape, extract_pyramid(tape, tape.constant(img), net, true)));

    auto eval = [&]() {
        Tape t;
        return t.scalar_value(
            pyramid_scalar(t, extract_pyramid(t, t.constant(img), net, false)));
    };

    const double step = 1e-5;
    double max_rel = 0;
    std::size_t checked = 0;
    for (Parameter* p : net.parameters()) {
        for (std::size_t j = 0; j < p->numel(); ++j) {
            const Scalar keep = p->value().vec()[j];
            p->value().vec()[j] = keep + step;
            const Scalar up = eval();
            p->value().vec()[j] = keep - step;
            const Scalar down = eval();
            p->value().vec()[j] = keep;
            const Scalar fd = (up - down) / (2 * step);
            const Scalar an = p->grad().vec()[j];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            max_rel = std::max(max_rel, std::abs(fd - an) / denom);
            ++checked;
        }
    }
    CHECK(checked > 40);
    CHECK(max_rel < 1e-4);
}

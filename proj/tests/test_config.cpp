#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "crdnet/config.hpp"
#include "crdnet/rng.hpp"

using namespace crdnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
        : path(fs::temp_directory_path() /
               ("crdnet_cfg_" + std::to_string(Rng(std::random_device{}()).next_u64()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("defaults validate and round-trip losslessly") {
    ExperimentConfig cfg;
    cfg.validate();

    TempDir dir;
    save_experiment_config(dir.path / "cfg.json", cfg);
    const ExperimentConfig back = load_experiment_config(dir.path / "cfg.json");
    CHECK(experiment_config_dump(back) == experiment_config_dump(cfg));
    CHECK(back.train.seed == back.seed);
}

TEST_CASE("non-default settings survive the round trip") {
    ExperimentConfig cfg;
    cfg.data_dir = "elsewhere";
    cfg.seed = 987654321;
    cfg.sigma = 2.5;
    cfg.dataset_count = 50;
    cfg.folds = 4;
    cfg.fold_index = 3;
    cfg.backbone.stages = {{{8, 3, 1}, {8, 5, 2}}, {{16, 3, 1}}};
    cfg.cnet.pre_stacks = {{{4, 3, 1}}, {}};
    cfg.train.crop_size = 32;
    cfg.train.batch_size = 4;
    cfg.train.flip_prob = 0.25;
    cfg.train.optimizer.kind = OptimizerKind::momentum;
    cfg.train.loss.lambda = 0.01;
    cfg.train.loss.patch_size = 8;
    cfg.train.loss.patch_stride = 4;
    cfg.synth.image_size = 96;
    cfg.synth.count_max = 12;
    cfg.validate();

    TempDir dir;
    save_experiment_config(dir.path / "cfg.json", cfg);
    const ExperimentConfig back = load_experiment_config(dir.path / "cfg.json");
    CHECK(experiment_config_dump(back) == experiment_config_dump(cfg));
    CHECK(back.backbone.stages[0][1].kernel == 5);
    CHECK(back.backbone.stages[0][1].dilation == 2);
    CHECK(back.cnet.pre_stacks[0][0].out_channels == 4);
    CHECK(back.train.optimizer.kind == OptimizerKind::momentum);
    CHECK(back.seed == 987654321);
}

TEST_CASE("partial files fall back to defaults for missing keys") {
    TempDir dir;
    std::ofstream(dir.path / "min.json") << "{\"seed\": 3, \"train\": {\"batch_size\": 2}}";
    const ExperimentConfig cfg = load_experiment_config(dir.path / "min.json");
    CHECK(cfg.seed == 3);
    CHECK(cfg.train.seed == 3);
    CHECK(cfg.train.batch_size == 2);
    CHECK(cfg.train.crop_size == 64);              // default
    CHECK(cfg.backbone.stages.size() == 4);        // default ladder
    CHECK(cfg.train.loss.lambda == 1e-4);          // default
    CHECK(cfg.synth.image_size == 64);             // default
}

TEST_CASE("unknown keys are rejected with their location") {
    TempDir dir;
    std::ofstream(dir.path / "a.json") << "{\"sedd\": 3}";
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "a.json"), doctest::Contains("sedd"),
                         std::runtime_error);

    std::ofstream(dir.path / "b.json") << "{\"train\": {\"bacth_size\": 2}}";
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "b.json"), doctest::Contains("bacth_size"),
                         std::runtime_error);

    std::ofstream(dir.path / "c.json") << "{\"loss\": {\"gamma\": 1.0}}";
    CHECK_THROWS_AS(load_experiment_config(dir.path / "c.json"), std::runtime_error);
}

TEST_CASE("optimizer kinds parse by name and bad ones fail") {
    TempDir dir;
    for (const char* kind : {"sgd", "momentum", "adam"}) {
        std::ofstream(dir.path / "k.json")
            << "{\"train\": {\"optimizer\": {\"kind\": \"" << kind << "\"}}}";
        CHECK_NOTHROW(load_experiment_config(dir.path / "k.json"));
    }
    std::ofstream(dir.path / "bad.json")
        << "{\"train\": {\"optimizer\": {\"kind\": \"adagrad\"}}}";
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "bad.json"),
                         doctest::Contains("adagrad"), std::runtime_error);
}

TEST_CASE("malformed json and wrong types are reported with the path") {
    TempDir dir;
    std::ofstream(dir.path / "broken.json") << "{\"seed\": ";
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "broken.json"),
                         doctest::Contains("broken.json"), std::runtime_error);

    std::ofstream(dir.path / "typed.json") << "{\"seed\": \"not a number\"}";
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "typed.json"),
                         doctest::Contains("typed.json"), std::runtime_error);

    CHECK_THROWS_AS(load_experiment_config(dir.path / "nothere.json"), std::runtime_error);
}

TEST_CASE("validation catches cross-field mistakes") {
    ExperimentConfig cfg;
    cfg.fold_index = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = ExperimentConfig{};
    cfg.folds = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = ExperimentConfig{};
    cfg.sigma = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = ExperimentConfig{};
    cfg.cnet.pre_stacks = {{{4, 3, 1}}};  // one stack for a four-level backbone
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = ExperimentConfig{};
    cfg.train.crop_size = 24;  // not divisible by 2^4
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

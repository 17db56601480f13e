#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crdnet/kernels.hpp"
#include "crdnet/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Experiment config JSON");
    cmd->add_option("--out", flags.out_dir, "Output directory (overrides config)");
    cmd->add_option("--data", flags.data_dir, "Data directory (overrides config)");
    cmd->add_option("--seed", flags.seed, "Seed (overrides config)")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
}

crdnet::ExperimentConfig resolve_config(const CommonFlags& flags) {
    crdnet::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = crdnet::load_experiment_config(flags.config_path);
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.data_dir.empty()) cfg.data_dir = flags.data_dir;
    if (flags.seed_given) {
        cfg.seed = flags.seed;
        cfg.train.seed = flags.seed;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded residual density network for crowd counting"};
    app.require_subcommand(1);

    CommonFlags flags;
    int count_override = -1;
    double sigma_override = -1;
    int fold_override = -1;
    std::string gt_in, checkpoint_path, image_path;

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    add_common(synth, flags);
    synth->add_option("--count", count_override, "Number of scenes (overrides config)");

    CLI::App* gt = app.add_subcommand("gt", "Build ground-truth density maps from annotations");
    add_common(gt, flags);
    gt->add_option("--in", gt_in, "Annotations directory (defaults to the data directory)");
    gt->add_option("--sigma", sigma_override, "Gaussian std in pixels (overrides config)");

    CLI::App* train = app.add_subcommand("train", "Staged pretraining plus fine-tuning");
    add_common(train, flags);
    train->add_option("--fold", fold_override, "Cross-validation fold to hold out");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out fold");
    add_common(eval, flags);
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    eval->add_option("--fold", fold_override, "Cross-validation fold to hold out");

    CLI::App* infer = app.add_subcommand("infer", "Run one image through a checkpoint");
    add_common(infer, flags);
    infer->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    infer->add_option("--image", image_path, "Input image (.crd grid)")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "Compare the loss arms on one split");
    add_common(ablate, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        crdnet::ExperimentConfig cfg = resolve_config(flags);
        if (count_override >= 0) cfg.dataset_count = count_override;
        if (sigma_override > 0) cfg.sigma = sigma_override;
        if (fold_override >= 0) cfg.fold_index = fold_override;

        if (synth->parsed()) {
            crdnet::run_synth(cfg, std::cout);
        } else if (gt->parsed()) {
            const std::string in_dir = gt_in.empty() ? cfg.data_dir : gt_in;
            const std::string out_dir = flags.out_dir.empty() ? in_dir : flags.out_dir;
            crdnet::run_gt(in_dir, cfg.sigma, out_dir, std::cout);
        } else if (train->parsed()) {
            crdnet::run_train(cfg, std::cout);
        } else if (eval->parsed()) {
            crdnet::run_eval(cfg, checkpoint_path, std::cout);
        } else if (infer->parsed()) {
            crdnet::run_infer(cfg, checkpoint_path, image_path, std::cout);
        } else if (ablate->parsed()) {
            crdnet::run_ablate(cfg, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#pragma once

#include <filesystem>
#include <string>

#include "crdnet/synth.hpp"
#include "crdnet/train_eval.hpp"

namespace crdnet {

// One experiment, end to end: where data lives, how it is synthesized, the
// network, the losses, and the training schedule. Round-trips losslessly
// through its JSON file form.
struct ExperimentConfig {
    std::string data_dir = "data";
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    double sigma = 4.0;
    int dataset_count = 200;
    int folds = 5;
    int fold_index = 0;
    BackboneConfig backbone = default_backbone_config();
    CnetConfig cnet;
    TrainConfig train;
    SynthConfig synth;

    void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Canonical serialized form; equality of these strings is the lossless
// round-trip check.
std::string experiment_config_dump(const ExperimentConfig& cfg);

}  // namespace crdnet

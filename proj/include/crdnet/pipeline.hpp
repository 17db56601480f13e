#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "crdnet/config.hpp"

namespace crdnet {

// Writes scene_%04d.img.crd + scene_%04d.json per scene plus manifest.json.
void run_synth(const ExperimentConfig& cfg, std::ostream& log);

struct GtReport {
    std::size_t files = 0;
    double max_count_error = 0;
};

// One <stem>.gt.crd per <stem>.json annotation found in annotations_dir; the
// count-preservation bound is checked per file and the worst case reported.
GtReport run_gt(const std::filesystem::path& annotations_dir, double sigma,
                const std::filesystem::path& out_dir, std::ostream& log);

// Manifest-driven load of (image, ground truth) pairs.
Dataset load_dataset(const std::filesystem::path& data_dir);

// Deterministic fold split of a loaded dataset.
struct SplitDataset {
    Dataset train;
    Dataset test;
};
SplitDataset split_dataset(const Dataset& all, const ExperimentConfig& cfg);

struct TrainOutcome {
    std::vector<StageResult> pretrain;
    FinetuneResult fine;
    EvalResult test;
};

// Staged pretraining then fine-tuning on the train split; writes
// checkpoint.bin, per-epoch checkpoints, metrics.csv and report.json into
// cfg.out_dir, then evaluates on the held-out fold.
TrainOutcome run_train(const ExperimentConfig& cfg, std::ostream& log);

// Prints `MAE=<v> MSE=<v>` as its final line.
EvalResult run_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    std::ostream& log);

// Writes density.crd + density.png and prints the estimated count.
Scalar run_infer(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& image_path, std::ostream& log);

struct AblateOutcome {
    EvalResult euclidean_only;  // lambda = 0 arm
    EvalResult combined;        // configured-lambda arm
};

// Shared pretraining, then one fine-tune per loss arm from the same starting
// point; emits the two-row comparison and per-arm metric logs.
AblateOutcome run_ablate(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace crdnet

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "crdnet/cnet.hpp"
#include "crdnet/density.hpp"
#include "crdnet/io.hpp"
#include "crdnet/losses.hpp"
#include "crdnet/pnet.hpp"
#include "crdnet/rng.hpp"

namespace crdnet {

enum class OptimizerKind { sgd, momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    Scalar learning_rate = 1e-4;
    Scalar momentum = 0.9;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

class Optimizer {
  public:
    Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg);

    void step();
    void zero_grad();
    void set_learning_rate(Scalar lr) { cfg_.learning_rate = lr; }

  private:
    struct Slot {
        Parameter* param;
        std::vector<Scalar> m;
        std::vector<Scalar> v;
    };
    std::vector<Slot> slots_;
    OptimizerConfig cfg_;
    long step_count_ = 0;
};

struct Sample {
    Tensor image;   // (1,1,H,W)
    DensityMap gt;  // same H, W
};
using Dataset = std::vector<Sample>;

struct TrainConfig {
    int crop_size = 64;
    int patches_per_image = 4;
    int batch_size = 8;
    double flip_prob = 0.5;
    OptimizerConfig optimizer;
    Scalar pretrain_lr = 1e-4;
    Scalar finetune_lr = 1e-5;
    int pretrain_epochs = 3;
    int finetune_epochs = 6;
    std::uint64_t seed = 0;
    LossConfig loss;

    void validate(const BackboneConfig& backbone) const;
};

struct Model {
    Backbone backbone;
    Cnet cnet;

    std::vector<Parameter*> parameters();
};

Model build_model(const BackboneConfig& backbone_cfg, const CnetConfig& cnet_cfg,
                  std::uint64_t seed);

std::vector<NamedTensor> snapshot(Model& model);
void restore(Model& model, const std::vector<NamedTensor>& params);

// Random window crops applied identically to image and ground truth, each
// patch independently mirrored with probability flip_prob.
std::vector<Sample> crop_patches(const Sample& sample, int crop_size, int count, double flip_prob,
                                 Rng& rng);

struct StageResult {
    std::vector<Scalar> epoch_losses;  // mean batch loss per epoch
};

// Stage `level` of the cascaded pretraining, counting levels coarsest first.
// The level's module learns its residual target H - u_s(D_prev); the encoder
// trains jointly in stage 0 and is frozen afterwards, as are coarser modules.
StageResult pretrain_level(Model& model, int level, const Dataset& data, const TrainConfig& cfg);

struct FinetuneResult {
    std::vector<LossReport> steps;
    std::vector<Scalar> epoch_losses;
};

FinetuneResult finetune(Model& model, const Dataset& data, const TrainConfig& cfg,
                        const std::function<void(int epoch, Model& model)>& on_epoch = {});

Scalar count(const DensityMap& map);

// Whole-image inference on one sample, no cropping, no gradients.
DensityMap infer(Model& model, const Tensor& image);

struct EvalResult {
    Scalar mae = 0;
    Scalar mse = 0;
    std::vector<std::pair<Scalar, Scalar>> pairs;  // (true count, estimated count)
};

EvalResult evaluate_counts(const std::vector<std::pair<Scalar, Scalar>>& pairs);
EvalResult evaluate(Model& model, const Dataset& data);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed);

}  // namespace crdnet

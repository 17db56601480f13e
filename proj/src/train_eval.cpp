#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "crdnet/kernels.hpp"
#include "crdnet/train_eval.hpp"

namespace crdnet {

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg) : cfg_(cfg) {
    if (!(cfg.learning_rate >= 0)) throw std::invalid_argument("learning rate must be non-negative");
    for (Parameter* p : params) {
        Slot s;
        s.param = p;
        if (cfg_.kind != OptimizerKind::sgd) s.m.assign(p->numel(), 0.0);
        if (cfg_.kind == OptimizerKind::adam) s.v.assign(p->numel(), 0.0);
        slots_.push_back(std::move(s));
    }
}

void Optimizer::step() {
    const kernels::Backend& k = kernels::active();
    ++step_count_;
    const Scalar bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(step_count_));
    const Scalar bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(step_count_));
    for (Slot& s : slots_) {
        const std::size_t n = s.param->numel();
        Scalar* w = s.param->value().data();
        const Scalar* g = s.param->grad().data();
        switch (cfg_.kind) {
            case OptimizerKind::sgd:
                k.axpy(-cfg_.learning_rate, g, w, n);
                break;
            case OptimizerKind::momentum:
                k.scale(s.m.data(), cfg_.momentum, s.m.data(), n);
                k.axpy(1.0, g, s.m.data(), n);
                k.axpy(-cfg_.learning_rate, s.m.data(), w, n);
                break;
            case OptimizerKind::adam:
                k.adam_step(w, s.m.data(), s.v.data(), g, n, cfg_.learning_rate, cfg_.beta1,
                            cfg_.beta2, cfg_.eps, bias1, bias2);
                break;
        }
    }
}

void Optimizer::zero_grad() {
    for (Slot& s : slots_) s.param->zero_grad();
}

void TrainConfig::validate(const BackboneConfig& backbone) const {
    backbone.validate();
    loss.validate();
    if (crop_size < 1) throw std::invalid_argument("crop size must be positive");
    int need = 1;
    for (int k = 1; k < backbone.levels(); ++k) need *= backbone.scale;
    need *= backbone.scale;  // the cascade's zero map sits one scale below the coarsest level
    if (crop_size % need != 0)
        throw std::invalid_argument("crop size " + std::to_string(crop_size) +
                                    " must be divisible by " + std::to_string(need));
    if (patches_per_image < 1) throw std::invalid_argument("patches per image must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (flip_prob < 0 || flip_prob > 1) throw std::invalid_argument("flip probability must be in [0,1]");
    if (pretrain_epochs < 1 || finetune_epochs < 1)
        throw std::invalid_argument("epoch counts must be positive");
    if (!(pretrain_lr >= 0) || !(finetune_lr >= 0))
        throw std::invalid_argument("learning rates must be non-negative");
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out = backbone.parameters();
    for (Parameter* p : cnet.parameters()) out.push_back(p);
    return out;
}

Model build_model(const BackboneConfig& backbone_cfg, const CnetConfig& cnet_cfg,
                  std::uint64_t seed) {
    Model m;
    m.backbone = build_backbone(backbone_cfg, 1, mix_seed(seed, 0xB));
    m.cnet = build_cnet(backbone_cfg, cnet_cfg, mix_seed(seed, 0xC));
    return m;
}

std::vector<NamedTensor> snapshot(Model& model) {
    std::vector<NamedTensor> out;
    for (Parameter* p : model.parameters()) out.push_back({p->name(), p->value()});
    return out;
}

void restore(Model& model, const std::vector<NamedTensor>& params) {
    std::map<std::string, const Tensor*> by_name;
    for (const NamedTensor& nt : params) by_name[nt.name] = &nt.tensor;
    for (Parameter* p : model.parameters()) {
        auto it = by_name.find(p->name());
        if (it == by_name.end())
            throw std::runtime_error("checkpoint is missing parameter " + p->name());
        if (!(it->second->shape() == p->value().shape()))
            throw std::runtime_error("checkpoint parameter " + p->name() + " has shape " +
                                     it->second->shape().str() + ", model expects " +
                                     p->value().shape().str());
        p->value() = *it->second;
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw std::runtime_error("checkpoint has unknown parameter " + by_name.begin()->first);
}

std::vector<Sample> crop_patches(const Sample& sample, int crop_size, int count, double flip_prob,
                                 Rng& rng) {
    const Shape is = sample.image.shape();
    if (is.h != sample.gt.height || is.w != sample.gt.width)
        throw std::invalid_argument("image and ground truth sizes differ");
    if (crop_size > is.h || crop_size > is.w)
        throw std::invalid_argument("crop size " + std::to_string(crop_size) +
                                    " exceeds image " + std::to_string(is.h) + "x" +
                                    std::to_string(is.w));
    std::vector<Sample> out;
    out.reserve(count);
    for (int p = 0; p < count; ++p) {
        const int oy = rng.uniform_int(0, is.h - crop_size);
        const int ox = rng.uniform_int(0, is.w - crop_size);
        const bool flip = rng.bernoulli(flip_prob);
        Sample patch{Tensor({1, is.c, crop_size, crop_size}), DensityMap(crop_size, crop_size)};
        for (int c = 0; c < is.c; ++c)
            for (int y = 0; y < crop_size; ++y)
                for (int x = 0; x < crop_size; ++x) {
                    const int sx = ox + (flip ? crop_size - 1 - x : x);
                    patch.image.at(0, c, y, x) = sample.image.at(0, c, oy + y, sx);
                    if (c == 0) patch.gt.at(y, x) = sample.gt.at(oy + y, sx);
                }
        out.push_back(std::move(patch));
    }
    return out;
}

namespace {

Tensor stack_targets(const std::vector<const Sample*>& batch, int downsample_factor) {
    std::vector<Tensor> maps;
    maps.reserve(batch.size());
    for (const Sample* s : batch) {
        DensityMap d = downsample_factor == 1 ? s->gt : downsample_density(s->gt, downsample_factor);
        maps.push_back(density_to_tensor(d));
    }
    return stack_batch(maps);
}

Tensor stack_images(const std::vector<const Sample*>& batch) {
    std::vector<Tensor> imgs;
    imgs.reserve(batch.size());
    for (const Sample* s : batch) imgs.push_back(s->image);
    return stack_batch(imgs);
}

std::vector<std::vector<const Sample*>> make_batches(const std::vector<Sample>& patches,
                                                     int batch_size, Rng& rng) {
    std::vector<const Sample*> order;
    order.reserve(patches.size());
    for (const Sample& s : patches) order.push_back(&s);
    rng.shuffle(order);
    std::vector<std::vector<const Sample*>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        batches.emplace_back(order.begin() + i, order.begin() + end);
    }
    return batches;
}

std::vector<Sample> epoch_patches(const Dataset& data, const TrainConfig& cfg, Rng& rng) {
    std::vector<Sample> patches;
    patches.reserve(data.size() * cfg.patches_per_image);
    for (const Sample& s : data)
        for (Sample& p : crop_patches(s, cfg.crop_size, cfg.patches_per_image, cfg.flip_prob, rng))
            patches.push_back(std::move(p));
    return patches;
}

}  // namespace

StageResult pretrain_level(Model& model, int level, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate(model.backbone.config);
    const int levels = model.backbone.config.levels();
    if (level < 0 || level >= levels) throw std::invalid_argument("pretrain level out of range");
    if (data.empty()) throw std::invalid_argument("pretraining needs a non-empty dataset");

    const bool encoder_trainable = level == 0;
    std::vector<bool> module_mask(level + 1, false);
    module_mask[level] = true;

    std::vector<Parameter*> trained =
        model.cnet.modules[levels - 1 - level].parameters();  // internal order is coarsest first
    if (encoder_trainable)
        for (Parameter* p : model.backbone.parameters()) trained.push_back(p);

    OptimizerConfig ocfg = cfg.optimizer;
    ocfg.learning_rate = cfg.pretrain_lr;
    Optimizer opt(trained, ocfg);

    // The level's target lives 2^(levels-1-level) below input resolution.
    int factor = 1;
    for (int k = 0; k < levels - 1 - level; ++k) factor *= model.backbone.config.scale;

    Rng rng(mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(level)));
    StageResult result;
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const std::vector<Sample> patches = epoch_patches(data, cfg, rng);
        Scalar epoch_loss = 0;
        std::size_t batches_seen = 0;
        for (const auto& batch : make_batches(patches, cfg.batch_size, rng)) {
            Tape tape;
            ValueId images = tape.constant(stack_images(batch));
            FeaturePyramid pyr = extract_pyramid(tape, images, model.backbone, encoder_trainable);
            CascadeState cascade = estimate_density(tape, pyr, model.cnet, level + 1, module_mask);

            ValueId target = tape.constant(stack_targets(batch, factor));
            ValueId wanted_residual = tape.sub(target, cascade.upsampled[level]);
            ValueId loss = euclidean_loss(tape, cascade.residuals[level], wanted_residual);

            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            epoch_loss += tape.scalar_value(loss);
            ++batches_seen;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<Scalar>(batches_seen));
    }
    return result;
}

FinetuneResult finetune(Model& model, const Dataset& data, const TrainConfig& cfg,
                        const std::function<void(int epoch, Model& model)>& on_epoch) {
    cfg.validate(model.backbone.config);
    if (data.empty()) throw std::invalid_argument("fine-tuning needs a non-empty dataset");

    OptimizerConfig ocfg = cfg.optimizer;
    ocfg.learning_rate = cfg.finetune_lr;
    Optimizer opt(model.parameters(), ocfg);

    Rng rng(mix_seed(cfg.seed, 200));
    FinetuneResult result;
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        const std::vector<Sample> patches = epoch_patches(data, cfg, rng);
        Scalar epoch_loss = 0;
        std::size_t batches_seen = 0;
        for (const auto& batch : make_batches(patches, cfg.batch_size, rng)) {
            Tape tape;
            ValueId images = tape.constant(stack_images(batch));
            FeaturePyramid pyr = extract_pyramid(tape, images, model.backbone, true);
            CascadeState cascade = estimate_density(tape, pyr, model.cnet);
            ValueId target = tape.constant(stack_targets(batch, 1));
            TotalLoss loss = total_loss(tape, cascade.final_density, target, cfg.loss);

            opt.zero_grad();
            tape.backward(loss.total);
            opt.step();

            LossReport report = make_report(tape, loss);
            if (!std::isfinite(report.total))
                throw std::runtime_error("training diverged: loss " + std::to_string(report.total) +
                                         " at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(result.steps.size()));
            epoch_loss += report.total;
            ++batches_seen;
            result.steps.push_back(std::move(report));
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<Scalar>(batches_seen));
        if (on_epoch) on_epoch(epoch, model);
    }
    return result;
}

Scalar count(const DensityMap& map) { return map.sum(); }

DensityMap infer(Model& model, const Tensor& image) {
    Tape tape;
    ValueId input = tape.constant(image);
    FeaturePyramid pyr = extract_pyramid(tape, input, model.backbone, false);
    CascadeState cascade =
        estimate_density(tape, pyr, model.cnet, -1,
                         std::vector<bool>(model.backbone.config.levels(), false));
    return tensor_to_density(tape.value(cascade.final_density));
}

EvalResult evaluate_counts(const std::vector<std::pair<Scalar, Scalar>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("nothing to evaluate");
    EvalResult r;
    r.pairs = pairs;
    Scalar abs_sum = 0, sq_sum = 0;
    for (const auto& [truth, est] : pairs) {
        const Scalar d = truth - est;
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const Scalar n = static_cast<Scalar>(pairs.size());
    r.mae = abs_sum / n;
    r.mse = std::sqrt(sq_sum / n);
    if (r.mse < r.mae - 1e-12)
        throw std::logic_error("root-mean-square error fell below mean absolute error");
    return r;
}

EvalResult evaluate(Model& model, const Dataset& data) {
    if (data.empty()) throw std::invalid_argument("nothing to evaluate");
    std::vector<std::pair<Scalar, Scalar>> pairs;
    pairs.reserve(data.size());
    for (const Sample& s : data) pairs.emplace_back(s.gt.sum(), infer(model, s.image).sum());
    return evaluate_counts(pairs);
}

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
    if (static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("k-fold split needs at least k samples, got " +
                                    std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<Fold> folds(k);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        folds[f].test.assign(order.begin() + pos, order.begin() + pos + size);
        pos += size;
    }
    for (int f = 0; f < k; ++f)
        for (int g = 0; g < k; ++g)
            if (g != f)
                folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(),
                                      folds[g].test.end());
    return folds;
}

}  // namespace crdnet

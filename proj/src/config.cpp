#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "crdnet/config.hpp"

namespace crdnet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok) throw std::runtime_error("unknown config key \"" + key + "\" in " + where);
    }
}

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

std::vector<std::vector<ConvLayerSpec>> stacks_from_json(const json& j, const std::string& where) {
    std::vector<std::vector<ConvLayerSpec>> stacks;
    for (const auto& stage : j) {
        std::vector<ConvLayerSpec> layers;
        for (const auto& layer : stage) {
            reject_unknown(layer, {"channels", "kernel", "dilation"}, where);
            ConvLayerSpec spec;
            spec.out_channels = layer.at("channels").get<int>();
            get_if_present(layer, "kernel", spec.kernel);
            get_if_present(layer, "dilation", spec.dilation);
            layers.push_back(spec);
        }
        stacks.push_back(std::move(layers));
    }
    return stacks;
}

ordered_json stacks_to_json(const std::vector<std::vector<ConvLayerSpec>>& stacks) {
    ordered_json out = ordered_json::array();
    for (const auto& stage : stacks) {
        ordered_json js = ordered_json::array();
        for (const ConvLayerSpec& layer : stage)
            js.push_back({{"channels", layer.out_channels},
                          {"kernel", layer.kernel},
                          {"dilation", layer.dilation}});
        out.push_back(std::move(js));
    }
    return out;
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "momentum") return OptimizerKind::momentum;
    if (s == "adam") return OptimizerKind::adam;
    throw std::runtime_error("unknown optimizer \"" + s + "\" (expected sgd, momentum or adam)");
}

const char* optimizer_kind_to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::momentum: return "momentum";
        case OptimizerKind::adam: return "adam";
    }
    return "adam";
}

ExperimentConfig config_from_json(const json& j) {
    reject_unknown(j,
                   {"data_dir", "out_dir", "seed", "sigma", "dataset_count", "folds", "fold_index",
                    "backbone", "cnet", "loss", "train", "synth"},
                   "config root");
    ExperimentConfig cfg;
    get_if_present(j, "data_dir", cfg.data_dir);
    get_if_present(j, "out_dir", cfg.out_dir);
    get_if_present(j, "seed", cfg.seed);
    get_if_present(j, "sigma", cfg.sigma);
    get_if_present(j, "dataset_count", cfg.dataset_count);
    get_if_present(j, "folds", cfg.folds);
    get_if_present(j, "fold_index", cfg.fold_index);

    if (auto it = j.find("backbone"); it != j.end()) {
        reject_unknown(*it, {"scale", "stages"}, "backbone");
        get_if_present(*it, "scale", cfg.backbone.scale);
        if (auto st = it->find("stages"); st != it->end())
            cfg.backbone.stages = stacks_from_json(*st, "backbone.stages");
    }
    if (auto it = j.find("cnet"); it != j.end()) {
        reject_unknown(*it, {"pre_stacks"}, "cnet");
        if (auto st = it->find("pre_stacks"); st != it->end())
            cfg.cnet.pre_stacks = stacks_from_json(*st, "cnet.pre_stacks");
    }
    if (auto it = j.find("loss"); it != j.end()) {
        reject_unknown(*it, {"lambda", "patch_size", "patch_stride"}, "loss");
        get_if_present(*it, "lambda", cfg.train.loss.lambda);
        get_if_present(*it, "patch_size", cfg.train.loss.patch_size);
        get_if_present(*it, "patch_stride", cfg.train.loss.patch_stride);
    }
    if (auto it = j.find("train"); it != j.end()) {
        reject_unknown(*it,
                       {"crop_size", "patches_per_image", "batch_size", "flip_prob", "optimizer",
                        "pretrain_lr", "finetune_lr", "pretrain_epochs", "finetune_epochs"},
                       "train");
        get_if_present(*it, "crop_size", cfg.train.crop_size);
        get_if_present(*it, "patches_per_image", cfg.train.patches_per_image);
        get_if_present(*it, "batch_size", cfg.train.batch_size);
        get_if_present(*it, "flip_prob", cfg.train.flip_prob);
        get_if_present(*it, "pretrain_lr", cfg.train.pretrain_lr);
        get_if_present(*it, "finetune_lr", cfg.train.finetune_lr);
        get_if_present(*it, "pretrain_epochs", cfg.train.pretrain_epochs);
        get_if_present(*it, "finetune_epochs", cfg.train.finetune_epochs);
        if (auto opt = it->find("optimizer"); opt != it->end()) {
            reject_unknown(*opt, {"kind", "momentum", "beta1", "beta2", "eps"}, "train.optimizer");
            if (auto kind = opt->find("kind"); kind != opt->end())
                cfg.train.optimizer.kind = optimizer_kind_from_string(kind->get<std::string>());
            get_if_present(*opt, "momentum", cfg.train.optimizer.momentum);
            get_if_present(*opt, "beta1", cfg.train.optimizer.beta1);
            get_if_present(*opt, "beta2", cfg.train.optimizer.beta2);
            get_if_present(*opt, "eps", cfg.train.optimizer.eps);
        }
    }
    if (auto it = j.find("synth"); it != j.end()) {
        reject_unknown(*it,
                       {"image_size", "count_min", "count_max", "radius_top", "radius_bottom",
                        "noise_amplitude"},
                       "synth");
        get_if_present(*it, "image_size", cfg.synth.image_size);
        get_if_present(*it, "count_min", cfg.synth.count_min);
        get_if_present(*it, "count_max", cfg.synth.count_max);
        get_if_present(*it, "radius_top", cfg.synth.radius_top);
        get_if_present(*it, "radius_bottom", cfg.synth.radius_bottom);
        get_if_present(*it, "noise_amplitude", cfg.synth.noise_amplitude);
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["data_dir"] = cfg.data_dir;
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["sigma"] = cfg.sigma;
    j["dataset_count"] = cfg.dataset_count;
    j["folds"] = cfg.folds;
    j["fold_index"] = cfg.fold_index;
    j["backbone"] = {{"scale", cfg.backbone.scale}, {"stages", stacks_to_json(cfg.backbone.stages)}};
    j["cnet"] = {{"pre_stacks", stacks_to_json(cfg.cnet.pre_stacks)}};
    j["loss"] = {{"lambda", cfg.train.loss.lambda},
                 {"patch_size", cfg.train.loss.patch_size},
                 {"patch_stride", cfg.train.loss.patch_stride}};
    j["train"] = {{"crop_size", cfg.train.crop_size},
                  {"patches_per_image", cfg.train.patches_per_image},
                  {"batch_size", cfg.train.batch_size},
                  {"flip_prob", cfg.train.flip_prob},
                  {"optimizer",
                   {{"kind", optimizer_kind_to_string(cfg.train.optimizer.kind)},
                    {"momentum", cfg.train.optimizer.momentum},
                    {"beta1", cfg.train.optimizer.beta1},
                    {"beta2", cfg.train.optimizer.beta2},
                    {"eps", cfg.train.optimizer.eps}}},
                  {"pretrain_lr", cfg.train.pretrain_lr},
                  {"finetune_lr", cfg.train.finetune_lr},
                  {"pretrain_epochs", cfg.train.pretrain_epochs},
                  {"finetune_epochs", cfg.train.finetune_epochs}};
    j["synth"] = {{"image_size", cfg.synth.image_size},
                  {"count_min", cfg.synth.count_min},
                  {"count_max", cfg.synth.count_max},
                  {"radius_top", cfg.synth.radius_top},
                  {"radius_bottom", cfg.synth.radius_bottom},
                  {"noise_amplitude", cfg.synth.noise_amplitude}};
    return j;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset_count < 0) throw std::invalid_argument("dataset_count must be non-negative");
    if (folds < 2) throw std::invalid_argument("folds must be at least 2");
    if (fold_index < 0 || fold_index >= folds)
        throw std::invalid_argument("fold_index must be in [0, folds)");
    if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
    crdnet::validate(synth);
    train.validate(backbone);
    if (!cnet.pre_stacks.empty() &&
        static_cast<int>(cnet.pre_stacks.size()) != backbone.levels())
        throw std::invalid_argument("cnet.pre_stacks must be empty or match the backbone level count");
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        in >> j;
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed config " + path.string() + ": " + e.what());
    }
}

void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << experiment_config_dump(cfg) << "\n";
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string experiment_config_dump(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

}  // namespace crdnet

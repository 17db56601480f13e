#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "crdnet/pipeline.hpp"
#include "crdnet/synth.hpp"

namespace crdnet {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string scene_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", index);
    return buf;
}

std::string format_count(Scalar v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string metrics_csv(const FinetuneResult& fine) {
    std::string csv = "step,le,ly,total\n";
    char line[160];
    for (std::size_t i = 0; i < fine.steps.size(); ++i) {
        const LossReport& r = fine.steps[i];
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", i, r.euclidean, r.local_count,
                      r.total);
        csv += line;
    }
    return csv;
}

Model pretrained_model(const ExperimentConfig& cfg, const Dataset& train_set, std::ostream& log,
                       std::vector<StageResult>* stages_out) {
    Model model = build_model(cfg.backbone, cfg.cnet, mix_seed(cfg.seed, 400));
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    for (int level = 0; level < cfg.backbone.levels(); ++level) {
        StageResult stage = pretrain_level(model, level, train_set, tc);
        log << "pretrain level " << level << ": first epoch loss " << stage.epoch_losses.front()
            << ", last " << stage.epoch_losses.back() << "\n";
        if (stages_out) stages_out->push_back(std::move(stage));
    }
    return model;
}

FinetuneResult finetune_to_dir(const ExperimentConfig& cfg, Model& model, const Dataset& train_set,
                               const fs::path& out_dir, std::ostream& log) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    FinetuneResult fine = finetune(model, train_set, tc, [&](int epoch, Model& m) {
        char name[48];
        std::snprintf(name, sizeof(name), "checkpoint_ep%04d.bin", epoch);
        write_checkpoint(out_dir / name, snapshot(m));
    });
    for (std::size_t e = 0; e < fine.epoch_losses.size(); ++e)
        log << "finetune epoch " << e << ": mean total loss " << fine.epoch_losses[e] << "\n";
    write_checkpoint(out_dir / "checkpoint.bin", snapshot(model));
    write_text(out_dir / "metrics.csv", metrics_csv(fine));
    return fine;
}

}  // namespace

void run_synth(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg.synth);
    if (cfg.dataset_count < 0) throw std::invalid_argument("dataset_count must be non-negative");
    const fs::path dir = cfg.data_dir;
    ensure_dir(dir);

    ordered_json manifest;
    manifest["count"] = cfg.dataset_count;
    manifest["image_size"] = cfg.synth.image_size;
    manifest["stems"] = ordered_json::array();
    for (int i = 0; i < cfg.dataset_count; ++i) {
        const Scene scene = generate_scene(cfg.synth, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        const std::string stem = scene_stem(i);
        write_density(dir / (stem + ".img.crd"), tensor_to_density(scene.image));
        save_annotation(dir / (stem + ".json"), scene.annotation);
        manifest["stems"].push_back(stem);
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    log << "wrote " << cfg.dataset_count << " scenes to " << dir.string() << "\n";
}

GtReport run_gt(const fs::path& annotations_dir, double sigma, const fs::path& out_dir,
                std::ostream& log) {
    if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
    if (!fs::is_directory(annotations_dir))
        throw std::runtime_error(annotations_dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(annotations_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json" &&
            entry.path().filename() != "manifest.json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    ensure_dir(out_dir);

    GtReport report;
    for (const fs::path& file : files) {
        const PointAnnotation ann = load_annotation(file);
        const DensityMap gt = generate_density_map(ann, sigma);
        const double err = std::abs(gt.sum() - static_cast<double>(ann.points.size()));
        if (err >= 1e-3)
            throw std::runtime_error("count drift " + std::to_string(err) + " in " + file.string());
        report.max_count_error = std::max(report.max_count_error, err);
        ++report.files;
        write_density(out_dir / (file.stem().string() + ".gt.crd"), gt);
    }
    log << "wrote " << report.files << " density maps, max |sum - count| = "
        << report.max_count_error << "\n";
    return report;
}

Dataset load_dataset(const fs::path& data_dir) {
    const fs::path manifest_path = data_dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open " + manifest_path.string() + " (run synth first?)");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset data;
    for (const auto& stem_json : manifest.at("stems")) {
        const std::string stem = stem_json.get<std::string>();
        const fs::path gt_path = data_dir / (stem + ".gt.crd");
        if (!fs::exists(gt_path))
            throw std::runtime_error(gt_path.string() + " is missing (run gt first?)");
        Sample s;
        s.image = density_to_tensor(read_density(data_dir / (stem + ".img.crd")));
        s.gt = read_density(gt_path);
        const Shape is = s.image.shape();
        if (is.h != s.gt.height || is.w != s.gt.width)
            throw std::runtime_error("image and ground truth sizes differ for " + stem);
        data.push_back(std::move(s));
    }
    return data;
}

SplitDataset split_dataset(const Dataset& all, const ExperimentConfig& cfg) {
    const std::vector<Fold> folds = kfold_split(all.size(), cfg.folds, mix_seed(cfg.seed, 300));
    const Fold& fold = folds[cfg.fold_index];
    SplitDataset split;
    for (std::size_t i : fold.train) split.train.push_back(all[i]);
    for (std::size_t i : fold.test) split.test.push_back(all[i]);
    return split;
}

TrainOutcome run_train(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const Dataset all = load_dataset(cfg.data_dir);
    const SplitDataset split = split_dataset(all, cfg);
    log << "training on " << split.train.size() << " images, holding out " << split.test.size()
        << "\n";
    const fs::path out_dir = cfg.out_dir;
    ensure_dir(out_dir);

    TrainOutcome outcome;
    Model model = pretrained_model(cfg, split.train, log, &outcome.pretrain);
    outcome.fine = finetune_to_dir(cfg, model, split.train, out_dir, log);
    outcome.test = evaluate(model, split.test);

    ordered_json report;
    report["train_images"] = split.train.size();
    report["test_images"] = split.test.size();
    report["pretrain_epoch_losses"] = ordered_json::array();
    for (const StageResult& s : outcome.pretrain) report["pretrain_epoch_losses"].push_back(s.epoch_losses);
    report["finetune_epoch_losses"] = outcome.fine.epoch_losses;
    report["test_mae"] = outcome.test.mae;
    report["test_mse"] = outcome.test.mse;
    write_text(out_dir / "report.json", report.dump(2) + "\n");

    log << "test MAE=" << format_count(outcome.test.mae) << " MSE=" << format_count(outcome.test.mse)
        << "\n";
    return outcome;
}

EvalResult run_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
    cfg.validate();
    const Dataset all = load_dataset(cfg.data_dir);
    const SplitDataset split = split_dataset(all, cfg);

    Model model = build_model(cfg.backbone, cfg.cnet, mix_seed(cfg.seed, 400));
    restore(model, read_checkpoint(checkpoint));
    const EvalResult result = evaluate(model, split.test);

    ensure_dir(cfg.out_dir);
    ordered_json report;
    report["images"] = result.pairs.size();
    report["mae"] = result.mae;
    report["mse"] = result.mse;
    report["pairs"] = ordered_json::array();
    for (const auto& [truth, est] : result.pairs) report["pairs"].push_back({truth, est});
    write_text(fs::path(cfg.out_dir) / "eval_report.json", report.dump(2) + "\n");

    log << "MAE=" << format_count(result.mae) << " MSE=" << format_count(result.mse) << "\n";
    return result;
}

Scalar run_infer(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& image_path,
                 std::ostream& log) {
    Model model = build_model(cfg.backbone, cfg.cnet, mix_seed(cfg.seed, 400));
    restore(model, read_checkpoint(checkpoint));

    const Tensor image = density_to_tensor(read_density(image_path));
    const DensityMap density = infer(model, image);

    const fs::path out_dir = cfg.out_dir;
    ensure_dir(out_dir);
    const std::string stem = image_path.stem().stem().string();  // strips .img from .img.crd too
    write_density(out_dir / (stem + ".density.crd"), density);
    write_density_png(out_dir / (stem + ".density.png"), density);

    const Scalar estimated = count(density);
    log << "count=" << format_count(estimated) << "\n";
    return estimated;
}

AblateOutcome run_ablate(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const Dataset all = load_dataset(cfg.data_dir);
    const SplitDataset split = split_dataset(all, cfg);
    const fs::path out_dir = cfg.out_dir;
    ensure_dir(out_dir);

    // Pretraining never sees the count loss, so both arms share one
    // pretrained starting point; only the fine-tune objective differs.
    Model model = pretrained_model(cfg, split.train, log, nullptr);
    const std::vector<NamedTensor> start = snapshot(model);

    AblateOutcome outcome;
    struct Arm {
        const char* label;
        Scalar lambda;
        const char* dir;
        EvalResult* result;
    };
    const Arm arms[] = {
        {"L_E", 0.0, "arm_le", &outcome.euclidean_only},
        {"L_E+L_Y", cfg.train.loss.lambda, "arm_le_ly", &outcome.combined},
    };
    for (const Arm& arm : arms) {
        log << "fine-tuning arm " << arm.label << " (lambda=" << arm.lambda << ")\n";
        restore(model, start);
        ExperimentConfig arm_cfg = cfg;
        arm_cfg.train.loss.lambda = arm.lambda;
        ensure_dir(out_dir / arm.dir);
        arm_cfg.out_dir = (out_dir / arm.dir).string();
        finetune_to_dir(arm_cfg, model, split.train, out_dir / arm.dir, log);
        *arm.result = evaluate(model, split.test);
    }

    const Scalar diff = outcome.combined.mae - outcome.euclidean_only.mae;
    char row[160];
    std::string table = "loss      MAE       MSE\n";
    std::snprintf(row, sizeof(row), "%-8s  %-8.4f  %-8.4f\n", "L_E", outcome.euclidean_only.mae,
                  outcome.euclidean_only.mse);
    table += row;
    std::snprintf(row, sizeof(row), "%-8s  %-8.4f  %-8.4f\n", "L_E+L_Y", outcome.combined.mae,
                  outcome.combined.mse);
    table += row;
    std::snprintf(row, sizeof(row), "MAE difference (L_E+L_Y minus L_E): %+.4f\n", diff);
    table += row;
    log << table;

    ordered_json report;
    report["lambda"] = cfg.train.loss.lambda;
    report["euclidean_only"] = {{"mae", outcome.euclidean_only.mae},
                                {"mse", outcome.euclidean_only.mse}};
    report["combined"] = {{"mae", outcome.combined.mae}, {"mse", outcome.combined.mse}};
    report["mae_difference"] = diff;
    write_text(out_dir / "ablation_report.json", report.dump(2) + "\n");
    write_text(out_dir / "ablation_table.txt", table);
    return outcome;
}

}  // namespace crdnet

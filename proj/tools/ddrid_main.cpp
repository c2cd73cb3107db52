// ddrid: dual-reconstruction image decomposition for one-class anomaly
// detection. Subcommands: prepare-data, train, score, evaluate, plot-roc.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ddrid/checkpoint.hpp"
#include "ddrid/common.hpp"
#include "ddrid/config.hpp"
#include "ddrid/data.hpp"
#include "ddrid/eval.hpp"
#include "ddrid/score.hpp"
#include "ddrid/sha256.hpp"
#include "ddrid/train.hpp"

namespace fs = std::filesystem;
using namespace ddrid;
using nlohmann::ordered_json;

namespace {

struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<int> normal_class;
    std::optional<int> rounds;
    std::optional<std::string> score_kind;
    std::optional<int64_t> test_subset_size;
    std::optional<std::string> output_dir;

    void apply(cli::RunConfig& cfg) const {
        if (seed) cfg.train.seed = *seed;
        if (normal_class) cfg.normal_class = *normal_class;
        if (rounds) cfg.rounds = *rounds;
        if (score_kind) {
            auto p = eval::parse_kind_policy(*score_kind);
            if (!p) throw ConfigError("score_kind: unknown value '" + *score_kind + "'");
            cfg.kind_policy = *p;
        }
        if (test_subset_size) cfg.test_subset_size = *test_subset_size;
        if (output_dir) cfg.output_dir = *output_dir;
    }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--seed", ov.seed, "Base RNG seed (overrides config)");
    cmd->add_option("--normal-class", ov.normal_class, "Normal class id 0..9 (overrides config)");
    cmd->add_option("--rounds", ov.rounds, "Experiment rounds (overrides config)");
    cmd->add_option("--score-kind", ov.score_kind,
                    "algorithm2|latent|reconstruction|sum (overrides config)");
    cmd->add_option("--test-subset-size", ov.test_subset_size,
                    "Seeded uniform test subsample size (overrides config)");
    cmd->add_option("--output-dir", ov.output_dir, "Output directory (overrides config)");
}

class Manifest {
public:
    Manifest(const fs::path& dir, const std::string& command) : path_(dir / "manifest.json") {
        t0_ = std::chrono::steady_clock::now();
        j_["toolkit_version"] = kVersion;
        j_["command"] = command;
        j_["status"] = "running";
    }

    void set_config(const cli::RunConfig& cfg) {
        j_["config_text"] = cli::run_config_text(cfg);
        j_["dataset"] = cfg.dataset;
        j_["normal_class"] = cfg.normal_class;
        j_["rounds"] = cfg.rounds;
        j_["seed"] = cfg.train.seed;
    }

    void add_input(const fs::path& p) {
        ordered_json e;
        e["path"] = p.string();
        e["sha256"] = sha256_file_hex(p);
        inputs_.push_back(e);
    }

    void add_output(const std::string& name, const fs::path& p) { outputs_[name] = p.string(); }

    // Crash-forensics write: status stays "running".
    void write_initial() {
        j_["inputs"] = inputs_;
        dump();
    }

    void finalize() {
        for (const auto& [name, p] : outputs_.items())
            if (!fs::exists(p.get<std::string>()))
                throw IoError("manifest output missing: " + p.get<std::string>());
        j_["inputs"] = inputs_;
        j_["outputs"] = outputs_;
        const auto dt = std::chrono::steady_clock::now() - t0_;
        j_["wall_clock_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(dt).count();
        j_["status"] = "complete";
        dump();
    }

private:
    void dump() {
        std::ofstream out(path_);
        if (!out) throw IoError("cannot write " + path_.string());
        out << j_.dump(2) << "\n";
    }
    fs::path path_;
    ordered_json j_;
    ordered_json inputs_ = ordered_json::array();
    ordered_json outputs_ = ordered_json::object();
    std::chrono::steady_clock::time_point t0_;
};

struct LoadedData {
    std::vector<data::RawImage> train, test;
    std::vector<fs::path> files;
};

LoadedData load_raw(const cli::RunConfig& cfg) {
    LoadedData d;
    if (cfg.dataset == "mnist") {
        const auto p = cli::resolve_mnist(cfg.data_dir);
        d.train = data::load_mnist(p.train_images, p.train_labels);
        d.test = data::load_mnist(p.test_images, p.test_labels);
        d.files = {p.train_images, p.train_labels, p.test_images, p.test_labels};
    } else {
        const auto p = cli::resolve_cifar10(cfg.data_dir);
        d.train = data::load_cifar10(p.train_batches);
        d.test = data::load_cifar10({p.test_batch});
        d.files = p.train_batches;
        d.files.push_back(p.test_batch);
    }
    return d;
}

cli::RunConfig load_config(const std::string& config_path, const Overrides& ov) {
    auto cfg = cli::parse_run_config(config_path);
    ov.apply(cfg);
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    return cfg;
}

int cmd_prepare_data(const std::string& config_path, const Overrides& ov) {
    auto cfg = load_config(config_path, ov);
    Manifest man(cfg.output_dir, "prepare-data");
    man.set_config(cfg);
    auto raw = load_raw(cfg);
    for (const auto& f : raw.files) man.add_input(f);
    man.write_initial();

    auto preprocess_all = [&](const std::vector<data::RawImage>& raws, bool flag_test) {
        data::ImageDataset ds;
        for (const auto& r : raws) {
            ds.images.push_back(data::preprocess(r));
            ds.class_ids.push_back(r.class_id);
            ds.normal_flags.push_back(flag_test ? (r.class_id == cfg.normal_class ? 1 : 0) : 1);
        }
        return ds;
    };
    const fs::path train_out = cfg.output_dir / (cfg.dataset + "_train.ddrds");
    const fs::path test_out = cfg.output_dir / (cfg.dataset + "_test.ddrds");
    data::save_dataset(preprocess_all(raw.train, false), train_out);
    data::save_dataset(preprocess_all(raw.test, true), test_out);
    man.add_output("train_cache", train_out);
    man.add_output("test_cache", test_out);
    man.finalize();
    std::cout << "prepared " << train_out.string() << " and " << test_out.string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const Overrides& ov) {
    auto cfg = load_config(config_path, ov);
    Manifest man(cfg.output_dir, "train");
    man.set_config(cfg);
    auto raw = load_raw(cfg);
    for (const auto& f : raw.files) man.add_input(f);
    man.write_initial();

    data::SplitConfig split_cfg{0.9, cfg.train.seed};
    auto splits = data::one_vs_rest_split(raw.train, raw.test, cfg.normal_class, split_cfg);
    auto model = train::train_model(splits.train, cfg.dataset_kind(), cfg.train);
    model.selected_score_kind = static_cast<int>(score::select_score_kind(model, splits.val));

    const fs::path ckpt_path = cfg.output_dir / "checkpoint.ddrck";
    const fs::path log_path = cfg.output_dir / "loss_log.csv";
    ckpt::save_checkpoint(model, ckpt_path);
    train::write_loss_log(model.loss_history, log_path);
    man.add_output("checkpoint", ckpt_path);
    man.add_output("loss_log", log_path);
    man.finalize();
    for (const auto& w : model.warnings) std::cerr << "ddrid: warning: " << w << "\n";
    std::cout << "trained model written to " << ckpt_path.string() << " (selected score: "
              << score::score_kind_name(
                     static_cast<score::ScoreKind>(model.selected_score_kind))
              << ")\n";
    return 0;
}

int cmd_score(const std::string& checkpoint_path, const std::string& input_path,
              const std::string& kind_flag, const std::string& output_path) {
    auto model = ckpt::load_checkpoint(checkpoint_path);
    auto ds = data::load_dataset(input_path);

    score::ScoreKind kind;
    if (!kind_flag.empty()) {
        auto k = score::parse_score_kind(kind_flag);
        if (!k) throw ConfigError("score_kind: unknown value '" + kind_flag + "'");
        kind = *k;
    } else if (model.selected_score_kind >= 0) {
        kind = static_cast<score::ScoreKind>(model.selected_score_kind);
    } else {
        throw StateError("checkpoint carries no score selection; pass --score-kind");
    }

    score::AnomalyScorer scorer{&model, kind, std::nullopt};
    const auto scores = score::batch_score(scorer, ds);
    score::write_scores_csv(output_path, ds, kind, scores);
    std::cout << "wrote " << scores.size() << " scores (" << score::score_kind_name(kind)
              << ") to " << output_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const Overrides& ov) {
    auto cfg = load_config(config_path, ov);
    Manifest man(cfg.output_dir, "evaluate");
    man.set_config(cfg);
    auto raw = load_raw(cfg);
    for (const auto& f : raw.files) man.add_input(f);
    man.write_initial();

    std::vector<eval::RoundArtifacts> artifacts;
    auto report = eval::run_experiment(raw.train, raw.test, cfg.dataset_kind(),
                                       cfg.normal_class, cfg.rounds, cfg.train, cfg.kind_policy,
                                       cfg.test_subset_size, &artifacts);

    const fs::path report_path = cfg.output_dir / "report.json";
    eval::write_report(report, report_path);
    man.add_output("report", report_path);
    std::vector<eval::RocCurve> curves;
    std::vector<std::string> labels;
    for (size_t r = 0; r < artifacts.size(); ++r) {
        const fs::path roc_path =
            cfg.output_dir / ("roc_round_" + std::to_string(r) + ".csv");
        eval::write_roc_csv(artifacts[r].roc, roc_path);
        man.add_output("roc_round_" + std::to_string(r), roc_path);
        curves.push_back(artifacts[r].roc);
        labels.push_back("round " + std::to_string(r) + " (auc " +
                         std::to_string(report.per_round_auc[r]).substr(0, 6) + ")");
    }
    const fs::path plot_path = cfg.output_dir / "roc.svg";
    eval::emit_roc_plot(curves, labels, plot_path);
    man.add_output("plot", plot_path);
    man.finalize();
    std::cout << "mean AUC over " << report.rounds << " round(s): " << report.mean_auc << "\n";
    return 0;
}

int cmd_plot_roc(const std::vector<std::string>& csv_paths, const std::string& output_path,
                 std::vector<std::string> labels) {
    if (csv_paths.empty()) throw ArgumentError("plot-roc needs at least one ROC csv");
    std::vector<eval::RocCurve> curves;
    for (const auto& p : csv_paths) {
        std::ifstream in(p);
        if (!in) throw IoError("cannot open " + p);
        std::string line;
        std::getline(in, line);  // header
        eval::RocCurve c;
        while (std::getline(in, line)) {
            double fpr, tpr, thr;
            if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &fpr, &tpr, &thr) != 3)
                throw FormatError("bad ROC csv row in " + p + ": " + line);
            c.points.emplace_back(fpr, tpr);
            c.thresholds.push_back(thr);
        }
        curves.push_back(std::move(c));
    }
    while (labels.size() < csv_paths.size())
        labels.push_back(fs::path(csv_paths[labels.size()]).stem().string());
    eval::emit_roc_plot(curves, labels, output_path);
    std::cout << "wrote " << output_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-reconstruction image decomposition for one-class anomaly detection"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, input_path, kind_flag, output_path = "scores.csv";
    std::vector<std::string> csv_paths, labels;
    Overrides ov;

    auto* prep = app.add_subcommand("prepare-data", "Parse, preprocess and cache a dataset");
    prep->add_option("--config", config_path, "Run configuration file")->required();
    add_override_flags(prep, ov);

    auto* tr = app.add_subcommand("train", "Train one model (pretrain, centroid, finetune)");
    tr->add_option("--config", config_path, "Run configuration file")->required();
    add_override_flags(tr, ov);

    auto* sc = app.add_subcommand("score", "Score a cached dataset with a trained checkpoint");
    sc->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    sc->add_option("--input", input_path, "Dataset cache (.ddrds)")->required();
    sc->add_option("--score-kind", kind_flag, "latent|reconstruction|sum (default: checkpoint)");
    sc->add_option("--output", output_path, "Score CSV path");

    auto* ev = app.add_subcommand("evaluate", "Run the multi-round one-vs-rest experiment");
    ev->add_option("--config", config_path, "Run configuration file")->required();
    add_override_flags(ev, ov);

    auto* pl = app.add_subcommand("plot-roc", "Render ROC csv files into one SVG plot");
    pl->add_option("csvs", csv_paths, "ROC csv files")->required();
    pl->add_option("--output", output_path, "SVG output path")->required();
    pl->add_option("--label", labels, "Curve labels (one per csv, in order)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed()) return cmd_prepare_data(config_path, ov);
        if (tr->parsed()) return cmd_train(config_path, ov);
        if (sc->parsed()) return cmd_score(checkpoint_path, input_path, kind_flag, output_path);
        if (ev->parsed()) return cmd_evaluate(config_path, ov);
        if (pl->parsed()) return cmd_plot_roc(csv_paths, output_path, labels);
    } catch (const Error& e) {
        std::cerr << "ddrid: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ddrid: error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

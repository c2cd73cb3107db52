#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "synthetic_mnist.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = DDRID_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_f = fs::temp_directory_path() / ("ddrid_cli_out_" + std::to_string(counter));
    const fs::path err_f = fs::temp_directory_path() / ("ddrid_cli_err_" + std::to_string(counter));
    ++counter;
    const std::string cmd = kCli + " " + args + " >" + out_f.string() + " 2>" + err_f.string();
    const int rc = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {rc == 0 ? 0 : 1, slurp(out_f), slurp(err_f)};
}

std::string slurp_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Fixture {
    fs::path root, data, out;
    Fixture() {
        root = fs::temp_directory_path() / "ddrid_cli_fixture";
        fs::remove_all(root);
        data = root / "data";
        out = root / "out";
        fs::create_directories(out);
        synth::write_mnist_fixture(data, 60, 30, 2024);
    }
    fs::path write_config(const std::string& extra = "", const std::string& name = "run.cfg") {
        const fs::path p = root / name;
        std::ofstream cfg(p);
        cfg << "dataset = mnist\n"
            << "data_dir = " << data.string() << "\n"
            << "output_dir = " << out.string() << "\n"
            << "normal_class = 0\n"
            << "rounds = 1\n"
            << "batch_size = 8\n"
            << "pretrain_epochs = 1\n"
            << "finetune_epochs = 1\n"
            << "seed = 42\n"
            << extra;
        return p;
    }
};

// columns: image_index,class_id,normal_flag,score_kind,score
std::vector<double> csv_scores(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> out;
    while (std::getline(in, line)) {
        const auto last = line.rfind(',');
        out.push_back(std::stod(line.substr(last + 1)));
    }
    return out;
}

}  // namespace

TEST_CASE("cli train: artifacts, loss-log rows, byte-identical rerun") {
    Fixture fx;
    const auto cfg = fx.write_config();
    auto r = run_cli("train --config " + cfg.string());
    CAPTURE(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(fx.out / "checkpoint.ddrck"));
    CHECK(fs::exists(fx.out / "manifest.json"));
    REQUIRE(fs::exists(fx.out / "loss_log.csv"));

    const std::string log1 = slurp_file(fx.out / "loss_log.csv");
    int pretrain_rows = 0, finetune_rows = 0;
    {
        std::istringstream ss(log1);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.find(",pretrain,") != std::string::npos) ++pretrain_rows;
            if (line.find(",finetune,") != std::string::npos) ++finetune_rows;
        }
    }
    CHECK(pretrain_rows == 1);
    CHECK(finetune_rows == 1);

    const std::string ckpt1 = slurp_file(fx.out / "checkpoint.ddrck");
    const std::string manifest = slurp_file(fx.out / "manifest.json");
    CHECK(manifest.find("\"status\": \"complete\"") != std::string::npos);
    CHECK(manifest.find("\"sha256\"") != std::string::npos);

    // deterministic rerun into a fresh directory
    const fs::path out2 = fx.root / "out2";
    auto cfg2 = fx.write_config("", "run2.cfg");
    auto r2 = run_cli("train --config " + cfg2.string() + " --output-dir " + out2.string());
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp_file(out2 / "loss_log.csv") == log1);
    CHECK(slurp_file(out2 / "checkpoint.ddrck") == ckpt1);
}

TEST_CASE("cli train: config errors name the field and exit nonzero") {
    Fixture fx;
    const auto cfg = fx.write_config("normal_class = 11\n", "bad.cfg");
    auto r = run_cli("train --config " + cfg.string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("normal_class") != std::string::npos);
    CHECK(r.err.find("ddrid: error:") != std::string::npos);
}

TEST_CASE("cli train: missing data files are an io error") {
    Fixture fx;
    fs::remove(fx.data / "train-images-idx3-ubyte");
    const auto cfg = fx.write_config();
    auto r = run_cli("train --config " + cfg.string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("io") != std::string::npos);
}

TEST_CASE("cli prepare-data + score: caches, kinds, sum equals latent plus reconstruction") {
    Fixture fx;
    const auto cfg = fx.write_config();
    REQUIRE(run_cli("train --config " + cfg.string()).exit_code == 0);
    REQUIRE(run_cli("prepare-data --config " + cfg.string()).exit_code == 0);
    const fs::path cache = fx.out / "mnist_test.ddrds";
    REQUIRE(fs::exists(cache));
    REQUIRE(fs::exists(fx.out / "mnist_train.ddrds"));

    const std::string ck = (fx.out / "checkpoint.ddrck").string();
    auto score_with = [&](const std::string& kind, const std::string& name) {
        const fs::path out_csv = fx.root / name;
        std::string args = "score --checkpoint " + ck + " --input " + cache.string() +
                           " --output " + out_csv.string();
        if (!kind.empty()) args += " --score-kind " + kind;
        REQUIRE(run_cli(args).exit_code == 0);
        return csv_scores(out_csv);
    };

    auto latent = score_with("latent", "l.csv");
    auto rec = score_with("reconstruction", "r.csv");
    auto sum = score_with("sum", "s.csv");
    auto default_kind = score_with("", "d.csv");  // checkpoint's recorded selection
    REQUIRE(latent.size() == 30);
    REQUIRE(rec.size() == 30);
    REQUIRE(sum.size() == 30);
    REQUIRE(default_kind.size() == 30);
    for (size_t i = 0; i < latent.size(); ++i) {
        CHECK(latent[i] >= 0.0);
        CHECK(rec[i] >= 0.0);
        CHECK(std::abs(sum[i] - (latent[i] + rec[i])) < 1e-9);
        CHECK((default_kind[i] == latent[i] || default_kind[i] == rec[i]));
    }

    SUBCASE("corrupted checkpoint exits nonzero with a checkpoint error") {
        const fs::path broken = fx.root / "broken.ddrck";
        std::ofstream(broken, std::ios::binary) << "DDRIDCK1garbagegarbagegarbage";
        auto r = run_cli("score --checkpoint " + broken.string() + " --input " +
                         cache.string() + " --output " + (fx.root / "x.csv").string());
        CHECK(r.exit_code != 0);
        CHECK(r.err.find("checkpoint") != std::string::npos);
    }
}

TEST_CASE("cli evaluate: report in range, per-round artifacts, plot-roc") {
    Fixture fx;
    const auto cfg = fx.write_config("kind_policy = algorithm2\n", "eval.cfg");
    auto r = run_cli("evaluate --config " + cfg.string());
    CAPTURE(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(fx.out / "report.json"));
    CHECK(fs::exists(fx.out / "roc_round_0.csv"));
    CHECK(fs::exists(fx.out / "roc.svg"));

    const std::string rep = slurp_file(fx.out / "report.json");
    CHECK(rep.find("\"kind_policy\": \"algorithm2\"") != std::string::npos);
    CHECK(rep.find("\"score_kind\"") != std::string::npos);
    const auto pos = rep.find("\"mean_auc\": ");
    REQUIRE(pos != std::string::npos);
    const double mean_auc = std::stod(rep.substr(pos + 12));
    CHECK(mean_auc >= 0.0);
    CHECK(mean_auc <= 1.0);

    SUBCASE("plot-roc renders existing csv files") {
        const fs::path svg = fx.root / "replot.svg";
        auto pr = run_cli("plot-roc " + (fx.out / "roc_round_0.csv").string() + " --output " +
                          svg.string() + " --label round0");
        REQUIRE(pr.exit_code == 0);
        const std::string s = slurp_file(svg);
        CHECK(s.find("<svg") != std::string::npos);
        CHECK(s.find("round0") != std::string::npos);
    }
}

TEST_CASE("cli evaluate: unwritable output dir exits nonzero") {
    Fixture fx;
    // a path under a regular file cannot be created as a directory
    const fs::path blocker = fx.root / "blocker";
    std::ofstream(blocker) << "x";
    const auto cfg = fx.write_config("", "unwritable.cfg");
    auto r = run_cli("evaluate --config " + cfg.string() + " --output-dir " +
                     (blocker / "sub").string());
    CHECK(r.exit_code != 0);
}

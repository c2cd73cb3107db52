#include "ddrid/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ddrid::cli {
namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(val, &pos);
        if (pos != val.size()) throw std::invalid_argument(val);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + val + "'");
    }
}

double parse_real(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        const double v = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument(val);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + val + "'");
    }
}

std::filesystem::path first_existing(const std::filesystem::path& dir,
                                     std::initializer_list<const char*> names) {
    for (const char* n : names) {
        auto p = dir / n;
        if (std::filesystem::exists(p)) return p;
    }
    throw IoError("missing data file " + (dir / *names.begin()).string() + " (or .gz variant)");
}

}  // namespace

nn::DatasetKind RunConfig::dataset_kind() const {
    return dataset == "mnist" ? nn::DatasetKind::mnist : nn::DatasetKind::cifar_like;
}

void RunConfig::validate() const {
    if (dataset != "mnist" && dataset != "cifar10")
        throw ConfigError("dataset: must be 'mnist' or 'cifar10', got '" + dataset + "'");
    if (normal_class < 0 || normal_class > 9)
        throw ConfigError("normal_class: must lie in 0..9, got " + std::to_string(normal_class));
    if (rounds < 1) throw ConfigError("rounds: must be >= 1, got " + std::to_string(rounds));
    if (test_subset_size.has_value() && *test_subset_size < 1)
        throw ConfigError("test_subset_size: must be >= 1 when set");
    train.validate();  // names the offending field
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "dataset") cfg.dataset = val;
        else if (key == "data_dir") cfg.data_dir = val;
        else if (key == "normal_class") cfg.normal_class = static_cast<int>(parse_int(key, val));
        else if (key == "rounds") cfg.rounds = static_cast<int>(parse_int(key, val));
        else if (key == "kind_policy") {
            auto p = eval::parse_kind_policy(val);
            if (!p) throw ConfigError("kind_policy: unknown value '" + val + "'");
            cfg.kind_policy = *p;
        } else if (key == "output_dir") cfg.output_dir = val;
        else if (key == "test_subset_size") cfg.test_subset_size = parse_int(key, val);
        else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, val));
        else if (key == "weight_decay") cfg.train.weight_decay = parse_real(key, val);
        else if (key == "pretrain_epochs")
            cfg.train.pretrain_epochs = static_cast<int>(parse_int(key, val));
        else if (key == "finetune_epochs")
            cfg.train.finetune_epochs = static_cast<int>(parse_int(key, val));
        else if (key == "lr_initial") cfg.train.lr_initial = parse_real(key, val);
        else if (key == "lr_after") cfg.train.lr_after = parse_real(key, val);
        else if (key == "lr_switch_epoch")
            cfg.train.lr_switch_epoch = static_cast<int>(parse_int(key, val));
        else if (key == "sigma") cfg.train.sigma = parse_real(key, val);
        else if (key == "seed") cfg.train.seed = static_cast<uint64_t>(parse_int(key, val));
        else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_real(key, val);
        else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_real(key, val);
        else if (key == "adam_eps") cfg.train.adam_eps = parse_real(key, val);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    if (cfg.data_dir.empty()) cfg.data_dir = default_data_dir();
    return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config_text(ss.str());
}

std::string run_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    char buf[512];
    os << "dataset = " << cfg.dataset << "\n";
    os << "data_dir = " << cfg.data_dir.string() << "\n";
    os << "normal_class = " << cfg.normal_class << "\n";
    os << "rounds = " << cfg.rounds << "\n";
    os << "kind_policy = " << eval::kind_policy_name(cfg.kind_policy) << "\n";
    os << "output_dir = " << cfg.output_dir.string() << "\n";
    if (cfg.test_subset_size) os << "test_subset_size = " << *cfg.test_subset_size << "\n";
    std::snprintf(buf, sizeof(buf),
                  "batch_size = %d\nweight_decay = %.17g\npretrain_epochs = %d\n"
                  "finetune_epochs = %d\nlr_initial = %.17g\nlr_after = %.17g\n"
                  "lr_switch_epoch = %d\nsigma = %.17g\nseed = %llu\n"
                  "adam_beta1 = %.17g\nadam_beta2 = %.17g\nadam_eps = %.17g\n",
                  cfg.train.batch_size, cfg.train.weight_decay, cfg.train.pretrain_epochs,
                  cfg.train.finetune_epochs, cfg.train.lr_initial, cfg.train.lr_after,
                  cfg.train.lr_switch_epoch, cfg.train.sigma,
                  static_cast<unsigned long long>(cfg.train.seed), cfg.train.adam_beta1,
                  cfg.train.adam_beta2, cfg.train.adam_eps);
    os << buf;
    return os.str();
}

MnistPaths resolve_mnist(const std::filesystem::path& dir) {
    MnistPaths p;
    p.train_images = first_existing(dir, {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz",
                                          "train-images.idx3-ubyte"});
    p.train_labels = first_existing(dir, {"train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz",
                                          "train-labels.idx1-ubyte"});
    p.test_images = first_existing(dir, {"t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz",
                                         "t10k-images.idx3-ubyte"});
    p.test_labels = first_existing(dir, {"t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz",
                                         "t10k-labels.idx1-ubyte"});
    return p;
}

CifarPaths resolve_cifar10(const std::filesystem::path& dir) {
    const std::filesystem::path sub = dir / "cifar-10-batches-bin";
    const std::filesystem::path base = std::filesystem::exists(sub) ? sub : dir;
    CifarPaths p;
    for (int i = 1; i <= 5; ++i) {
        const std::string name = "data_batch_" + std::to_string(i) + ".bin";
        p.train_batches.push_back(first_existing(base, {name.c_str()}));
    }
    p.test_batch = first_existing(base, {"test_batch.bin"});
    return p;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("DDRID_DATA_DIR")) return env;
    return "data";
}

}  // namespace ddrid::cli

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddrid/eval.hpp"
#include "ddrid/nn.hpp"
#include "ddrid/train.hpp"

namespace ddrid::cli {

// Flat key=value run configuration. Parsing is typed and rejects unknown
// keys; '#' starts a comment.
struct RunConfig {
    std::string dataset = "mnist";  // mnist | cifar10
    std::filesystem::path data_dir;
    int normal_class = 0;
    int rounds = 1;
    eval::KindPolicy kind_policy = eval::KindPolicy::algorithm2;
    std::filesystem::path output_dir = ".";
    std::optional<int64_t> test_subset_size;
    train::TrainConfig train;

    nn::DatasetKind dataset_kind() const;
    void validate() const;  // ConfigError naming the offending field
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::filesystem::path& path);
std::string run_config_text(const RunConfig& cfg);

struct MnistPaths {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};
struct CifarPaths {
    std::vector<std::filesystem::path> train_batches;
    std::filesystem::path test_batch;
};

// Locates the standard file names under data_dir, accepting .gz variants.
// Throws IoError naming the first missing file.
MnistPaths resolve_mnist(const std::filesystem::path& data_dir);
CifarPaths resolve_cifar10(const std::filesystem::path& data_dir);

// DDRID_DATA_DIR fallback for configs without data_dir.
std::filesystem::path default_data_dir();

}  // namespace ddrid::cli

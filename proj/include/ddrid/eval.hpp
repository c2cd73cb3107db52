#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddrid/data.hpp"
#include "ddrid/score.hpp"
#include "ddrid/train.hpp"

namespace ddrid::eval {

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr); (0,0) .. (1,1)
    std::vector<double> thresholds;                 // parallel; +inf for (0,0)
};

// Higher score = more anomalous = positive. Tied scores collapse to one
// threshold step. Throws DegenerateInputError when only one class is present.
RocCurve roc_curve(const std::vector<double>& scores,
                   const std::vector<uint8_t>& anomaly_labels);

// Trapezoidal area; equals the Mann-Whitney statistic with half-credit ties.
double auc(const RocCurve& curve);

enum class KindPolicy : uint8_t { algorithm2, latent, reconstruction, sum };
const char* kind_policy_name(KindPolicy p);
std::optional<KindPolicy> parse_kind_policy(const std::string& s);

struct EvalReport {
    int normal_class = 0;
    int rounds = 0;
    KindPolicy policy = KindPolicy::algorithm2;
    std::vector<double> per_round_auc;
    std::vector<score::ScoreKind> score_kind_chosen;
    double mean_auc = 0.0;
};

struct RoundArtifacts {
    RocCurve roc;
    std::vector<double> scores;
    data::ImageDataset test;  // the (possibly subsampled) test set scored
};

// One-vs-rest protocol: per round, reseed with base seed + round index,
// split, train end to end, pick the score per policy, score the test set,
// compute the AUC.
EvalReport run_experiment(const std::vector<data::RawImage>& all_train,
                          const std::vector<data::RawImage>& all_test, nn::DatasetKind kind,
                          int normal_class, int rounds, const train::TrainConfig& cfg,
                          KindPolicy policy,
                          std::optional<int64_t> test_subset_size = std::nullopt,
                          std::vector<RoundArtifacts>* artifacts = nullptr);

// Standalone SVG: unit-square axes, one polyline per curve, legend in input
// order.
void emit_roc_plot(const std::vector<RocCurve>& curves, const std::vector<std::string>& labels,
                   const std::filesystem::path& path);

// fpr,tpr,threshold rows.
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);

// Key-value document with nested per-round arrays (JSON).
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace ddrid::eval

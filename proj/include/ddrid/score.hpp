#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddrid/data.hpp"
#include "ddrid/train.hpp"

namespace ddrid::score {

enum class ScoreKind : uint8_t { latent = 0, reconstruction = 1, sum = 2 };

const char* score_kind_name(ScoreKind k);
std::optional<ScoreKind> parse_score_kind(const std::string& s);

struct AnomalyScorer {
    const train::TrainedModel* model = nullptr;
    ScoreKind kind = ScoreKind::latent;
    std::optional<double> threshold;
};

// ||E_C(X) - Z_C||^2, inference mode.
double latent_score(const train::TrainedModel& model, const data::Image& image);

// ||R_C(X) - D_C(Z_C)||^2 over all pixels, inference mode. Requires the
// cached decoded template.
double reconstruction_score(const train::TrainedModel& model, const data::Image& image);

// Validation-driven selection (the "algorithm2" policy): the kind with the
// lower mean anomaly score over the all-normal validation subset; ties go to
// reconstruction.
ScoreKind select_score_kind(const train::TrainedModel& model,
                            const data::ImageDataset& validation);

enum class Label : uint8_t { normal, anomalous };

// normal iff AS(X) < threshold.
Label classify(const AnomalyScorer& scorer, const data::Image& image);

// Scores in dataset order; kind sum gives AS_l + AS_r per image.
std::vector<double> batch_score(const AnomalyScorer& scorer, const data::ImageDataset& dataset);

// Threshold calibrated so that roughly target_fpr of the (normal) calibration
// scores fall at or above it (quantile rule).
double calibrate_threshold(const std::vector<double>& normal_scores, double target_fpr);

// Score export: image_index,class_id,normal_flag,score_kind,score
void write_scores_csv(const std::filesystem::path& path, const data::ImageDataset& dataset,
                      ScoreKind kind, const std::vector<double>& scores);

}  // namespace ddrid::score

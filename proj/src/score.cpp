#include "ddrid/score.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ddrid/kernels.hpp"
#include "ddrid/nn.hpp"

namespace ddrid::score {
namespace {

// Per-image scores over a dataset, batched through the networks.
std::vector<double> scores_of_kind(const train::TrainedModel& model,
                                   const data::ImageDataset& ds, ScoreKind kind,
                                   int batch_size = 256) {
    if (ds.images.empty()) throw ArgumentError("batch_score on empty dataset");
    if (kind != ScoreKind::latent && !model.centroid.has_template())
        throw StateError("reconstruction scoring requires the cached decoded template");
    const auto& K = kern::active();
    const int64_t n = static_cast<int64_t>(ds.size());
    const int64_t d = model.centroid.z_c.numel();
    std::vector<double> out(static_cast<size_t>(n), 0.0);

    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t take = std::min<int64_t>(batch_size, n - at);
        std::vector<int64_t> idx(static_cast<size_t>(take));
        std::iota(idx.begin(), idx.end(), at);
        const Tensor x = nn::pack_batch(ds, idx);
        const Tensor z = nn::forward_inference(model.specs.encoder, model.encoder_c, x);
        if (kind == ScoreKind::latent || kind == ScoreKind::sum) {
            for (int64_t i = 0; i < take; ++i)
                out[at + i] += K.sqdist(z.data() + i * d, model.centroid.z_c.data(), d);
        }
        if (kind == ScoreKind::reconstruction || kind == ScoreKind::sum) {
            const Tensor rc = nn::forward_inference(model.specs.decoder, model.decoder_c, z);
            const int64_t px = model.centroid.decoded_template.numel();
            for (int64_t i = 0; i < take; ++i)
                out[at + i] +=
                    K.sqdist(rc.data() + i * px, model.centroid.decoded_template.data(), px);
        }
    }
    return out;
}

}  // namespace

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::latent: return "latent";
        case ScoreKind::reconstruction: return "reconstruction";
        case ScoreKind::sum: return "sum";
    }
    return "?";
}

std::optional<ScoreKind> parse_score_kind(const std::string& s) {
    if (s == "latent") return ScoreKind::latent;
    if (s == "reconstruction") return ScoreKind::reconstruction;
    if (s == "sum") return ScoreKind::sum;
    return std::nullopt;
}

double latent_score(const train::TrainedModel& model, const data::Image& image) {
    const Tensor x = nn::pack_image(image);
    const Tensor z = nn::forward_inference(model.specs.encoder, model.encoder_c, x);
    if (z.numel() != model.centroid.z_c.numel())
        throw ShapeError("latent dimension mismatch against centroid");
    return kern::active().sqdist(z.data(), model.centroid.z_c.data(), z.numel());
}

double reconstruction_score(const train::TrainedModel& model, const data::Image& image) {
    if (!model.centroid.has_template())
        throw StateError("decoded template missing; finetuning caches it");
    const Tensor x = nn::pack_image(image);
    const Tensor z = nn::forward_inference(model.specs.encoder, model.encoder_c, x);
    const Tensor rc = nn::forward_inference(model.specs.decoder, model.decoder_c, z);
    const Tensor& tmpl = model.centroid.decoded_template;
    if (rc.numel() != tmpl.numel()) throw ShapeError("reconstruction/template size mismatch");
    return kern::active().sqdist(rc.data(), tmpl.data(), rc.numel());
}

ScoreKind select_score_kind(const train::TrainedModel& model,
                            const data::ImageDataset& validation) {
    if (validation.images.empty())
        throw ArgumentError("score selection needs a nonempty validation subset");
    const auto l = scores_of_kind(model, validation, ScoreKind::latent);
    const auto r = scores_of_kind(model, validation, ScoreKind::reconstruction);
    const double ml = std::accumulate(l.begin(), l.end(), 0.0) / double(l.size());
    const double mr = std::accumulate(r.begin(), r.end(), 0.0) / double(r.size());
    return ml < mr ? ScoreKind::latent : ScoreKind::reconstruction;
}

Label classify(const AnomalyScorer& scorer, const data::Image& image) {
    if (!scorer.threshold.has_value()) throw StateError("classify requires a threshold");
    if (scorer.model == nullptr) throw StateError("scorer is not bound to a model");
    double as = 0.0;
    switch (scorer.kind) {
        case ScoreKind::latent: as = latent_score(*scorer.model, image); break;
        case ScoreKind::reconstruction: as = reconstruction_score(*scorer.model, image); break;
        case ScoreKind::sum:
            as = latent_score(*scorer.model, image) + reconstruction_score(*scorer.model, image);
            break;
    }
    return as < *scorer.threshold ? Label::normal : Label::anomalous;
}

std::vector<double> batch_score(const AnomalyScorer& scorer, const data::ImageDataset& dataset) {
    if (scorer.model == nullptr) throw StateError("scorer is not bound to a model");
    return scores_of_kind(*scorer.model, dataset, scorer.kind);
}

double calibrate_threshold(const std::vector<double>& normal_scores, double target_fpr) {
    if (normal_scores.empty()) throw ArgumentError("threshold calibration needs scores");
    if (!(target_fpr > 0.0 && target_fpr < 1.0))
        throw ArgumentError("target_fpr must lie in (0,1)");
    std::vector<double> s = normal_scores;
    std::sort(s.begin(), s.end());
    const auto q = static_cast<size_t>(std::ceil((1.0 - target_fpr) * double(s.size())));
    return s[std::min(q, s.size() - 1)];
}

void write_scores_csv(const std::filesystem::path& path, const data::ImageDataset& dataset,
                      ScoreKind kind, const std::vector<double>& scores) {
    if (scores.size() != dataset.size())
        throw ArgumentError("score list does not match dataset size");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_index,class_id,normal_flag,score_kind,score\n";
    char buf[160];
    for (size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%s,%.9g\n", i, dataset.class_ids[i],
                      int(dataset.normal_flags[i]), score_kind_name(kind), scores[i]);
        out << buf;
    }
    if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace ddrid::score

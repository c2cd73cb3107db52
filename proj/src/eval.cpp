#include "ddrid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ddrid/rng.hpp"

namespace ddrid::eval {
namespace {

data::ImageDataset subsample(const data::ImageDataset& ds, int64_t size, uint64_t seed) {
    const int64_t n = static_cast<int64_t>(ds.size());
    if (size >= n) return ds;
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(size));
    std::sort(idx.begin(), idx.end());  // keep source order
    data::ImageDataset out;
    for (int64_t i : idx) {
        out.images.push_back(ds.images[static_cast<size_t>(i)]);
        out.class_ids.push_back(ds.class_ids[static_cast<size_t>(i)]);
        out.normal_flags.push_back(ds.normal_flags[static_cast<size_t>(i)]);
    }
    return out;
}

}  // namespace

RocCurve roc_curve(const std::vector<double>& scores,
                   const std::vector<uint8_t>& anomaly_labels) {
    if (scores.size() != anomaly_labels.size())
        throw ArgumentError("scores and labels must have equal length");
    if (scores.empty()) throw ArgumentError("empty score list");
    int64_t pos = 0, neg = 0;
    for (uint8_t l : anomaly_labels) (l ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw DegenerateInputError("roc_curve needs both classes present");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];  // descending: most anomalous first
    });

    RocCurve c;
    c.points.emplace_back(0.0, 0.0);
    c.thresholds.push_back(std::numeric_limits<double>::infinity());
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // consume the whole tie group at this threshold
        while (i < order.size() && scores[order[i]] == s) {
            (anomaly_labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        c.points.emplace_back(double(fp) / double(neg), double(tp) / double(pos));
        c.thresholds.push_back(s);
    }
    return c;
}

double auc(const RocCurve& curve) {
    if (curve.points.size() < 2) throw ArgumentError("degenerate roc curve");
    double area = 0.0;
    for (size_t i = 1; i < curve.points.size(); ++i) {
        const auto& [x0, y0] = curve.points[i - 1];
        const auto& [x1, y1] = curve.points[i];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    return area;
}

const char* kind_policy_name(KindPolicy p) {
    switch (p) {
        case KindPolicy::algorithm2: return "algorithm2";
        case KindPolicy::latent: return "latent";
        case KindPolicy::reconstruction: return "reconstruction";
        case KindPolicy::sum: return "sum";
    }
    return "?";
}

std::optional<KindPolicy> parse_kind_policy(const std::string& s) {
    if (s == "algorithm2") return KindPolicy::algorithm2;
    if (s == "latent") return KindPolicy::latent;
    if (s == "reconstruction") return KindPolicy::reconstruction;
    if (s == "sum") return KindPolicy::sum;
    return std::nullopt;
}

EvalReport run_experiment(const std::vector<data::RawImage>& all_train,
                          const std::vector<data::RawImage>& all_test, nn::DatasetKind kind,
                          int normal_class, int rounds, const train::TrainConfig& cfg,
                          KindPolicy policy, std::optional<int64_t> test_subset_size,
                          std::vector<RoundArtifacts>* artifacts) {
    if (rounds < 1) throw ArgumentError("rounds must be >= 1");
    EvalReport report;
    report.normal_class = normal_class;
    report.rounds = rounds;
    report.policy = policy;

    for (int round = 0; round < rounds; ++round) {
        try {
            const uint64_t round_seed = cfg.seed + static_cast<uint64_t>(round);
            data::SplitConfig split_cfg{0.9, round_seed};
            auto splits = data::one_vs_rest_split(all_train, all_test, normal_class, split_cfg);

            train::TrainConfig round_cfg = cfg;
            round_cfg.seed = round_seed;
            auto model = train::train_model(splits.train, kind, round_cfg);

            score::ScoreKind kind_used = score::ScoreKind::latent;
            switch (policy) {
                case KindPolicy::algorithm2:
                    kind_used = score::select_score_kind(model, splits.val);
                    break;
                case KindPolicy::latent: kind_used = score::ScoreKind::latent; break;
                case KindPolicy::reconstruction:
                    kind_used = score::ScoreKind::reconstruction;
                    break;
                case KindPolicy::sum: kind_used = score::ScoreKind::sum; break;
            }
            model.selected_score_kind = static_cast<int>(kind_used);

            data::ImageDataset test = splits.test;
            if (test_subset_size.has_value()) {
                uint64_t sub_seed = round_seed ^ 0xA5A5A5A5DEADBEEFULL;
                test = subsample(test, *test_subset_size, splitmix64(sub_seed));
            }

            score::AnomalyScorer scorer{&model, kind_used, std::nullopt};
            const auto scores = score::batch_score(scorer, test);
            std::vector<uint8_t> anomaly(test.size());
            for (size_t i = 0; i < test.size(); ++i) anomaly[i] = test.normal_flags[i] ? 0 : 1;
            auto roc = roc_curve(scores, anomaly);
            const double a = auc(roc);

            report.per_round_auc.push_back(a);
            report.score_kind_chosen.push_back(kind_used);
            if (artifacts) artifacts->push_back({std::move(roc), scores, std::move(test)});
        } catch (const Error& e) {
            throw Error(e.category(), "round " + std::to_string(round) + ": " + e.what());
        }
    }
    report.mean_auc = std::accumulate(report.per_round_auc.begin(), report.per_round_auc.end(),
                                      0.0) /
                      double(report.per_round_auc.size());
    return report;
}

void emit_roc_plot(const std::vector<RocCurve>& curves, const std::vector<std::string>& labels,
                   const std::filesystem::path& path) {
    if (curves.empty()) throw ArgumentError("emit_roc_plot needs at least one curve");
    if (labels.size() != curves.size())
        throw ArgumentError("one label per curve required");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());

    constexpr int W = 640, H = 640, M = 70;
    const double span = double(W - 2 * M);
    auto px = [&](double x) { return M + x * span; };
    auto py = [&](double y) { return H - M - y * span; };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << span << "\" height=\"" << span
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    // gridlines and tick labels at 0, 0.25, .., 1
    for (int i = 0; i <= 4; ++i) {
        const double t = i * 0.25;
        out << "<line x1=\"" << px(t) << "\" y1=\"" << py(0) << "\" x2=\"" << px(t) << "\" y2=\""
            << py(1) << "\" stroke=\"#dddddd\"/>\n";
        out << "<line x1=\"" << px(0) << "\" y1=\"" << py(t) << "\" x2=\"" << px(1) << "\" y2=\""
            << py(t) << "\" stroke=\"#dddddd\"/>\n";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", t);
        out << "<text x=\"" << px(t) << "\" y=\"" << H - M + 22
            << "\" font-size=\"12\" text-anchor=\"middle\">" << buf << "</text>\n";
        out << "<text x=\"" << M - 10 << "\" y=\"" << py(t) + 4
            << "\" font-size=\"12\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 18
        << "\" font-size=\"14\" text-anchor=\"middle\">false positive rate</text>\n";
    out << "<text x=\"20\" y=\"" << H / 2
        << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << H / 2
        << ")\">true positive rate</text>\n";

    for (size_t ci = 0; ci < curves.size(); ++ci) {
        const char* color = palette[ci % (sizeof(palette) / sizeof(palette[0]))];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        char buf[64];
        for (const auto& [x, y] : curves[ci].points) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
            out << buf;
        }
        out << "\"/>\n";
        // legend entry
        const double ly = M + 20 + 18 * double(ci);
        out << "<line x1=\"" << M + 14 << "\" y1=\"" << ly << "\" x2=\"" << M + 44 << "\" y2=\""
            << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << M + 50 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
            << labels[ci] << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failure on " + path.string());
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "fpr,tpr,threshold\n";
    char buf[128];
    for (size_t i = 0; i < curve.points.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", curve.points[i].first,
                      curve.points[i].second, curve.thresholds[i]);
        out << buf;
    }
    if (!out) throw IoError("write failure on " + path.string());
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["normal_class"] = report.normal_class;
    j["rounds"] = report.rounds;
    j["kind_policy"] = kind_policy_name(report.policy);
    j["mean_auc"] = report.mean_auc;
    j["per_round"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < report.per_round_auc.size(); ++i) {
        nlohmann::ordered_json r;
        r["round"] = i;
        r["auc"] = report.per_round_auc[i];
        r["score_kind"] = score::score_kind_name(report.score_kind_chosen[i]);
        j["per_round"].push_back(r);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace ddrid::eval

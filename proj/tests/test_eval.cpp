#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddrid/eval.hpp"
#include "ddrid/rng.hpp"

using namespace ddrid;
using namespace ddrid::eval;

namespace {

// O(n^2) Mann-Whitney oracle: fraction of (anomalous, normal) pairs ordered
// correctly, ties counting one half.
double mann_whitney(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

bool has_point(const RocCurve& c, double x, double y) {
    for (const auto& p : c.points)
        if (std::abs(p.first - x) < 1e-12 && std::abs(p.second - y) < 1e-12) return true;
    return false;
}

}  // namespace

TEST_CASE("roc_curve on the canonical examples") {
    SUBCASE("perfect separation passes through (0,0), (0,1), (1,1) with AUC 1") {
        auto c = roc_curve({1, 2, 3, 4}, {0, 0, 1, 1});
        CHECK(has_point(c, 0, 0));
        CHECK(has_point(c, 0, 1));
        CHECK(has_point(c, 1, 1));
        CHECK(auc(c) == doctest::Approx(1.0));
        CHECK(c.points.front() == std::pair<double, double>(0.0, 0.0));
        CHECK(c.points.back() == std::pair<double, double>(1.0, 1.0));
    }
    SUBCASE("perfect inversion hugs the bottom with AUC 0") {
        auto c = roc_curve({4, 3, 2, 1}, {0, 0, 1, 1});
        CHECK(has_point(c, 1, 0));
        CHECK(auc(c) == doctest::Approx(0.0));
    }
    SUBCASE("tied scores group at one threshold; AUC 0.5 vs pairwise oracle") {
        std::vector<double> s{1, 1, 2, 2};
        std::vector<uint8_t> l{0, 1, 0, 1};
        auto c = roc_curve(s, l);
        CHECK(auc(c) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(auc(c) == doctest::Approx(mann_whitney(s, l)).epsilon(1e-12));
        // tie grouping: 3 points beyond the origin (two unique scores)
        CHECK(c.points.size() == 3);
    }
    SUBCASE("coordinates are non-decreasing, endpoints pinned") {
        Rng rng(5);
        std::vector<double> s;
        std::vector<uint8_t> l;
        for (int i = 0; i < 101; ++i) {
            s.push_back(rng.next_below(20) * 0.25);
            l.push_back(rng.next_below(2));
        }
        auto c = roc_curve(s, l);
        CHECK(c.points.front() == std::pair<double, double>(0.0, 0.0));
        CHECK(c.points.back() == std::pair<double, double>(1.0, 1.0));
        for (size_t i = 1; i < c.points.size(); ++i) {
            CHECK(c.points[i].first >= c.points[i - 1].first);
            CHECK(c.points[i].second >= c.points[i - 1].second);
            CHECK(c.thresholds[i] < c.thresholds[i - 1]);
        }
    }
    SUBCASE("single-class labels are a degenerate-input error") {
        CHECK_THROWS_AS(roc_curve({1, 2}, {1, 1}), DegenerateInputError);
        CHECK_THROWS_AS(roc_curve({1, 2}, {0, 0}), DegenerateInputError);
    }
    SUBCASE("length mismatch is an argument error") {
        CHECK_THROWS_AS(roc_curve({1, 2, 3}, {0, 1}), ArgumentError);
    }
}

TEST_CASE("auc equals the pairwise oracle on random tied instances") {
    Rng rng(99);
    for (int rep = 0; rep < 40; ++rep) {
        const int n = 5 + static_cast<int>(rng.next_below(496));
        std::vector<double> s(n);
        std::vector<uint8_t> l(n);
        bool both = false;
        do {
            for (int i = 0; i < n; ++i) {
                // coarse grid forces plenty of ties
                s[i] = double(rng.next_below(25)) * 0.5;
                l[i] = static_cast<uint8_t>(rng.next_below(2));
            }
            int pos = 0;
            for (auto v : l) pos += v;
            both = pos > 0 && pos < n;
        } while (!both);
        const double a = auc(roc_curve(s, l));
        const double o = mann_whitney(s, l);
        CHECK(std::abs(a - o) <= 1e-12);
    }
}

TEST_CASE("auc invariance under strictly increasing transforms") {
    Rng rng(123);
    const int n = 200;
    std::vector<double> s(n);
    std::vector<uint8_t> l(n);
    for (int i = 0; i < n; ++i) {
        s[i] = rng.next_gaussian();
        l[i] = static_cast<uint8_t>(rng.next_below(2));
    }
    l[0] = 0;
    l[1] = 1;
    const double base = auc(roc_curve(s, l));

    std::vector<double> exp_s(n), affine_s(n);
    for (int i = 0; i < n; ++i) {
        exp_s[i] = std::exp(s[i]);
        affine_s[i] = 2.0 * s[i] + 7.0;
    }
    CHECK(std::abs(auc(roc_curve(exp_s, l)) - base) <= 1e-12);
    CHECK(std::abs(auc(roc_curve(affine_s, l)) - base) <= 1e-12);
}

TEST_CASE("label flip symmetry: negating scores and labels preserves AUC") {
    Rng rng(321);
    const int n = 150;
    std::vector<double> s(n), neg(n);
    std::vector<uint8_t> l(n), flip(n);
    for (int i = 0; i < n; ++i) {
        s[i] = double(rng.next_below(40)) * 0.25;
        l[i] = static_cast<uint8_t>(rng.next_below(2));
        neg[i] = -s[i];
        flip[i] = l[i] ? 0 : 1;
    }
    l[0] = 0;
    l[1] = 1;
    flip[0] = 1;
    flip[1] = 0;
    CHECK(std::abs(auc(roc_curve(s, l)) - auc(roc_curve(neg, flip))) <= 1e-12);
}

TEST_CASE("run_experiment: reproducibility, report arithmetic, round annotation") {
    // two tiny classes of 28x28 raws
    std::vector<data::RawImage> all_train, all_test;
    Rng rng(9);
    auto make_raw = [&](int cls, bool bright) {
        data::RawImage r;
        r.channels = 1;
        r.height = r.width = 28;
        r.class_id = cls;
        r.pixels.assign(28 * 28, 0);
        for (auto& p : r.pixels)
            p = static_cast<uint8_t>(bright ? 150 + rng.next_below(100) : rng.next_below(100));
        return r;
    };
    for (int i = 0; i < 14; ++i) all_train.push_back(make_raw(0, true));
    for (int i = 0; i < 6; ++i) all_train.push_back(make_raw(1, false));
    for (int i = 0; i < 8; ++i) all_test.push_back(make_raw(i % 2, i % 2 == 0));

    train::TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.pretrain_epochs = 1;
    cfg.finetune_epochs = 1;
    cfg.seed = 1000;

    auto a = run_experiment(all_train, all_test, nn::DatasetKind::mnist, 0, 2, cfg,
                            KindPolicy::algorithm2);
    auto b = run_experiment(all_train, all_test, nn::DatasetKind::mnist, 0, 2, cfg,
                            KindPolicy::algorithm2);
    REQUIRE(a.per_round_auc.size() == 2);
    CHECK(a.per_round_auc == b.per_round_auc);  // bitwise reproducible
    CHECK(a.score_kind_chosen == b.score_kind_chosen);
    for (double v : a.per_round_auc) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.mean_auc ==
          doctest::Approx((a.per_round_auc[0] + a.per_round_auc[1]) / 2.0).epsilon(1e-15));

    SUBCASE("training failures carry the round index") {
        CHECK_THROWS_WITH_AS(run_experiment(all_train, all_test, nn::DatasetKind::mnist, 7, 1,
                                            cfg, KindPolicy::latent),
                             doctest::Contains("round 0"), Error);
    }
    SUBCASE("test subset flag caps the scored set") {
        std::vector<RoundArtifacts> arts;
        auto r = run_experiment(all_train, all_test, nn::DatasetKind::mnist, 0, 1, cfg,
                                KindPolicy::latent, 5, &arts);
        REQUIRE(arts.size() == 1);
        CHECK(arts[0].test.size() == 5);
        CHECK(arts[0].scores.size() == 5);
        CHECK(r.per_round_auc.size() == 1);
    }
    SUBCASE("fixed-kind policies are recorded per round") {
        auto r = run_experiment(all_train, all_test, nn::DatasetKind::mnist, 0, 1, cfg,
                                KindPolicy::sum);
        REQUIRE(r.score_kind_chosen.size() == 1);
        CHECK(r.score_kind_chosen[0] == score::ScoreKind::sum);
    }
}

TEST_CASE("emit_roc_plot writes an SVG with the curve geometry and legend order") {
    auto path = std::filesystem::temp_directory_path() / "ddrid_roc_test.svg";
    auto c1 = roc_curve({1, 2, 3, 4}, {0, 0, 1, 1});  // perfect
    auto c2 = roc_curve({4, 3, 2, 1}, {0, 0, 1, 1});  // inverted

    SUBCASE("one perfect-separation curve") {
        emit_roc_plot({c1}, {"perfect"}, path);
        std::ifstream in(path);
        std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("<polyline") != std::string::npos);
        // corner coordinates for (0,0), (0,1), (1,1) with margin 70, span 500
        CHECK(svg.find("70.00,570.00") != std::string::npos);
        CHECK(svg.find("70.00,70.00") != std::string::npos);
        CHECK(svg.find("570.00,70.00") != std::string::npos);
        CHECK(svg.find("perfect") != std::string::npos);
    }
    SUBCASE("two curves give two legend entries in input order") {
        emit_roc_plot({c1, c2}, {"first", "second"}, path);
        std::ifstream in(path);
        std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto p1 = svg.find(">first<");
        const auto p2 = svg.find(">second<");
        REQUIRE(p1 != std::string::npos);
        REQUIRE(p2 != std::string::npos);
        CHECK(p1 < p2);
    }
    SUBCASE("empty curve list is an argument error") {
        CHECK_THROWS_AS(emit_roc_plot({}, {}, path), ArgumentError);
    }
    SUBCASE("unwritable path is an io error") {
        CHECK_THROWS_AS(emit_roc_plot({c1}, {"x"}, "/nonexistent_dir_ddrid/plot.svg"), IoError);
    }
}

TEST_CASE("report serialization carries per-round arrays") {
    EvalReport r;
    r.normal_class = 3;
    r.rounds = 2;
    r.policy = KindPolicy::algorithm2;
    r.per_round_auc = {0.75, 0.5};
    r.score_kind_chosen = {score::ScoreKind::latent, score::ScoreKind::reconstruction};
    r.mean_auc = 0.625;
    auto path = std::filesystem::temp_directory_path() / "ddrid_report_test.json";
    write_report(r, path);
    std::ifstream in(path);
    std::string j((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(j.find("\"normal_class\": 3") != std::string::npos);
    CHECK(j.find("\"mean_auc\": 0.625") != std::string::npos);
    CHECK(j.find("\"latent\"") != std::string::npos);
    CHECK(j.find("\"reconstruction\"") != std::string::npos);
    CHECK(j.find("\"kind_policy\": \"algorithm2\"") != std::string::npos);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ssrad/error.hpp"
#include "ssrad/evaluation.hpp"
#include "ssrad/rng.hpp"

using namespace ssrad;

namespace {

std::vector<int> make_labels(const std::vector<int>& counts) {
    std::vector<int> labels;
    for (size_t c = 0; c < counts.size(); ++c)
        labels.insert(labels.end(), static_cast<size_t>(counts[c]), static_cast<int>(c));
    return labels;
}

std::vector<FeatureRecord> blob_records(const std::vector<int>& counts, double sep,
                                        uint64_t seed, int dim = 4) {
    Rng rng(seed);
    std::vector<FeatureRecord> records;
    int id = 0;
    for (size_t c = 0; c < counts.size(); ++c)
        for (int i = 0; i < counts[c]; ++i) {
            FeatureRecord r;
            r.id = "r" + std::to_string(id++);
            r.label = static_cast<int>(c);
            for (int j = 0; j < dim; ++j) {
                const double center = (j % counts.size() == c) ? sep : 0.0;
                r.f_trad.push_back(center + rng.normal(0.0, 1.0));
                r.trad_names.push_back("fo_f" + std::to_string(j));
            }
            records.push_back(std::move(r));
        }
    return records;
}

}  // namespace

TEST_CASE("stratified folds: 8 A + 2 B with 2 folds gives 4 A + 1 B per test fold") {
    std::vector<int> labels = make_labels({8, 2});
    FoldPlan plan = stratified_kfold(labels, 2, 1);
    for (int f = 0; f < 2; ++f) {
        int a = 0, b = 0;
        for (int i : plan.test[static_cast<size_t>(f)]) (labels[static_cast<size_t>(i)] == 0 ? a : b)++;
        CHECK(a == 4);
        CHECK(b == 1);
    }
}

TEST_CASE("stratified folds partition the index set") {
    std::vector<int> labels = make_labels({13, 7, 25});
    FoldPlan plan = stratified_kfold(labels, 5, 9);
    std::set<int> seen;
    for (const auto& fold : plan.test)
        for (int i : fold) CHECK(seen.insert(i).second);
    CHECK(seen.size() == labels.size());
    for (int f = 0; f < 5; ++f) {
        std::set<int> train(plan.train[static_cast<size_t>(f)].begin(),
                            plan.train[static_cast<size_t>(f)].end());
        for (int i : plan.test[static_cast<size_t>(f)]) CHECK(!train.count(i));
        // inner validation drawn only from the fold's training set
        for (int i : plan.inner_val[static_cast<size_t>(f)]) CHECK(train.count(i));
        for (int i : plan.inner_train[static_cast<size_t>(f)]) CHECK(train.count(i));
        CHECK(plan.inner_val[static_cast<size_t>(f)].size() +
                  plan.inner_train[static_cast<size_t>(f)].size() ==
              train.size());
    }
}

TEST_CASE("stratified folds: the documented 250:76 split") {
    std::vector<int> labels = make_labels({250, 76});
    FoldPlan plan = stratified_kfold(labels, 5, 3);
    std::vector<int> minor_counts;
    for (int f = 0; f < 5; ++f) {
        int major = 0, minor = 0;
        for (int i : plan.test[static_cast<size_t>(f)])
            (labels[static_cast<size_t>(i)] == 0 ? major : minor)++;
        CHECK(major == 50);
        CHECK((minor == 15 || minor == 16));
        minor_counts.push_back(minor);
    }
    CHECK(std::count(minor_counts.begin(), minor_counts.end(), 16) == 1);
}

TEST_CASE("stratification holds for the 2:1:6 staging ratio") {
    std::vector<int> labels = make_labels({20, 10, 60});
    FoldPlan plan = stratified_kfold(labels, 5, 4);
    for (int f = 0; f < 5; ++f) {
        std::vector<int> counts(3, 0);
        for (int i : plan.test[static_cast<size_t>(f)]) counts[static_cast<size_t>(labels[static_cast<size_t>(i)])]++;
        CHECK(counts[0] == 4);
        CHECK(counts[1] == 2);
        CHECK(counts[2] == 12);
    }
}

TEST_CASE("a class smaller than the fold count is rejected by name") {
    std::vector<int> labels = make_labels({10, 3});
    try {
        stratified_kfold(labels, 5, 0);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
}

TEST_CASE("linear SVM separates separable blobs perfectly") {
    Rng rng(60);
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        X.push_back({rng.normal(-3.0, 0.5), rng.normal(0.0, 0.5)});
        y.push_back(-1);
        X.push_back({rng.normal(3.0, 0.5), rng.normal(0.0, 0.5)});
        y.push_back(1);
    }
    LinearModel m = train_linear_svm(X, y, 1.0);
    for (size_t i = 0; i < X.size(); ++i) CHECK((m.score(X[i]) > 0 ? 1 : -1) == y[i]);
}

TEST_CASE("SVM objective never exceeds the zero model's objective") {
    Rng rng(61);
    for (double C : {0.01, 1.0, 100.0}) {
        std::vector<std::vector<double>> X;
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) {
            X.push_back({rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)});
            y.push_back(i % 2 == 0 ? 1 : -1);  // noisy labels
        }
        LinearModel m = train_linear_svm(X, y, C);
        LinearModel zero;
        zero.w.assign(3, 0.0);
        CHECK(svm_objective(X, y, C, m) <= svm_objective(X, y, C, zero) + 1e-9);
        CHECK(svm_objective(X, y, C, zero) == doctest::Approx(C * 30.0));
    }
}

TEST_CASE("SVM matches an exhaustive direction sweep on a planted-margin set") {
    // 20 points, margin band around the 30-degree direction
    Rng rng(62);
    const double theta = 30.0 * M_PI / 180.0;
    const double wx = std::cos(theta), wy = std::sin(theta);
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) {
        const double t = rng.uniform(-4.0, 4.0);
        const double off = rng.uniform(1.0, 3.0);  // planted margin >= 1
        X.push_back({-wy * t + wx * off, wx * t + wy * off});
        y.push_back(1);
        const double t2 = rng.uniform(-4.0, 4.0);
        const double off2 = rng.uniform(1.0, 3.0);
        X.push_back({-wy * t2 - wx * off2, wx * t2 - wy * off2});
        y.push_back(-1);
    }

    // oracle: 1-degree direction grid, bias from midpoints of the sorted
    // projections, maximizing the worst margin
    std::vector<int> oracle_pred(X.size());
    {
        double best_margin = -1e300;
        double bw0 = 0, bw1 = 0, bb = 0;
        for (int deg = 0; deg < 180; ++deg) {
            const double a = deg * M_PI / 180.0;
            const double ux = std::cos(a), uy = std::sin(a);
            std::vector<double> proj;
            for (const auto& x : X) proj.push_back(ux * x[0] + uy * x[1]);
            std::vector<double> cand;
            std::vector<double> sorted = proj;
            std::sort(sorted.begin(), sorted.end());
            for (size_t i = 0; i + 1 < sorted.size(); ++i)
                cand.push_back(-(sorted[i] + sorted[i + 1]) / 2.0);
            for (double b : cand) {
                for (int sign : {1, -1}) {
                    double worst = 1e300;
                    for (size_t i = 0; i < X.size(); ++i)
                        worst = std::min(worst, y[i] * sign * (proj[i] + b));
                    if (worst > best_margin) {
                        best_margin = worst;
                        bw0 = sign * ux;
                        bw1 = sign * uy;
                        bb = sign * b;
                    }
                }
            }
        }
        CHECK(best_margin > 0.0);  // the planted set is separable
        for (size_t i = 0; i < X.size(); ++i)
            oracle_pred[i] = bw0 * X[i][0] + bw1 * X[i][1] + bb > 0 ? 1 : -1;
    }

    LinearModel m = train_linear_svm(X, y, 10.0);
    for (size_t i = 0; i < X.size(); ++i)
        CHECK((m.score(X[i]) > 0 ? 1 : -1) == oracle_pred[i]);
}

TEST_CASE("SVM rejects a single-class training set") {
    std::vector<std::vector<double>> X{{1.0}, {2.0}};
    std::vector<int> y{1, 1};
    CHECK_THROWS_AS(train_linear_svm(X, y, 1.0), ConfigError);
}

TEST_CASE("metrics: perfect predictions and the hand-counted confusion case") {
    std::vector<int> classes{0, 1};
    {
        std::vector<int> truth{1, 1, 0, 0}, pred{1, 1, 0, 0};
        std::vector<std::vector<double>> scores{{0, 1}, {0, 2}, {3, 0}, {1, 0}};
        FoldMetrics m = compute_metrics(scores, pred, truth, classes, 0);
        CHECK(m.sensitivity == doctest::Approx(1.0));
        CHECK(m.specificity == doctest::Approx(1.0));
    }
    {
        // truth {1,1,0,0}, predictions {1,0,0,0}: sensitivity (recall of the
        // positive class 1) 0.5, specificity (recall of class 0) 1.0
        std::vector<int> truth{1, 1, 0, 0}, pred{1, 0, 0, 0};
        std::vector<std::vector<double>> scores{{0, 1}, {1, 0}, {2, 0}, {2, 0}};
        FoldMetrics m = compute_metrics(scores, pred, truth, classes, 0);
        CHECK(m.sensitivity == doctest::Approx(0.5));
        CHECK(m.specificity == doctest::Approx(1.0));
        CHECK(m.confusion[1][1] == 1);
        CHECK(m.confusion[1][0] == 1);
        CHECK(m.confusion[0][0] == 2);
        // confusion row sums equal the per-class test counts
        CHECK(m.confusion[0][0] + m.confusion[0][1] == 2);
        CHECK(m.confusion[1][0] + m.confusion[1][1] == 2);
    }
}

TEST_CASE("AUC: perfectly ordered scores give 1, reversed give 0, ties average") {
    std::vector<int> truth{0, 0, 1, 1};
    CHECK(auc_rank({0.1, 0.2, 0.8, 0.9}, truth) == doctest::Approx(1.0));
    CHECK(auc_rank({0.9, 0.8, 0.2, 0.1}, truth) == doctest::Approx(0.0));
    CHECK(auc_rank({0.5, 0.5, 0.5, 0.5}, truth) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc_rank({0.1, 0.2}, std::vector<int>{1, 1}), ConfigError);
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
    Rng rng(63);
    std::vector<double> scores;
    std::vector<int> truth;
    for (int i = 0; i < 30; ++i) {
        scores.push_back(rng.uniform(-3, 3));
        truth.push_back(rng.uniform01() < 0.4 ? 1 : 0);
    }
    truth[0] = 1;
    truth[1] = 0;
    const double base = auc_rank(scores, truth);
    std::vector<double> exp_scores, cube_scores;
    for (double s : scores) {
        exp_scores.push_back(std::exp(s));
        cube_scores.push_back(s * s * s + 2.0 * s);
    }
    CHECK(auc_rank(exp_scores, truth) == doctest::Approx(base));
    CHECK(auc_rank(cube_scores, truth) == doctest::Approx(base));
}

TEST_CASE("pearson: duplicates, negation, and the 3-point hand value") {
    std::vector<std::vector<double>> rows{{1.0, 1.0, -1.0}, {2.0, 2.0, -2.0}, {3.0, 3.0, -3.0}};
    PearsonResult r = pearson_matrix(rows);
    REQUIRE(r.kept_columns.size() == 3);
    CHECK(r.r[0][1] == 1.0);   // duplicated column
    CHECK(r.r[0][2] == -1.0);  // negated column
    CHECK(r.r[0][0] == 1.0);

    std::vector<std::vector<double>> xy{{1.0, 1.0}, {2.0, 2.0}, {3.0, 4.0}};
    PearsonResult r2 = pearson_matrix(xy);
    CHECK(r2.r[0][1] == doctest::Approx(std::sqrt(27.0 / 28.0)).epsilon(1e-9));
    CHECK(r2.r[0][1] == doctest::Approx(0.98198).epsilon(1e-4));
}

TEST_CASE("pearson is invariant to positive affine rescaling of a column") {
    Rng rng(64);
    std::vector<std::vector<double>> rows(12, std::vector<double>(3));
    for (auto& row : rows)
        for (double& x : row) x = rng.uniform(-2, 2);
    PearsonResult base = pearson_matrix(rows);
    for (auto& row : rows) row[1] = 3.7 * row[1] + 11.0;
    PearsonResult scaled = pearson_matrix(rows);
    CHECK(scaled.r[0][1] == doctest::Approx(base.r[0][1]).epsilon(1e-12));
    CHECK(scaled.r[1][2] == doctest::Approx(base.r[1][2]).epsilon(1e-12));
}

TEST_CASE("pearson drops constant columns and rejects tiny inputs") {
    std::vector<std::vector<double>> rows{{1.0, 5.0}, {2.0, 5.0}, {3.0, 5.0}};
    PearsonResult r = pearson_matrix(rows);
    CHECK(r.dropped_columns == std::vector<int>{1});
    CHECK(r.kept_columns == std::vector<int>{0});
    CHECK_THROWS_AS(pearson_matrix({{1.0, 2.0}}), ConfigError);
}

TEST_CASE("pearson histogram covers [-1, 1] and sums to the pair count") {
    Rng rng(65);
    std::vector<std::vector<double>> rows(20, std::vector<double>(5));
    for (auto& row : rows)
        for (double& x : row) x = rng.uniform(-1, 1);
    PearsonResult r = pearson_matrix(rows);
    int total = 0;
    for (int c : r.hist_counts) total += c;
    CHECK(total == 10);  // 5 choose 2
    CHECK(r.hist_edges.front() == doctest::Approx(-1.0));
    CHECK(r.hist_edges.back() == doctest::Approx(1.0));
}

TEST_CASE("protocol: separable records evaluate cleanly, concat equals trad without ssl") {
    std::vector<FeatureRecord> records = blob_records({30, 10}, 6.0, 70);
    ProtocolConfig cfg;
    cfg.folds = 5;
    cfg.seed = 1;
    cfg.feature_set = FeatureSet::concat;  // f_ssl is empty, so concat == trad
    MetricsReport concat = run_protocol(records, cfg);
    cfg.feature_set = FeatureSet::trad;
    MetricsReport trad = run_protocol(records, cfg);
    CHECK(concat.mean.overall_accuracy == doctest::Approx(trad.mean.overall_accuracy));
    CHECK(concat.mean.auc == doctest::Approx(trad.mean.auc));
    CHECK(concat.minor_class == 1);
    CHECK(concat.mean.overall_accuracy >= 0.9);  // planted separation
    for (const auto& f : concat.folds) {
        CHECK(f.auc >= 0.0);
        CHECK(f.auc <= 1.0);
        CHECK(f.minor_class_accuracy >= 0.0);
        CHECK(f.minor_class_accuracy <= 1.0);
    }
}

TEST_CASE("protocol: a 50% label budget halves per-class training sizes") {
    std::vector<FeatureRecord> records = blob_records({40, 20}, 5.0, 71);
    ProtocolConfig cfg;
    cfg.folds = 5;
    cfg.seed = 2;
    cfg.feature_set = FeatureSet::trad;
    MetricsReport full = run_protocol(records, cfg);
    cfg.label_budget = 0.5;
    MetricsReport half = run_protocol(records, cfg);
    for (size_t f = 0; f < full.folds.size(); ++f) {
        const int full_n = full.folds[f].train_size;
        const int half_n = half.folds[f].train_size;
        // stratified halving, within one sample per class
        CHECK(std::abs(half_n * 2 - full_n) <= 2);
    }
}

TEST_CASE("protocol leakage guard: perturbing test rows leaves fold-0 weights bit-identical") {
    std::vector<FeatureRecord> records = blob_records({24, 12}, 4.0, 72);
    ProtocolConfig cfg;
    cfg.folds = 3;
    cfg.seed = 5;
    cfg.feature_set = FeatureSet::trad;

    std::vector<int> labels;
    for (const auto& r : records) labels.push_back(r.label);
    FoldPlan plan = stratified_kfold(labels, cfg.folds, cfg.seed);

    std::vector<OvrModel> models_a;
    run_protocol(records, cfg, &models_a);

    // perturb only fold 0's test rows
    std::vector<FeatureRecord> perturbed = records;
    for (int i : plan.test[0])
        for (double& v : perturbed[static_cast<size_t>(i)].f_trad) v += 123.456;
    std::vector<OvrModel> models_b;
    run_protocol(perturbed, cfg, &models_b);

    REQUIRE(models_a.size() == models_b.size());
    for (size_t c = 0; c < models_a[0].models.size(); ++c) {
        CHECK(models_a[0].models[c].w == models_b[0].models[c].w);
        CHECK(models_a[0].models[c].b == models_b[0].models[c].b);
    }
}

TEST_CASE("protocol on three imbalanced classes reports the minor class") {
    std::vector<FeatureRecord> records = blob_records({20, 10, 60}, 6.0, 73, 6);
    ProtocolConfig cfg;
    cfg.folds = 5;
    cfg.seed = 6;
    cfg.feature_set = FeatureSet::trad;
    MetricsReport rep = run_protocol(records, cfg);
    CHECK(rep.minor_class == 1);
    CHECK(rep.classes == std::vector<int>{0, 1, 2});
    CHECK(rep.mean.overall_accuracy > 0.7);
    CHECK(rep.mean.auc > 0.7);
    // confusion row sums equal per-class test counts over all folds
    CHECK(rep.mean.confusion[0][0] + rep.mean.confusion[0][1] + rep.mean.confusion[0][2] == 20);
    CHECK(rep.mean.confusion[1][0] + rep.mean.confusion[1][1] + rep.mean.confusion[1][2] == 10);
    CHECK(rep.mean.confusion[2][0] + rep.mean.confusion[2][1] + rep.mean.confusion[2][2] == 60);
}

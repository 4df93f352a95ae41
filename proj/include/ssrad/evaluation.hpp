#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssrad/radiomics.hpp"

namespace ssrad {

// Linear-probe evaluation: stratified k-fold cross validation with an inner
// hyperparameter split, a deterministic linear SVM, classification metrics,
// rank-statistic AUC, and Pearson feature-covariance analysis.

struct FoldPlan {
    int folds = 5;
    uint64_t seed = 0;
    std::vector<std::vector<int>> train, test;
    std::vector<std::vector<int>> inner_train, inner_val;  // 20% of each fold's train
};

// Deterministic stratified partition; per-class proportions in every test
// fold match the global proportions within one sample.
FoldPlan stratified_kfold(const std::vector<int>& labels, int folds, uint64_t seed);

// Stratified holdout of roughly `frac` of `indices` (at least one per class).
// Returns {kept, held_out}.
std::pair<std::vector<int>, std::vector<int>> stratified_holdout(
    const std::vector<int>& indices, const std::vector<int>& labels, double frac, uint64_t seed);

// ---------------------------------------------------------------------------
// linear SVM
// ---------------------------------------------------------------------------

struct LinearModel {
    std::vector<double> w;
    double b = 0.0;

    double score(const std::vector<double>& x) const {
        double s = b;
        for (size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
        return s;
    }
};

// Primal hinge-loss SVM, objective 0.5*|w|^2 + C * sum_i max(0, 1 - y_i f(x_i)),
// minimized by deterministic projected subgradient descent with a fixed
// iteration budget and tail averaging. y in {-1, +1}.
LinearModel train_linear_svm(const std::vector<std::vector<double>>& X,
                             const std::vector<int>& y, double C, int iters = 2000);

double svm_objective(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                     double C, const LinearModel& m);

// One-vs-rest multiclass wrapper; class order is ascending label.
struct OvrModel {
    std::vector<int> classes;
    std::vector<LinearModel> models;

    std::vector<double> scores(const std::vector<double>& x) const;
    int predict(const std::vector<double>& x) const;  // argmax, ties to lowest class
};
OvrModel train_ovr_svm(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                       double C, int iters = 2000);

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct FoldMetrics {
    double sensitivity = 0.0;   // recall of the positive (major) class
    double specificity = 0.0;   // recall of the negative class
    double overall_accuracy = 0.0;
    double minor_class_accuracy = 0.0;  // recall of the designated minority class
    double auc = 0.0;           // binary, or macro one-vs-rest
    double chosen_C = 0.0;
    int train_size = 0;         // after any label budgeting
    std::vector<std::vector<int>> confusion;  // [truth][prediction]
};

struct MetricsReport {
    std::vector<int> classes;
    int minor_class = -1;
    std::vector<FoldMetrics> folds;
    FoldMetrics mean;  // averaged over folds (confusion summed)
};

// AUC by the rank statistic (Mann-Whitney with average ranks for ties).
double auc_rank(const std::vector<double>& scores, const std::vector<int>& truth01);

FoldMetrics compute_metrics(const std::vector<std::vector<double>>& scores,
                            const std::vector<int>& predictions, const std::vector<int>& truth,
                            const std::vector<int>& classes, int minor_class);

// ---------------------------------------------------------------------------
// Pearson covariance analysis
// ---------------------------------------------------------------------------

struct PearsonResult {
    std::vector<int> kept_columns;        // constant columns are dropped
    std::vector<int> dropped_columns;
    std::vector<std::vector<double>> r;   // symmetric, unit diagonal
    std::vector<double> hist_edges;       // histogram of off-diagonal r values
    std::vector<int> hist_counts;
    std::vector<double> hist_density;
};

PearsonResult pearson_matrix(const std::vector<std::vector<double>>& features, int hist_bins = 40);

// ---------------------------------------------------------------------------
// the full protocol
// ---------------------------------------------------------------------------

enum class FeatureSet { trad, ssl, concat };

struct ProtocolConfig {
    FeatureSet feature_set = FeatureSet::concat;
    int folds = 5;
    double label_budget = 1.0;  // fraction of training labels kept per class
    int minor_class = -1;       // -1: least frequent label
    uint64_t seed = 0;
    std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    int svm_iters = 2000;
};

// Stratified CV with inner-split C selection (balanced accuracy on the 20%
// validation split), z-scoring from training-fold statistics only, optional
// stratified label budgeting, and per-fold + mean metrics. `fold_models`,
// when given, receives the refit model of every fold (the leakage guard
// compares them bit for bit).
MetricsReport run_protocol(const std::vector<FeatureRecord>& records, const ProtocolConfig& cfg,
                           std::vector<OvrModel>* fold_models = nullptr);

std::vector<std::vector<double>> feature_matrix(const std::vector<FeatureRecord>& records,
                                                FeatureSet set);

}  // namespace ssrad

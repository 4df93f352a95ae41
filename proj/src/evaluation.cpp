#include "ssrad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "ssrad/error.hpp"
#include "ssrad/rng.hpp"

namespace ssrad {

// ---------------------------------------------------------------------------
// fold planning
// ---------------------------------------------------------------------------

FoldPlan stratified_kfold(const std::vector<int>& labels, int folds, uint64_t seed) {
    if (folds < 2) throw ConfigError("stratified k-fold needs at least 2 folds");
    std::map<int, std::vector<int>> per_class;
    for (size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(static_cast<int>(i));
    for (const auto& [label, idx] : per_class)
        if (static_cast<int>(idx.size()) < folds)
            throw ConfigError("class " + std::to_string(label) + " has only " +
                              std::to_string(idx.size()) + " samples, fewer than " +
                              std::to_string(folds) + " folds");

    FoldPlan plan;
    plan.folds = folds;
    plan.seed = seed;
    plan.test.assign(static_cast<size_t>(folds), {});
    plan.train.assign(static_cast<size_t>(folds), {});
    plan.inner_train.assign(static_cast<size_t>(folds), {});
    plan.inner_val.assign(static_cast<size_t>(folds), {});

    for (const auto& [label, idx_const] : per_class) {
        std::vector<int> idx = idx_const;
        Rng rng = derive_rng(seed, "fold-shuffle", static_cast<uint64_t>(label));
        rng.shuffle(idx);
        for (size_t pos = 0; pos < idx.size(); ++pos)
            plan.test[pos % static_cast<size_t>(folds)].push_back(idx[pos]);
    }
    for (int f = 0; f < folds; ++f) {
        auto& test = plan.test[static_cast<size_t>(f)];
        std::sort(test.begin(), test.end());
        std::set<int> in_test(test.begin(), test.end());
        for (size_t i = 0; i < labels.size(); ++i)
            if (!in_test.count(static_cast<int>(i)))
                plan.train[static_cast<size_t>(f)].push_back(static_cast<int>(i));
        auto [kept, held] = stratified_holdout(plan.train[static_cast<size_t>(f)], labels, 0.2,
                                               derive_seed(seed, "inner", static_cast<uint64_t>(f)));
        plan.inner_train[static_cast<size_t>(f)] = std::move(kept);
        plan.inner_val[static_cast<size_t>(f)] = std::move(held);
    }
    return plan;
}

std::pair<std::vector<int>, std::vector<int>> stratified_holdout(
    const std::vector<int>& indices, const std::vector<int>& labels, double frac, uint64_t seed) {
    std::map<int, std::vector<int>> per_class;
    for (int i : indices) per_class[labels[static_cast<size_t>(i)]].push_back(i);
    std::vector<int> kept, held;
    for (auto& [label, idx] : per_class) {
        Rng rng = derive_rng(seed, "holdout", static_cast<uint64_t>(label));
        rng.shuffle(idx);
        size_t take = 0;
        if (idx.size() >= 2)
            take = std::max<size_t>(1, static_cast<size_t>(std::llround(frac * static_cast<double>(idx.size()))));
        take = std::min(take, idx.size() - 1);  // never strip a class bare
        for (size_t i = 0; i < idx.size(); ++i)
            (i < take ? held : kept).push_back(idx[i]);
    }
    std::sort(kept.begin(), kept.end());
    std::sort(held.begin(), held.end());
    return {kept, held};
}

// ---------------------------------------------------------------------------
// linear SVM (deterministic projected subgradient with tail averaging)
// ---------------------------------------------------------------------------

double svm_objective(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                     double C, const LinearModel& m) {
    double obj = 0.0;
    for (double wi : m.w) obj += 0.5 * wi * wi;
    for (size_t i = 0; i < X.size(); ++i)
        obj += C * std::max(0.0, 1.0 - y[i] * m.score(X[i]));
    return obj;
}

LinearModel train_linear_svm(const std::vector<std::vector<double>>& X,
                             const std::vector<int>& y, double C, int iters) {
    if (X.empty() || X.size() != y.size()) throw ConfigError("svm: bad training arrays");
    bool has_pos = false, has_neg = false;
    for (int yi : y) {
        if (yi == 1) has_pos = true;
        else if (yi == -1) has_neg = true;
        else throw ConfigError("svm: labels must be +/-1");
    }
    if (!has_pos || !has_neg) throw ConfigError("svm: single-class training set");
    if (C <= 0.0) throw ConfigError("svm: C must be positive");

    const size_t n = X.size();
    const size_t d = X.front().size();
    // bias handled as an appended constant feature; the tiny extra
    // regularization on b does not move the decision boundary materially
    const size_t da = d + 1;
    const double lambda = 1.0 / (C * static_cast<double>(n));
    const double radius = 1.0 / std::sqrt(lambda);

    std::vector<double> w(da, 0.0), avg(da, 0.0);
    std::vector<double> sub(da);
    const int tail_from = iters / 2;
    int tail_count = 0;

    for (int t = 1; t <= iters; ++t) {
        std::fill(sub.begin(), sub.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            double s = w[d];  // bias feature
            const std::vector<double>& xi = X[i];
            for (size_t j = 0; j < d; ++j) s += w[j] * xi[j];
            if (y[i] * s < 1.0) {
                for (size_t j = 0; j < d; ++j) sub[j] += y[i] * xi[j];
                sub[d] += y[i];
            }
        }
        const double eta = 1.0 / (lambda * t);
        const double keep = 1.0 - eta * lambda;  // = 1 - 1/t
        for (size_t j = 0; j < da; ++j)
            w[j] = keep * w[j] + (eta / static_cast<double>(n)) * sub[j];
        double norm2 = 0.0;
        for (double wj : w) norm2 += wj * wj;
        if (norm2 > radius * radius) {
            const double scale = radius / std::sqrt(norm2);
            for (double& wj : w) wj *= scale;
        }
        if (t > tail_from) {
            for (size_t j = 0; j < da; ++j) avg[j] += w[j];
            ++tail_count;
        }
    }
    for (double& aj : avg) aj /= static_cast<double>(tail_count);

    LinearModel m;
    m.w.assign(avg.begin(), avg.begin() + static_cast<long>(d));
    m.b = avg[d];
    // the zero model bounds the objective at C*n; never return anything worse
    LinearModel zero;
    zero.w.assign(d, 0.0);
    if (svm_objective(X, y, C, m) > svm_objective(X, y, C, zero)) return zero;
    return m;
}

std::vector<double> OvrModel::scores(const std::vector<double>& x) const {
    std::vector<double> s;
    s.reserve(models.size());
    for (const auto& m : models) s.push_back(m.score(x));
    return s;
}

int OvrModel::predict(const std::vector<double>& x) const {
    const std::vector<double> s = scores(x);
    size_t best = 0;
    for (size_t i = 1; i < s.size(); ++i)
        if (s[i] > s[best]) best = i;  // ties keep the lowest class index
    return classes[best];
}

OvrModel train_ovr_svm(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                       double C, int iters) {
    std::set<int> uniq(y.begin(), y.end());
    if (uniq.size() < 2) throw ConfigError("svm: single-class training set");
    OvrModel ovr;
    ovr.classes.assign(uniq.begin(), uniq.end());
    for (int cls : ovr.classes) {
        std::vector<int> yb(y.size());
        for (size_t i = 0; i < y.size(); ++i) yb[i] = y[i] == cls ? 1 : -1;
        ovr.models.push_back(train_linear_svm(X, yb, C, iters));
    }
    return ovr;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

double auc_rank(const std::vector<double>& scores, const std::vector<int>& truth01) {
    if (scores.size() != truth01.size() || scores.empty())
        throw ConfigError("auc: bad input arrays");
    size_t n_pos = 0;
    for (int t : truth01) n_pos += t ? 1 : 0;
    const size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("auc: truth contains a single class");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(scores.size());
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (size_t k = 0; k < scores.size(); ++k)
        if (truth01[k]) rank_sum += rank[k];
    return (rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

FoldMetrics compute_metrics(const std::vector<std::vector<double>>& scores,
                            const std::vector<int>& predictions, const std::vector<int>& truth,
                            const std::vector<int>& classes, int minor_class) {
    if (predictions.size() != truth.size() || scores.size() != truth.size())
        throw ConfigError("metrics: misaligned arrays");
    const size_t nc = classes.size();
    std::map<int, size_t> cls_index;
    for (size_t c = 0; c < nc; ++c) cls_index[classes[c]] = c;
    if (!cls_index.count(minor_class))
        throw ConfigError("metrics: minor class " + std::to_string(minor_class) +
                          " not among the classes");

    FoldMetrics m;
    m.confusion.assign(nc, std::vector<int>(nc, 0));
    size_t correct = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const size_t t = cls_index.at(truth[i]);
        const size_t p = cls_index.at(predictions[i]);
        m.confusion[t][p]++;
        if (t == p) ++correct;
    }
    m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

    auto recall_of = [&m, nc](size_t c) {
        int total = 0;
        for (size_t p = 0; p < nc; ++p) total += m.confusion[c][p];
        return total > 0 ? static_cast<double>(m.confusion[c][c]) / total : 0.0;
    };
    const size_t minor_idx = cls_index.at(minor_class);
    m.minor_class_accuracy = recall_of(minor_idx);
    m.specificity = m.minor_class_accuracy;
    // sensitivity: recall of the non-minor class (binary), or the macro mean
    // recall over non-minor classes
    double sens = 0.0;
    int sens_n = 0;
    for (size_t c = 0; c < nc; ++c)
        if (c != minor_idx) {
            sens += recall_of(c);
            ++sens_n;
        }
    m.sensitivity = sens_n > 0 ? sens / sens_n : 0.0;

    // AUC: binary uses the positive (non-minor) class scores; multiclass is
    // macro one-vs-rest
    if (nc == 2) {
        const size_t pos = minor_idx == 0 ? 1 : 0;
        std::vector<double> s(truth.size());
        std::vector<int> t01(truth.size());
        for (size_t i = 0; i < truth.size(); ++i) {
            s[i] = scores[i][pos];
            t01[i] = cls_index.at(truth[i]) == pos ? 1 : 0;
        }
        m.auc = auc_rank(s, t01);
    } else {
        double acc = 0.0;
        for (size_t c = 0; c < nc; ++c) {
            std::vector<double> s(truth.size());
            std::vector<int> t01(truth.size());
            for (size_t i = 0; i < truth.size(); ++i) {
                s[i] = scores[i][c];
                t01[i] = cls_index.at(truth[i]) == c ? 1 : 0;
            }
            acc += auc_rank(s, t01);
        }
        m.auc = acc / static_cast<double>(nc);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Pearson
// ---------------------------------------------------------------------------

PearsonResult pearson_matrix(const std::vector<std::vector<double>>& features, int hist_bins) {
    if (features.size() < 2) throw ConfigError("pearson: need at least 2 rows");
    const size_t n = features.size();
    const size_t d = features.front().size();
    for (const auto& row : features)
        if (row.size() != d) throw ConfigError("pearson: ragged feature matrix");

    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& row : features)
        for (size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (double& mj : mean) mj /= static_cast<double>(n);
    for (const auto& row : features)
        for (size_t j = 0; j < d; ++j) {
            const double dv = row[j] - mean[j];
            var[j] += dv * dv;
        }

    PearsonResult res;
    for (size_t j = 0; j < d; ++j)
        (var[j] > 0.0 ? res.kept_columns : res.dropped_columns).push_back(static_cast<int>(j));

    const size_t kd = res.kept_columns.size();
    res.r.assign(kd, std::vector<double>(kd, 0.0));
    for (size_t a = 0; a < kd; ++a) {
        res.r[a][a] = 1.0;
        for (size_t b = a + 1; b < kd; ++b) {
            const size_t ja = static_cast<size_t>(res.kept_columns[a]);
            const size_t jb = static_cast<size_t>(res.kept_columns[b]);
            double cov = 0.0;
            for (size_t i = 0; i < n; ++i)
                cov += (features[i][ja] - mean[ja]) * (features[i][jb] - mean[jb]);
            // sqrt of the product keeps duplicated/negated columns exactly +-1
            double r = cov / std::sqrt(var[ja] * var[jb]);
            r = std::clamp(r, -1.0, 1.0);
            res.r[a][b] = res.r[b][a] = r;
        }
    }

    res.hist_edges.resize(static_cast<size_t>(hist_bins) + 1);
    for (int b = 0; b <= hist_bins; ++b)
        res.hist_edges[static_cast<size_t>(b)] = -1.0 + 2.0 * b / hist_bins;
    res.hist_counts.assign(static_cast<size_t>(hist_bins), 0);
    size_t total = 0;
    for (size_t a = 0; a < kd; ++a)
        for (size_t b = a + 1; b < kd; ++b) {
            int bin = static_cast<int>((res.r[a][b] + 1.0) / 2.0 * hist_bins);
            bin = std::clamp(bin, 0, hist_bins - 1);
            res.hist_counts[static_cast<size_t>(bin)]++;
            ++total;
        }
    res.hist_density.assign(static_cast<size_t>(hist_bins), 0.0);
    if (total > 0) {
        const double bw = 2.0 / hist_bins;
        for (int b = 0; b < hist_bins; ++b)
            res.hist_density[static_cast<size_t>(b)] =
                res.hist_counts[static_cast<size_t>(b)] / (static_cast<double>(total) * bw);
    }
    return res;
}

// ---------------------------------------------------------------------------
// protocol
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> feature_matrix(const std::vector<FeatureRecord>& records,
                                                FeatureSet set) {
    std::vector<std::vector<double>> X;
    X.reserve(records.size());
    for (const auto& r : records) {
        switch (set) {
            case FeatureSet::trad: X.push_back(r.f_trad); break;
            case FeatureSet::ssl:
                if (r.f_ssl.empty())
                    throw DataError("record " + r.id + " has no SSL features");
                X.push_back(r.f_ssl);
                break;
            case FeatureSet::concat: X.push_back(r.f_concat()); break;
        }
    }
    return X;
}

namespace {

struct Scaler {
    std::vector<double> mean, std;
};

Scaler fit_scaler(const std::vector<std::vector<double>>& X, const std::vector<int>& idx) {
    const size_t d = X.front().size();
    Scaler s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (int i : idx)
        for (size_t j = 0; j < d; ++j) s.mean[j] += X[static_cast<size_t>(i)][j];
    for (double& m : s.mean) m /= static_cast<double>(idx.size());
    for (int i : idx)
        for (size_t j = 0; j < d; ++j) {
            const double dv = X[static_cast<size_t>(i)][j] - s.mean[j];
            s.std[j] += dv * dv;
        }
    for (double& v : s.std) {
        v = std::sqrt(v / static_cast<double>(idx.size()));
        if (v == 0.0) v = 1.0;  // constant feature contributes 0 after centering
    }
    return s;
}

std::vector<std::vector<double>> apply_scaler(const Scaler& s,
                                              const std::vector<std::vector<double>>& X,
                                              const std::vector<int>& idx) {
    std::vector<std::vector<double>> out;
    out.reserve(idx.size());
    for (int i : idx) {
        std::vector<double> row(X.front().size());
        for (size_t j = 0; j < row.size(); ++j)
            row[j] = (X[static_cast<size_t>(i)][j] - s.mean[j]) / s.std[j];
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<int> gather(const std::vector<int>& labels, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(labels[static_cast<size_t>(i)]);
    return out;
}

double balanced_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::map<int, std::pair<int, int>> per_class;  // correct, total
    for (size_t i = 0; i < truth.size(); ++i) {
        auto& [correct, totalc] = per_class[truth[i]];
        totalc++;
        if (pred[i] == truth[i]) correct++;
    }
    double acc = 0.0;
    for (const auto& [label, ct] : per_class)
        acc += static_cast<double>(ct.first) / ct.second;
    return acc / static_cast<double>(per_class.size());
}

std::vector<int> budget_subsample(const std::vector<int>& train_idx,
                                  const std::vector<int>& labels, double budget, uint64_t seed) {
    std::map<int, std::vector<int>> per_class;
    for (int i : train_idx) per_class[labels[static_cast<size_t>(i)]].push_back(i);
    std::vector<int> out;
    for (auto& [label, idx] : per_class) {
        Rng rng = derive_rng(seed, "budget", static_cast<uint64_t>(label));
        rng.shuffle(idx);
        const size_t keep = std::max<size_t>(
            1, static_cast<size_t>(std::llround(budget * static_cast<double>(idx.size()))));
        for (size_t i = 0; i < std::min(keep, idx.size()); ++i) out.push_back(idx[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

MetricsReport run_protocol(const std::vector<FeatureRecord>& records, const ProtocolConfig& cfg,
                           std::vector<OvrModel>* fold_models) {
    if (records.empty()) throw DataError("run_protocol: no records");
    if (cfg.label_budget <= 0.0 || cfg.label_budget > 1.0)
        throw ConfigError("label budget must be in (0, 1]");
    if (cfg.c_grid.empty()) throw ConfigError("empty C grid");

    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto& r : records) labels.push_back(r.label);
    const std::vector<std::vector<double>> X = feature_matrix(records, cfg.feature_set);

    std::map<int, int> counts;
    for (int l : labels) counts[l]++;
    MetricsReport report;
    for (const auto& [label, cnt] : counts) report.classes.push_back(label);
    report.minor_class = cfg.minor_class;
    if (report.minor_class < 0) {
        int best = counts.begin()->first;
        for (const auto& [label, cnt] : counts)
            if (cnt < counts.at(best)) best = label;
        report.minor_class = best;
    }
    if (!counts.count(report.minor_class))
        throw ConfigError("minor class " + std::to_string(report.minor_class) +
                          " absent from the dataset");

    const FoldPlan plan = stratified_kfold(labels, cfg.folds, cfg.seed);

    for (int f = 0; f < cfg.folds; ++f) {
        std::vector<int> train_idx = plan.train[static_cast<size_t>(f)];
        std::vector<int> inner_train = plan.inner_train[static_cast<size_t>(f)];
        std::vector<int> inner_val = plan.inner_val[static_cast<size_t>(f)];
        if (cfg.label_budget < 1.0) {
            train_idx = budget_subsample(train_idx, labels, cfg.label_budget,
                                         derive_seed(cfg.seed, "fold-budget", static_cast<uint64_t>(f)));
            auto [kept, held] =
                stratified_holdout(train_idx, labels, 0.2,
                                   derive_seed(cfg.seed, "inner", static_cast<uint64_t>(f)));
            inner_train = std::move(kept);
            inner_val = std::move(held);
        }

        // C selection on the inner split by balanced accuracy
        double best_c = cfg.c_grid.front();
        double best_score = -1.0;
        {
            const Scaler sc = fit_scaler(X, inner_train);
            const auto Xtr = apply_scaler(sc, X, inner_train);
            const auto Xva = apply_scaler(sc, X, inner_val);
            const auto ytr = gather(labels, inner_train);
            const auto yva = gather(labels, inner_val);
            for (double C : cfg.c_grid) {
                const OvrModel m = train_ovr_svm(Xtr, ytr, C, cfg.svm_iters);
                std::vector<int> pred;
                pred.reserve(Xva.size());
                for (const auto& x : Xva) pred.push_back(m.predict(x));
                const double score = balanced_accuracy(pred, yva);
                if (score > best_score) {
                    best_score = score;
                    best_c = C;
                }
            }
        }

        const Scaler sc = fit_scaler(X, train_idx);
        const auto Xtr = apply_scaler(sc, X, train_idx);
        const auto ytr = gather(labels, train_idx);
        const OvrModel model = train_ovr_svm(Xtr, ytr, best_c, cfg.svm_iters);

        const auto& test_idx = plan.test[static_cast<size_t>(f)];
        const auto Xte = apply_scaler(sc, X, test_idx);
        const auto yte = gather(labels, test_idx);
        std::vector<int> pred;
        std::vector<std::vector<double>> scores;
        pred.reserve(Xte.size());
        for (const auto& x : Xte) {
            scores.push_back(model.scores(x));
            pred.push_back(model.predict(x));
        }
        FoldMetrics fm = compute_metrics(scores, pred, yte, report.classes, report.minor_class);
        fm.chosen_C = best_c;
        fm.train_size = static_cast<int>(train_idx.size());
        report.folds.push_back(std::move(fm));
        if (fold_models) fold_models->push_back(model);
    }

    // aggregate
    FoldMetrics& mean = report.mean;
    const size_t nc = report.classes.size();
    mean.confusion.assign(nc, std::vector<int>(nc, 0));
    for (const auto& fm : report.folds) {
        mean.sensitivity += fm.sensitivity;
        mean.specificity += fm.specificity;
        mean.overall_accuracy += fm.overall_accuracy;
        mean.minor_class_accuracy += fm.minor_class_accuracy;
        mean.auc += fm.auc;
        for (size_t a = 0; a < nc; ++a)
            for (size_t b = 0; b < nc; ++b) mean.confusion[a][b] += fm.confusion[a][b];
    }
    const double nf = static_cast<double>(report.folds.size());
    mean.sensitivity /= nf;
    mean.specificity /= nf;
    mean.overall_accuracy /= nf;
    mean.minor_class_accuracy /= nf;
    mean.auc /= nf;
    return report;
}

}  // namespace ssrad

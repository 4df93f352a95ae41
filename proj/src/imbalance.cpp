#include "ssrad/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssrad/error.hpp"
#include "ssrad/rng.hpp"

namespace ssrad {

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void validate_points(const std::vector<std::vector<double>>& pts, int k) {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (static_cast<int>(pts.size()) < k)
        throw ConfigError("kmeans: need at least k points, got " + std::to_string(pts.size()) +
                          " for k=" + std::to_string(k));
    const size_t d = pts.front().size();
    for (const auto& p : pts) {
        if (p.size() != d) throw ConfigError("kmeans: inconsistent point dimensions");
        for (double x : p)
            if (!std::isfinite(x)) throw NumericError("kmeans: non-finite point coordinate");
    }
}

// nearest centroid, ties toward the lowest index
int assign_one(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
    int best = 0;
    double bd = dist2(p, centroids[0]);
    for (size_t j = 1; j < centroids.size(); ++j) {
        const double dj = dist2(p, centroids[j]);
        if (dj < bd) {
            bd = dj;
            best = static_cast<int>(j);
        }
    }
    return best;
}

double total_inertia(const std::vector<std::vector<double>>& pts,
                     const std::vector<std::vector<double>>& centroids,
                     const std::vector<int>& assign) {
    double s = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) s += dist2(pts[i], centroids[static_cast<size_t>(assign[i])]);
    return s;
}

}  // namespace

namespace {

// Hartigan-style refinement: move single points between clusters while the
// exact inertia delta improves. Strictly stronger fixpoints than Lloyd's
// (every accepted move lowers inertia, and a fixpoint is Voronoi-consistent).
// Returns true if anything moved.
bool hartigan_sweeps(const std::vector<std::vector<double>>& points, int k,
                     std::vector<int>& assign, std::vector<std::vector<double>>& centroids,
                     std::vector<int>& counts) {
    const size_t d = points.front().size();
    bool any = false;
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool moved = false;
        for (size_t i = 0; i < points.size(); ++i) {
            const int a = assign[i];
            if (counts[static_cast<size_t>(a)] <= 1) continue;
            const double na = counts[static_cast<size_t>(a)];
            const double cost_a =
                na / (na - 1.0) * dist2(points[i], centroids[static_cast<size_t>(a)]);
            int best_b = -1;
            double best_delta = -1e-12;
            for (int b = 0; b < k; ++b) {
                if (b == a) continue;
                const double nb = counts[static_cast<size_t>(b)];
                const double delta =
                    nb / (nb + 1.0) * dist2(points[i], centroids[static_cast<size_t>(b)]) -
                    cost_a;
                if (delta < best_delta) {
                    best_delta = delta;
                    best_b = b;
                }
            }
            if (best_b >= 0) {
                const double na_new = na - 1.0;
                const double nb_new = counts[static_cast<size_t>(best_b)] + 1.0;
                for (size_t c = 0; c < d; ++c) {
                    centroids[static_cast<size_t>(a)][c] =
                        (centroids[static_cast<size_t>(a)][c] * na - points[i][c]) / na_new;
                    centroids[static_cast<size_t>(best_b)][c] =
                        (centroids[static_cast<size_t>(best_b)][c] * (nb_new - 1.0) +
                         points[i][c]) /
                        nb_new;
                }
                counts[static_cast<size_t>(a)]--;
                counts[static_cast<size_t>(best_b)]++;
                assign[i] = best_b;
                moved = any = true;
            }
        }
        if (!moved) break;
    }
    return any;
}

}  // namespace

namespace {

ClusterModel lloyd_hartigan(const std::vector<std::vector<double>>& points, int k,
                            std::vector<std::vector<double>> centroids);

// best 2-way interval split along the leading principal direction; a strong
// deterministic candidate for k = 2 restarts
std::vector<std::vector<double>> principal_split_seeds(
    const std::vector<std::vector<double>>& points) {
    const size_t n = points.size(), d = points.front().size();
    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (size_t c = 0; c < d; ++c) mean[c] += p[c] / static_cast<double>(n);
    // power iteration on the covariance from a fixed start
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int it = 0; it < 50; ++it) {
        std::vector<double> w(d, 0.0);
        for (const auto& p : points) {
            double proj = 0.0;
            for (size_t c = 0; c < d; ++c) proj += (p[c] - mean[c]) * v[c];
            for (size_t c = 0; c < d; ++c) w[c] += proj * (p[c] - mean[c]);
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-30) break;
        for (size_t c = 0; c < d; ++c) v[c] = w[c] / norm;
    }
    std::vector<std::pair<double, size_t>> order;
    for (size_t i = 0; i < n; ++i) {
        double proj = 0.0;
        for (size_t c = 0; c < d; ++c) proj += (points[i][c] - mean[c]) * v[c];
        order.emplace_back(proj, i);
    }
    std::stable_sort(order.begin(), order.end());
    // best split of the sorted projections by exact 1-D 2-means cost
    std::vector<double> pref(n + 1, 0.0), pref2(n + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        pref[i + 1] = pref[i] + order[i].first;
        pref2[i + 1] = pref2[i] + order[i].first * order[i].first;
    }
    auto seg_cost = [&](size_t lo, size_t hi) {  // [lo, hi)
        const double cnt = static_cast<double>(hi - lo);
        const double s = pref[hi] - pref[lo];
        return (pref2[hi] - pref2[lo]) - s * s / cnt;
    };
    size_t best_cut = 1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (size_t cut = 1; cut < n; ++cut) {
        const double cost = seg_cost(0, cut) + seg_cost(cut, n);
        if (cost < best_cost) {
            best_cost = cost;
            best_cut = cut;
        }
    }
    std::vector<std::vector<double>> seeds(2, std::vector<double>(d, 0.0));
    for (size_t i = 0; i < n; ++i) {
        auto& c = seeds[i < best_cut ? 0 : 1];
        for (size_t j = 0; j < d; ++j)
            c[j] += points[order[i].second][j] /
                    static_cast<double>(i < best_cut ? best_cut : n - best_cut);
    }
    return seeds;
}

}  // namespace

ClusterModel kmeans(const std::vector<std::vector<double>>& points, int k, uint64_t seed) {
    validate_points(points, k);
    const int n = static_cast<int>(points.size());
    Rng rng = derive_rng(seed, "kmeans++");

    // greedy k-means++ seeding: draw a few distance-weighted candidates per
    // step and keep the one that lowers the potential the most
    std::vector<std::vector<double>> centroids;
    centroids.reserve(static_cast<size_t>(k));
    centroids.push_back(points[static_cast<size_t>(rng.uniform_int(0, n - 1))]);
    std::vector<double> d2(points.size());
    const int candidates = 2 + static_cast<int>(std::log2(std::max(2, k)));
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (size_t i = 0; i < points.size(); ++i) {
            double best = dist2(points[i], centroids[0]);
            for (size_t j = 1; j < centroids.size(); ++j)
                best = std::min(best, dist2(points[i], centroids[j]));
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double best_potential = std::numeric_limits<double>::infinity();
            for (int c = 0; c < candidates; ++c) {
                const double target = rng.uniform01() * total;
                double acc = 0.0;
                size_t cand = points.size() - 1;
                for (size_t i = 0; i < points.size(); ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        cand = i;
                        break;
                    }
                }
                double potential = 0.0;
                for (size_t i = 0; i < points.size(); ++i)
                    potential += std::min(d2[i], dist2(points[i], points[cand]));
                if (potential < best_potential) {
                    best_potential = potential;
                    pick = cand;
                }
            }
        } else {
            pick = static_cast<size_t>(rng.uniform_int(0, n - 1));  // all points coincide
        }
        centroids.push_back(points[pick]);
    }
    ClusterModel model = lloyd_hartigan(points, k, std::move(centroids));
    if (k == 2) {
        // the best interval split along the leading principal direction is a
        // cheap deterministic second candidate that covers most of the
        // two-cluster basins k-means++ seeding misses
        ClusterModel split = lloyd_hartigan(points, 2, principal_split_seeds(points));
        if (split.inertia < model.inertia) return split;
    }
    return model;
}

namespace {

ClusterModel lloyd_hartigan(const std::vector<std::vector<double>>& points, int k,
                            std::vector<std::vector<double>> centroids) {
    const size_t d = points.front().size();
    ClusterModel model;
    model.k = k;
    model.assignments.assign(points.size(), -1);

    auto recompute_means = [&](std::vector<int>& counts) {
        std::vector<std::vector<double>> sums(static_cast<size_t>(k),
                                              std::vector<double>(d, 0.0));
        counts.assign(static_cast<size_t>(k), 0);
        for (size_t i = 0; i < points.size(); ++i) {
            const auto a = static_cast<size_t>(model.assignments[i]);
            counts[a]++;
            for (size_t c = 0; c < d; ++c) sums[a][c] += points[i][c];
        }
        for (int j = 0; j < k; ++j)
            if (counts[static_cast<size_t>(j)] > 0)
                for (size_t c = 0; c < d; ++c)
                    centroids[static_cast<size_t>(j)][c] =
                        sums[static_cast<size_t>(j)][c] / counts[static_cast<size_t>(j)];
    };
    auto push_inertia = [&]() {
        const double inertia = total_inertia(points, centroids, model.assignments);
        if (!model.inertia_by_iter.empty() && inertia > model.inertia_by_iter.back() + 1e-9)
            throw NumericError("kmeans: inertia increased across an iteration");
        model.inertia_by_iter.push_back(inertia);
    };

    // alternate Lloyd passes with single-point refinement sweeps until a
    // joint fixpoint; both phases are monotone in the objective
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int round = 0; round < 100; ++round) {
        bool round_changed = false;
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            for (size_t i = 0; i < points.size(); ++i) {
                const int a = assign_one(points[i], centroids);
                if (a != model.assignments[i]) {
                    model.assignments[i] = a;
                    changed = true;
                }
            }

            // recompute means; repair empty clusters by reseeding at the
            // point farthest from its own centroid
            recompute_means(counts);
            for (int j = 0; j < k; ++j) {
                if (counts[static_cast<size_t>(j)] == 0) {
                    size_t far = 0;
                    double best = -1.0;
                    for (size_t i = 0; i < points.size(); ++i) {
                        const double di = dist2(
                            points[i], centroids[static_cast<size_t>(model.assignments[i])]);
                        if (di > best) {
                            best = di;
                            far = i;
                        }
                    }
                    centroids[static_cast<size_t>(j)] = points[far];
                    model.assignments[far] = j;
                    recompute_means(counts);
                    changed = true;
                }
            }

            push_inertia();
            if (!changed) break;
            round_changed = true;
        }

        if (hartigan_sweeps(points, k, model.assignments, centroids, counts)) {
            recompute_means(counts);  // exact means after incremental updates
            push_inertia();
        } else if (!round_changed) {
            break;
        }
    }

    // tight reassignment so every sample sits with its nearest centroid
    for (size_t i = 0; i < points.size(); ++i)
        model.assignments[i] = assign_one(points[i], centroids);
    model.centroids = std::move(centroids);
    model.frequencies.assign(static_cast<size_t>(k), 0);
    for (int a : model.assignments) model.frequencies[static_cast<size_t>(a)]++;
    model.inertia = total_inertia(points, model.centroids, model.assignments);
    return model;
}

}  // namespace

ClusterModel kmeans_restarts(const std::vector<std::vector<double>>& points, int k,
                             uint64_t seed, int restarts) {
    if (restarts < 1) throw ConfigError("kmeans_restarts: need at least one restart");
    ClusterModel best;
    for (int r = 0; r < restarts; ++r) {
        ClusterModel m;
        if (r == 1 && k == 2) {
            validate_points(points, k);
            m = lloyd_hartigan(points, 2, principal_split_seeds(points));
        } else {
            m = kmeans(points, k, derive_seed(seed, "restart", static_cast<uint64_t>(r)));
        }
        if (r == 0 || m.inertia < best.inertia) best = std::move(m);
    }
    return best;
}

std::vector<double> reweight(const ClusterModel& model) {
    const size_t n = model.assignments.size();
    if (n == 0) throw ConfigError("reweight: empty cluster model");
    std::vector<double> w(n);
    double mn = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
        const int f = model.frequencies[static_cast<size_t>(model.assignments[i])];
        w[i] = static_cast<double>(n) / f;
        mn = std::min(mn, w[i]);
    }
    for (double& x : w) x /= mn;  // minimum becomes exactly 1
    return w;
}

std::vector<int> select_batch(const std::vector<std::vector<double>>& points,
                              const ClusterModel& model, int m) {
    const int n = static_cast<int>(points.size());
    if (model.k < 2) throw ConfigError("SE requires >= 2 clusters");
    if (m < 2 || m % 2 != 0)
        throw ConfigError("SE batch size m must be even and >= 2, got " + std::to_string(m));
    if (static_cast<double>(m) >= static_cast<double>(n) / model.k)
        throw ConfigError("SE constraint violated: m = " + std::to_string(m) +
                          " must be smaller than N/k = " + std::to_string(n) + "/" +
                          std::to_string(model.k));

    // farthest centroid pair; ties toward the lowest (i, j)
    int bi = 0, bj = 1;
    double best = -1.0;
    for (int i = 0; i < model.k; ++i)
        for (int j = i + 1; j < model.k; ++j) {
            const double dij = dist2(model.centroids[static_cast<size_t>(i)],
                                     model.centroids[static_cast<size_t>(j)]);
            if (dij > best) {
                best = dij;
                bi = i;
                bj = j;
            }
        }

    auto nearest = [&](const std::vector<double>& center, const std::vector<bool>& taken,
                       int count) {
        std::vector<std::pair<double, int>> order;
        order.reserve(points.size());
        for (int i = 0; i < n; ++i)
            if (!taken[static_cast<size_t>(i)]) order.emplace_back(dist2(points[static_cast<size_t>(i)], center), i);
        std::stable_sort(order.begin(), order.end());  // distance, then lowest index
        std::vector<int> out;
        for (int i = 0; i < count; ++i) out.push_back(order[static_cast<size_t>(i)].second);
        return out;
    };

    std::vector<bool> taken(points.size(), false);
    std::vector<int> sel = nearest(model.centroids[static_cast<size_t>(bi)], taken, m / 2);
    for (int i : sel) taken[static_cast<size_t>(i)] = true;
    std::vector<int> sel2 = nearest(model.centroids[static_cast<size_t>(bj)], taken, m / 2);
    sel.insert(sel.end(), sel2.begin(), sel2.end());
    return sel;
}

// ---------------------------------------------------------------------------
// batch planning
// ---------------------------------------------------------------------------

void PlannerConfig::validate(int dataset_size) const {
    if (batch < 1) throw ConfigError("batch size must be >= 1");
    if (mode == ImbalanceMode::none) return;
    if (k < 1) throw ConfigError("k must be >= 1");
    if (q < 1) throw ConfigError("q must be >= 1");
    if (dataset_size < pool_size())
        throw ConfigError("dataset of " + std::to_string(dataset_size) +
                          " samples is smaller than the candidate pool N = k*q = " +
                          std::to_string(pool_size()));
    if (mode == ImbalanceMode::se) {
        if (k < 2) throw ConfigError("SE requires >= 2 clusters");
        if (m % 2 != 0) throw ConfigError("SE batch size m must be even, got " + std::to_string(m));
        if (static_cast<double>(m) >= static_cast<double>(pool_size()) / k)
            throw ConfigError("SE constraint violated: m = " + std::to_string(m) +
                              " must be smaller than N/k = " + std::to_string(pool_size() / k));
    }
}

BatchPlanner::BatchPlanner(int dataset_size, PlannerConfig cfg) : n_(dataset_size), cfg_(cfg) {
    cfg_.validate(dataset_size);
}

std::vector<BatchPlan> BatchPlanner::warmup_epoch(int epoch) const {
    std::vector<int> order(static_cast<size_t>(n_));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = derive_rng(cfg_.seed, "warmup-shuffle", static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    std::vector<BatchPlan> plans;
    for (int start = 0; start < n_; start += cfg_.batch) {
        BatchPlan p;
        p.mode = ImbalanceMode::none;
        const int end = std::min(start + cfg_.batch, n_);
        if (end - start < 2 && !plans.empty()) break;  // drop a trailing singleton
        p.indices.assign(order.begin() + start, order.begin() + end);
        p.weights.assign(p.indices.size(), 1.0f);
        plans.push_back(std::move(p));
    }
    return plans;
}

BatchPlan BatchPlanner::iteration_plan(int64_t iteration, const EncodeFn& encode,
                                       ClusterDiagnostics* diag) {
    if (cfg_.mode == ImbalanceMode::none) {
        // plain batch drawn uniformly without replacement
        std::vector<int> order(static_cast<size_t>(n_));
        std::iota(order.begin(), order.end(), 0);
        Rng rng = derive_rng(cfg_.seed, "plain-batch", static_cast<uint64_t>(iteration));
        rng.shuffle(order);
        BatchPlan p;
        p.mode = cfg_.mode;
        p.indices.assign(order.begin(), order.begin() + std::min(cfg_.batch, n_));
        p.weights.assign(p.indices.size(), 1.0f);
        return p;
    }

    const bool refresh = cached_iteration_ < 0 ||
                         (iteration - cached_iteration_) >= cfg_.refresh_period;
    if (refresh) {
        const int pool_n = cfg_.pool_size();
        std::vector<int> order(static_cast<size_t>(n_));
        std::iota(order.begin(), order.end(), 0);
        Rng rng = derive_rng(cfg_.seed, "pool", static_cast<uint64_t>(iteration));
        rng.shuffle(order);
        cached_pool_.assign(order.begin(), order.begin() + pool_n);

        auto reps = encode(cached_pool_);
        cached_model_ =
            kmeans(reps, cfg_.k, derive_seed(cfg_.seed, "kmeans", static_cast<uint64_t>(iteration)));
        cached_iteration_ = iteration;
        if (cfg_.mode == ImbalanceMode::re)
            cached_weights_ = reweight(cached_model_);
        else
            cached_selection_ = select_batch(reps, cached_model_, cfg_.m);
    }

    BatchPlan p;
    p.mode = cfg_.mode;
    if (cfg_.mode == ImbalanceMode::se) {
        for (int local : cached_selection_)
            p.indices.push_back(cached_pool_[static_cast<size_t>(local)]);
        p.weights.assign(p.indices.size(), 1.0f);
    } else {
        // RE: subsample the weighted pool down to the training batch size,
        // then rescale so the emitted batch minimum is exactly 1
        const int pool_n = cfg_.pool_size();
        std::vector<int> order(static_cast<size_t>(pool_n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng = derive_rng(cfg_.seed, "re-subsample", static_cast<uint64_t>(iteration));
        rng.shuffle(order);
        const int take = std::min(cfg_.batch, pool_n);
        double mn = std::numeric_limits<double>::infinity();
        for (int i = 0; i < take; ++i) mn = std::min(mn, cached_weights_[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        for (int i = 0; i < take; ++i) {
            const int local = order[static_cast<size_t>(i)];
            p.indices.push_back(cached_pool_[static_cast<size_t>(local)]);
            p.weights.push_back(static_cast<float>(cached_weights_[static_cast<size_t>(local)] / mn));
        }
    }

    if (diag) {
        diag->iteration = iteration;
        diag->inertia = cached_model_.inertia;
        diag->frequencies = cached_model_.frequencies;
        if (cfg_.mode == ImbalanceMode::se) {
            int bi = 0, bj = 1;
            double best = -1.0;
            for (int i = 0; i < cached_model_.k; ++i)
                for (int j = i + 1; j < cached_model_.k; ++j) {
                    const double dij = dist2(cached_model_.centroids[static_cast<size_t>(i)],
                                             cached_model_.centroids[static_cast<size_t>(j)]);
                    if (dij > best) {
                        best = dij;
                        bi = i;
                        bj = j;
                    }
                }
            diag->chosen_pair = std::make_pair(bi, bj);
            diag->distance = std::sqrt(best);
        } else {
            diag->chosen_pair.reset();
            diag->distance.reset();
        }
    }
    return p;
}

}  // namespace ssrad

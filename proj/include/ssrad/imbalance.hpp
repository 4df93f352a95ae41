#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace ssrad {

// k centroids plus per-sample assignments over a batch of representation
// vectors.
struct ClusterModel {
    int k = 0;
    std::vector<std::vector<double>> centroids;  // k x d
    std::vector<int> assignments;                // N, cluster index per sample
    std::vector<int> frequencies;                // k, samples per cluster
    double inertia = 0.0;                        // within-cluster sum of squares
    std::vector<double> inertia_by_iter;         // Lloyd's trace, non-increasing
};

// Lloyd's iterations from k-means++ seeding until the assignment fixpoint or
// 100 iterations; deterministic given the seed. Empty clusters are repaired
// by reseeding at the point farthest from its own centroid.
ClusterModel kmeans(const std::vector<std::vector<double>>& points, int k, uint64_t seed);

// Best of `restarts` seeded runs by inertia (ties keep the earliest run).
ClusterModel kmeans_restarts(const std::vector<std::vector<double>>& points, int k,
                             uint64_t seed, int restarts);

// Sample re-weighting: a sample in cluster j gets N / f_j, then all weights
// are divided by the batch minimum so the smallest weight is exactly 1.
std::vector<double> reweight(const ClusterModel& model);

// Sample selection: picks the centroid pair with maximal Euclidean distance
// (ties toward the lowest index pair), then the m/2 points nearest each of
// the two centroids, ranked globally over the pool. Points taken for the
// first centroid are removed before selecting for the second.
std::vector<int> select_batch(const std::vector<std::vector<double>>& points,
                              const ClusterModel& model, int m);

enum class ImbalanceMode { none, re, se };

// One planned training batch: which samples to load and their loss weights.
struct BatchPlan {
    ImbalanceMode mode = ImbalanceMode::none;
    std::vector<int> indices;
    std::vector<float> weights;  // same length as indices
};

struct ClusterDiagnostics {
    int64_t iteration = 0;
    double inertia = 0.0;
    std::vector<int> frequencies;
    std::optional<std::pair<int, int>> chosen_pair;
    std::optional<double> distance;
};

struct PlannerConfig {
    ImbalanceMode mode = ImbalanceMode::none;
    int batch = 6;           // plain/warm-up batch size; RE batches are subsampled to this
    int k = 3;
    int q = 10;              // candidate pool size N = k * q
    int m = 6;               // SE batch size; even, < N/k
    int refresh_period = 1;  // re-cluster every this many iterations
    uint64_t seed = 0;

    int pool_size() const { return k * q; }
    void validate(int dataset_size) const;
};

// Encodes a list of sample indices into representation rows (N x d). The
// planner stays agnostic of the encoder so it can be driven by a stub.
using EncodeFn = std::function<std::vector<std::vector<double>>(const std::vector<int>&)>;

// Emits the warm-up epoch as plain shuffled batches, then per-iteration
// RE-weighted or SE-selected batches built from a freshly encoded candidate
// pool. Deterministic given the seed; every decision is keyed by epoch or
// iteration index so a resumed run replays identically.
class BatchPlanner {
public:
    BatchPlanner(int dataset_size, PlannerConfig cfg);

    std::vector<BatchPlan> warmup_epoch(int epoch) const;
    BatchPlan iteration_plan(int64_t iteration, const EncodeFn& encode,
                             ClusterDiagnostics* diag = nullptr);

    const PlannerConfig& config() const { return cfg_; }

private:
    int n_;
    PlannerConfig cfg_;
    std::vector<int> cached_pool_;        // dataset indices of the candidate pool
    ClusterModel cached_model_;
    std::vector<double> cached_weights_;  // RE weights over the pool
    std::vector<int> cached_selection_;   // SE pool-local selected indices
    int64_t cached_iteration_ = -1;
};

}  // namespace ssrad

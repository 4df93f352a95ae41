#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ssrad/error.hpp"
#include "ssrad/imbalance.hpp"
#include "ssrad/rng.hpp"

using namespace ssrad;

namespace {

using Points = std::vector<std::vector<double>>;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// exhaustive best 2-partition by within-cluster sum of squares
double brute_force_inertia_k2(const Points& pts) {
    const int n = static_cast<int>(pts.size());
    const size_t d = pts.front().size();
    double best = std::numeric_limits<double>::infinity();
    for (uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<double> c0(d, 0.0), c1(d, 0.0);
        int n0 = 0, n1 = 0;
        for (int i = 0; i < n; ++i) {
            auto& c = (mask >> i) & 1 ? c1 : c0;
            ((mask >> i) & 1 ? n1 : n0)++;
            for (size_t j = 0; j < d; ++j) c[j] += pts[static_cast<size_t>(i)][j];
        }
        for (size_t j = 0; j < d; ++j) {
            c0[j] /= n0;
            c1[j] /= n1;
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i)
            inertia += sq_dist(pts[static_cast<size_t>(i)], (mask >> i) & 1 ? c1 : c0);
        best = std::min(best, inertia);
    }
    return best;
}

Points planted_pool(int n_major, int n_minor, uint64_t seed) {
    Rng rng(seed);
    Points pts;
    for (int i = 0; i < n_major; ++i)
        pts.push_back({rng.normal(0.0, 0.4), rng.normal(0.0, 0.4)});
    for (int i = 0; i < n_minor; ++i)
        pts.push_back({rng.normal(10.0, 0.4), rng.normal(0.0, 0.4)});
    return pts;
}

}  // namespace

TEST_CASE("kmeans on {0,1,10,11} with k=2 finds the obvious split") {
    Points pts{{0.0}, {1.0}, {10.0}, {11.0}};
    ClusterModel m = kmeans(pts, 2, 5);
    REQUIRE(m.k == 2);
    std::vector<double> centers{m.centroids[0][0], m.centroids[1][0]};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0] == doctest::Approx(0.5));
    CHECK(centers[1] == doctest::Approx(10.5));
    CHECK(m.frequencies[0] == 2);
    CHECK(m.frequencies[1] == 2);
    CHECK(m.inertia == doctest::Approx(brute_force_inertia_k2(pts)).epsilon(1e-12));
}

TEST_CASE("kmeans with k=1 returns the mean; k=N gives zero inertia") {
    Rng rng(30);
    Points pts;
    for (int i = 0; i < 7; ++i) pts.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});

    ClusterModel one = kmeans(pts, 1, 0);
    std::vector<double> mean(2, 0.0);
    for (const auto& p : pts)
        for (int j = 0; j < 2; ++j) mean[static_cast<size_t>(j)] += p[static_cast<size_t>(j)] / 7.0;
    CHECK(one.centroids[0][0] == doctest::Approx(mean[0]));
    CHECK(one.centroids[0][1] == doctest::Approx(mean[1]));
    double total = 0.0;
    for (const auto& p : pts) total += sq_dist(p, mean);
    CHECK(one.inertia == doctest::Approx(total));

    ClusterModel full = kmeans(pts, 7, 0);
    CHECK(full.inertia == doctest::Approx(0.0));
    for (int f : full.frequencies) CHECK(f == 1);
}

TEST_CASE("kmeans input validation and duplicates") {
    Points pts{{0.0}, {0.0}, {0.0}};
    CHECK_THROWS_AS(kmeans(pts, 4, 0), ConfigError);
    ClusterModel m = kmeans(pts, 2, 0);  // duplicate points tolerated
    CHECK(m.inertia == doctest::Approx(0.0));
}

TEST_CASE("kmeans inertia is non-increasing across Lloyd iterations") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        Points pts;
        const int n = 20 + static_cast<int>(rng.uniform_int(0, 20));
        for (int i = 0; i < n; ++i)
            pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
        ClusterModel m = kmeans(pts, 4, static_cast<uint64_t>(trial));
        for (size_t i = 1; i < m.inertia_by_iter.size(); ++i)
            CHECK(m.inertia_by_iter[i] <= m.inertia_by_iter[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans recovers a planted separable partition") {
    Rng rng(32);
    for (int trial = 0; trial < 8; ++trial) {
        // inter-cluster gap far above intra-cluster spread
        Points pts;
        std::vector<int> truth;
        const double centers[3][2] = {{0, 0}, {50, 0}, {0, 50}};
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 8; ++i) {
                pts.push_back({centers[c][0] + rng.normal(0, 1), centers[c][1] + rng.normal(0, 1)});
                truth.push_back(c);
            }
        ClusterModel m = kmeans(pts, 3, static_cast<uint64_t>(trial) + 100);
        // same-truth pairs share a cluster, cross-truth pairs do not
        for (size_t a = 0; a < pts.size(); ++a)
            for (size_t b = a + 1; b < pts.size(); ++b)
                CHECK((truth[a] == truth[b]) == (m.assignments[a] == m.assignments[b]));
    }
}

TEST_CASE("kmeans matches the exhaustive 2-partition oracle on small instances") {
    Rng rng(33);
    int hits = 0;
    const int trials = 40;
    for (int trial = 0; trial < trials; ++trial) {
        Points pts;
        const int n = 5 + static_cast<int>(rng.uniform_int(0, 5));
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 2));
        for (int i = 0; i < n; ++i) {
            std::vector<double> p;
            for (int j = 0; j < d; ++j) p.push_back(rng.uniform(-4, 4));
            pts.push_back(std::move(p));
        }
        const double best = brute_force_inertia_k2(pts);
        ClusterModel m = kmeans_restarts(pts, 2, static_cast<uint64_t>(trial), 5);
        if (m.inertia <= best + 1e-9) ++hits;
    }
    CHECK(hits == trials);  // restarted variant should always reach the optimum
}

TEST_CASE("reweight: documented case, balance fixpoint, exact minimum") {
    ClusterModel m;
    m.k = 2;
    m.assignments = {0, 0, 0, 0, 1, 1};
    m.frequencies = {4, 2};
    std::vector<double> w = reweight(m);
    // raw weights 6/4 = 1.5 and 6/2 = 3.0, rescaled by the minimum
    CHECK(w[0] == 1.0);
    CHECK(w[3] == 1.0);
    CHECK(w[4] == doctest::Approx(2.0));
    CHECK(w[5] == doctest::Approx(2.0));

    ClusterModel balanced;
    balanced.k = 3;
    balanced.assignments = {0, 1, 2, 0, 1, 2};
    balanced.frequencies = {2, 2, 2};
    for (double x : reweight(balanced)) CHECK(x == 1.0);

    ClusterModel single;
    single.k = 1;
    single.assignments = {0, 0, 0};
    single.frequencies = {3};
    for (double x : reweight(single)) CHECK(x == 1.0);
}

TEST_CASE("reweight invariants hold over all frequency splits up to N=12") {
    for (int n = 2; n <= 12; ++n) {
        for (uint32_t mask = 1; mask + 1 < (1u << (n - 1)); ++mask) {
            // compositions of n into 2 parts via mask popcount, and into 3
            // parts via a second split below
            const int f0 = __builtin_popcount(mask) + 1;
            const int f1 = n - f0;
            if (f1 < 1) continue;
            ClusterModel m;
            m.k = 2;
            m.frequencies = {f0, f1};
            for (int i = 0; i < f0; ++i) m.assignments.push_back(0);
            for (int i = 0; i < f1; ++i) m.assignments.push_back(1);
            std::vector<double> w = reweight(m);
            const double mn = *std::min_element(w.begin(), w.end());
            CHECK(mn == 1.0);  // exactly 1 after rescaling
            // weight ratio between clusters equals the inverse frequency ratio
            CHECK(w[0] * f0 == doctest::Approx(w[static_cast<size_t>(f0)] * f1).epsilon(1e-12));
        }
    }
}

TEST_CASE("select_batch: farthest pair and nearest ranking, documented cases") {
    // centroids (0,0), (10,0), (1,1): the farthest pair is the first two
    // (distance 10 beats sqrt(82) and sqrt(2)); the middle blob is padded so
    // m stays under N/k
    ClusterModel m;
    m.k = 3;
    m.centroids = {{0.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};
    Points pts{{0.0, 0.0}, {0.1, 0.0}, {10.0, 0.0}, {9.9, 0.0}, {5.0, 5.0}};
    for (int i = 0; i < 8; ++i) pts.push_back({1.0 + 0.05 * i, 1.0});
    m.assignments.assign(pts.size(), 2);
    m.assignments[0] = m.assignments[1] = 0;
    m.assignments[2] = m.assignments[3] = 1;
    m.frequencies = {2, 2, 9};

    std::vector<int> sel = select_batch(pts, m, 4);
    REQUIRE(sel.size() == 4);
    std::set<int> uniq(sel.begin(), sel.end());
    CHECK(uniq.size() == 4);

    // hand-ranked nearest neighbors: the two near-origin points, then the
    // two near (10, 0)
    CHECK(std::set<int>(sel.begin(), sel.begin() + 2) == std::set<int>{0, 1});
    CHECK(std::set<int>(sel.begin() + 2, sel.end()) == std::set<int>{2, 3});
}

TEST_CASE("select_batch: a distant cluster must be in the chosen pair") {
    ClusterModel m;
    m.k = 3;
    m.centroids = {{0.0, 0.0}, {0.0, 0.0}, {100.0, 0.0}};  // two coincide
    Points pts;
    for (int i = 0; i < 30; ++i)
        pts.push_back({i < 27 ? 0.0 + 0.01 * i : 100.0, 0.1 * i});
    m.assignments.assign(30, 0);
    m.frequencies = {27, 0, 3};
    std::vector<int> sel = select_batch(pts, m, 4);
    // half the batch sits near the distant centroid
    int far_count = 0;
    for (int i : sel)
        if (pts[static_cast<size_t>(i)][0] > 50.0) ++far_count;
    CHECK(far_count == 2);
}

TEST_CASE("select_batch validation errors") {
    Points pts;
    for (int i = 0; i < 30; ++i) pts.push_back({static_cast<double>(i), 0.0});
    ClusterModel m = kmeans(pts, 3, 1);
    CHECK_THROWS_AS(select_batch(pts, m, 5), ConfigError);   // odd m
    CHECK_THROWS_AS(select_batch(pts, m, 10), ConfigError);  // m >= N/k
    ClusterModel single = kmeans(pts, 1, 1);
    CHECK_THROWS_AS(select_batch(pts, single, 4), ConfigError);  // k < 2
}

TEST_CASE("select_batch: chosen pair maximizes distance over all pairs") {
    Rng rng(35);
    for (int trial = 0; trial < 10; ++trial) {
        Points pts;
        for (int i = 0; i < 40; ++i)
            pts.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
        ClusterModel m = kmeans(pts, 4, static_cast<uint64_t>(trial));
        std::vector<int> sel = select_batch(pts, m, 6);
        REQUIRE(sel.size() == 6);
        CHECK(std::set<int>(sel.begin(), sel.end()).size() == 6);

        // exhaustive check of the pair the selection is centered on: the
        // first m/2 selections are nearest one centroid of the best pair
        double best = -1.0;
        int bi = 0, bj = 1;
        for (int i = 0; i < m.k; ++i)
            for (int j = i + 1; j < m.k; ++j) {
                const double dij = sq_dist(m.centroids[static_cast<size_t>(i)],
                                           m.centroids[static_cast<size_t>(j)]);
                if (dij > best) {
                    best = dij;
                    bi = i;
                    bj = j;
                }
            }
        // every selected point is closer to its own pole of the chosen pair
        // than any unselected point that was still available
        for (int half = 0; half < 2; ++half) {
            const auto& center = m.centroids[static_cast<size_t>(half == 0 ? bi : bj)];
            std::set<int> taken(sel.begin(), sel.begin() + 3 + (half == 0 ? 0 : 3));
            double worst_sel = 0.0;
            for (int s = half * 3; s < half * 3 + 3; ++s)
                worst_sel = std::max(worst_sel, sq_dist(pts[static_cast<size_t>(sel[static_cast<size_t>(s)])], center));
            for (int i = 0; i < 40; ++i) {
                if (taken.count(i)) continue;
                if (half == 1 &&
                    std::find(sel.begin(), sel.begin() + 3, i) != sel.begin() + 3)
                    continue;  // consumed by the first pole
                CHECK(sq_dist(pts[static_cast<size_t>(i)], center) >= worst_sel - 1e-12);
            }
        }
    }
}

TEST_CASE("planner: plain mode emits batches of the configured size with unit weights") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::none;
    cfg.batch = 6;
    cfg.seed = 3;
    BatchPlanner planner(20, cfg);
    auto plans = planner.warmup_epoch(0);
    std::set<int> seen;
    for (const auto& p : plans) {
        CHECK(p.indices.size() <= 6);
        for (float w : p.weights) CHECK(w == 1.0f);
        for (int i : p.indices) CHECK(seen.insert(i).second);  // one epoch, each sample once
    }
    CHECK(seen.size() == 20);
}

TEST_CASE("planner: SE draws a k*q pool and emits m samples") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::se;
    cfg.k = 3;
    cfg.q = 10;
    cfg.m = 6;
    cfg.seed = 4;
    BatchPlanner planner(60, cfg);
    // pool indices map to three planted blobs
    EncodeFn encode = [](const std::vector<int>& idx) {
        std::vector<std::vector<double>> pts;
        for (int i : idx) {
            const double cx = (i % 3) * 20.0;
            pts.push_back({cx + 0.01 * i, 0.0});
        }
        return pts;
    };
    ClusterDiagnostics diag;
    BatchPlan plan = planner.iteration_plan(0, encode, &diag);
    CHECK(plan.indices.size() == 6);
    CHECK(std::set<int>(plan.indices.begin(), plan.indices.end()).size() == 6);
    for (float w : plan.weights) CHECK(w == 1.0f);
    CHECK(diag.chosen_pair.has_value());
    CHECK(diag.frequencies.size() == 3);
}

TEST_CASE("planner: RE over a perfectly balanced pool degenerates to unit weights") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::re;
    cfg.k = 2;
    cfg.q = 10;
    cfg.batch = 6;
    cfg.seed = 5;
    // dataset size equals the pool size, so the pool is all samples and the
    // parity split is exactly balanced
    BatchPlanner planner(20, cfg);
    EncodeFn encode = [](const std::vector<int>& idx) {
        std::vector<std::vector<double>> pts;
        for (int i : idx) pts.push_back({(i % 2) * 30.0 + 0.05 * i, 0.0});
        return pts;
    };
    BatchPlan plan = planner.iteration_plan(0, encode);
    CHECK(plan.indices.size() == 6);
    for (float w : plan.weights) CHECK(w == 1.0f);
}

TEST_CASE("planner: RE weights on an imbalanced pool favor the rare cluster") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::re;
    cfg.k = 2;
    cfg.q = 10;
    cfg.batch = 20;  // keep the whole pool so the weights are visible
    cfg.seed = 6;
    BatchPlanner planner(20, cfg);
    EncodeFn encode = [](const std::vector<int>& idx) {
        std::vector<std::vector<double>> pts;
        for (int i : idx) pts.push_back({i < 16 ? 0.0 + 0.01 * i : 50.0 + 0.01 * i, 0.0});
        return pts;
    };
    BatchPlan plan = planner.iteration_plan(0, encode);
    REQUIRE(plan.indices.size() == 20);
    float minority_w = 0.0f, majority_w = 0.0f;
    for (size_t j = 0; j < plan.indices.size(); ++j) {
        if (plan.indices[j] >= 16)
            minority_w = plan.weights[j];
        else
            majority_w = plan.weights[j];
    }
    CHECK(majority_w == 1.0f);
    CHECK(minority_w == doctest::Approx(4.0f));  // 16:4 split, inverse ratio
}

TEST_CASE("planner: SE on a planted 9:1 pool overselects the minority") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::se;
    cfg.k = 3;
    cfg.q = 10;
    cfg.m = 6;
    cfg.seed = 7;
    BatchPlanner planner(30, cfg);
    int minority_picks = 0, total = 0;
    for (int it = 0; it < 20; ++it) {
        EncodeFn encode = [it](const std::vector<int>& idx) {
            std::vector<std::vector<double>> pts;
            Rng rng(static_cast<uint64_t>(it) * 77 + 1);
            for (int i : idx) {
                if (i < 27)
                    pts.push_back({rng.normal(0.0, 0.4), rng.normal(0.0, 0.4)});
                else
                    pts.push_back({rng.normal(12.0, 0.4), rng.normal(0.0, 0.4)});
            }
            return pts;
        };
        BatchPlan plan = planner.iteration_plan(it, encode);
        for (int i : plan.indices) {
            ++total;
            if (i >= 27) ++minority_picks;
        }
    }
    // pool prevalence is 10%; the selected batches should carry >= 3x that
    CHECK(static_cast<double>(minority_picks) / total >= 0.3);
}

TEST_CASE("planner validates the SE constraints") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::se;
    cfg.k = 3;
    cfg.q = 10;
    cfg.m = 5;  // odd
    CHECK_THROWS_AS(BatchPlanner(60, cfg), ConfigError);
    cfg.m = 10;  // m >= N/k = 10
    CHECK_THROWS_AS(BatchPlanner(60, cfg), ConfigError);
    cfg.m = 6;
    CHECK_THROWS_AS(BatchPlanner(20, cfg), ConfigError);  // dataset < pool
    CHECK_NOTHROW(BatchPlanner(30, cfg));
}

TEST_CASE("planner is deterministic given the seed") {
    PlannerConfig cfg;
    cfg.mode = ImbalanceMode::se;
    cfg.k = 2;
    cfg.q = 5;
    cfg.m = 4;
    cfg.seed = 11;
    EncodeFn encode = [](const std::vector<int>& idx) {
        std::vector<std::vector<double>> pts;
        for (int i : idx) pts.push_back({static_cast<double>(i % 4), static_cast<double>(i / 4)});
        return pts;
    };
    auto run = [&]() {
        BatchPlanner planner(20, cfg);
        std::vector<int> all;
        for (int it = 0; it < 5; ++it) {
            BatchPlan p = planner.iteration_plan(it, encode);
            all.insert(all.end(), p.indices.begin(), p.indices.end());
        }
        return all;
    };
    CHECK(run() == run());
}

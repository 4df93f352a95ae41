#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssrad/augment.hpp"
#include "ssrad/error.hpp"

using namespace ssrad;

namespace {

Volume constant_volume(int e, float value) {
    Volume v;
    v.d = v.h = v.w = e;
    v.intensity.assign(v.voxels(), value);
    return v;
}

Volume random_volume(int e, uint64_t seed) {
    Volume v = constant_volume(e, 0.0f);
    Rng rng(seed);
    for (float& x : v.intensity) x = static_cast<float>(rng.uniform(0.0, 255.0));
    return v;
}

// centered gaussian blob, smooth enough for interpolation round trips
Volume blob_volume(int e, double sigma) {
    Volume v = constant_volume(e, 0.0f);
    const double c = (e - 1) / 2.0;
    for (int z = 0; z < e; ++z)
        for (int y = 0; y < e; ++y)
            for (int x = 0; x < e; ++x) {
                const double r2 = (z - c) * (z - c) + (y - c) * (y - c) + (x - c) * (x - c);
                v.at(z, y, x) = static_cast<float>(255.0 * std::exp(-r2 / (2 * sigma * sigma)));
            }
    return v;
}

double mean_abs_diff(const Volume& a, const Volume& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.intensity.size(); ++i)
        s += std::abs(static_cast<double>(a.intensity[i]) - b.intensity[i]);
    return s / static_cast<double>(a.intensity.size());
}

}  // namespace

TEST_CASE("affine with identity parameters is bit-exact") {
    Volume v = random_volume(12, 40);
    Volume out = affine3d(v, {0.0, 0.0, 0.0}, 1.0, {0.0, 0.0, 0.0});
    CHECK(out.intensity == v.intensity);
}

TEST_CASE("90 degree rotation relocates an axis-aligned spike") {
    const int e = 15;  // odd: integral center
    Volume v = constant_volume(e, 0.0f);
    const int c = (e - 1) / 2;
    v.at(c, c + 3, c) = 200.0f;

    // +90 degrees about the D axis maps an (dh, dw) offset of (3, 0) to (0, 3)
    Volume out = affine3d(v, {M_PI / 2.0, 0.0, 0.0}, 1.0, {0.0, 0.0, 0.0});
    size_t argmax = 0;
    for (size_t i = 1; i < out.intensity.size(); ++i)
        if (out.intensity[i] > out.intensity[argmax]) argmax = i;
    CHECK(argmax == out.idx(c, c, c + 3));
    CHECK(out.intensity[argmax] > 0.9f * 200.0f);
}

TEST_CASE("scale down then up recovers the center crop of a smooth phantom") {
    Volume v = blob_volume(16, 6.0);
    Volume small = affine3d(v, {0, 0, 0}, 0.7, {0, 0, 0});
    Volume back = affine3d(small, {0, 0, 0}, 1.0 / 0.7, {0, 0, 0});
    // compare on the center region that stayed in the field of view
    double total = 0.0;
    int count = 0;
    const int lo = 4, hi = 12;
    for (int z = lo; z < hi; ++z)
        for (int y = lo; y < hi; ++y)
            for (int x = lo; x < hi; ++x) {
                total += std::abs(back.at(z, y, x) - v.at(z, y, x));
                ++count;
            }
    CHECK(total / count < 5.0);
}

TEST_CASE("affine rejects a degenerate scale") {
    Volume v = constant_volume(8, 1.0f);
    CHECK_THROWS_AS(affine3d(v, {0, 0, 0}, 0.0, {0, 0, 0}), ConfigError);
    CHECK_THROWS_AS(affine3d(v, {0, 0, 0}, -1.0, {0, 0, 0}), ConfigError);
}

TEST_CASE("gamma: identity at 1, fixed endpoints for any exponent") {
    Volume v = random_volume(8, 41);
    Volume out = gamma_adjust(v, 1.0);
    for (size_t i = 0; i < v.intensity.size(); ++i)
        CHECK(out.intensity[i] == doctest::Approx(v.intensity[i]).epsilon(1e-6));

    Volume ends = constant_volume(2, 0.0f);
    ends.intensity = {0.0f, 255.0f, 128.0f, 0.0f, 255.0f, 64.0f, 0.0f, 255.0f};
    for (double g : {0.7, 1.0, 1.5}) {
        Volume e = gamma_adjust(ends, g);
        CHECK(e.intensity[0] == doctest::Approx(0.0f));
        CHECK(e.intensity[1] == doctest::Approx(255.0f));
    }
}

TEST_CASE("gaussian blur: kernel normalized, constants preserved, sigma errors") {
    for (double sigma : {0.5, 1.0, 2.3}) {
        auto k = gaussian_kernel1d(sigma);
        double sum = 0.0;
        for (double x : k) sum += x;
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    Volume c = constant_volume(10, 77.0f);
    Volume out = gaussian_blur(c, 1.3);
    for (float x : out.intensity) CHECK(x == doctest::Approx(77.0f).epsilon(1e-6));
    CHECK_THROWS_AS(gaussian_blur(c, -0.5), ConfigError);
}

TEST_CASE("sharpen and noise stay within range and shape") {
    Volume v = random_volume(10, 42);
    Volume s = sharpen(v, 1.5);
    CHECK(s.intensity.size() == v.intensity.size());
    for (float x : s.intensity) {
        CHECK(x >= 0.0f);
        CHECK(x <= 255.0f);
    }
    Rng rng(7);
    Volume n = add_noise(v, 5.0, rng);
    for (float x : n.intensity) {
        CHECK(x >= 0.0f);
        CHECK(x <= 255.0f);
    }
    CHECK_THROWS_AS(add_noise(v, -1.0, rng), ConfigError);
}

TEST_CASE("make_views: zero probabilities reproduce the input") {
    AugmentPolicy policy;
    policy.p_affine = policy.p_appearance = policy.p_gamma = policy.p_noise = 0.0;
    Volume v = random_volume(10, 43);
    Rng rng(1);
    auto [x1, x2] = make_views(v, policy, rng);
    CHECK(x1.intensity == v.intensity);
    CHECK(x2.intensity == v.intensity);
}

TEST_CASE("make_views is reproducible for a fixed seed") {
    AugmentPolicy policy;
    Volume v = blob_volume(12, 3.0);
    Rng a(99), b(99);
    auto [a1, a2] = make_views(v, policy, a);
    auto [b1, b2] = make_views(v, policy, b);
    CHECK(a1.intensity == b1.intensity);
    CHECK(a2.intensity == b2.intensity);
}

TEST_CASE("default policy: the two views differ in every draw") {
    AugmentPolicy policy;
    Volume v = blob_volume(12, 3.0);
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto [x1, x2] = make_views(v, policy, rng);
        CHECK(mean_abs_diff(x1, x2) > 0.0);
        CHECK(x1.d == v.d);
        for (float x : x1.intensity) {
            CHECK(x >= 0.0f);
            CHECK(x <= 255.0f);
        }
    }
}

TEST_CASE("policy validation rejects bad ranges") {
    AugmentPolicy p;
    p.scale_lo = 1.4;
    p.scale_hi = 0.7;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    AugmentPolicy q;
    q.p_gamma = 1.5;
    CHECK_THROWS_AS(q.validate(), ConfigError);
}

TEST_CASE("affine carries the mask along") {
    const int e = 15;
    Volume v = constant_volume(e, 0.0f);
    v.mask.assign(v.voxels(), 0);
    const int c = (e - 1) / 2;
    v.mask[v.idx(c, c + 3, c)] = 1;
    Volume out = affine3d(v, {M_PI / 2.0, 0.0, 0.0}, 1.0, {0.0, 0.0, 0.0});
    CHECK(out.mask[out.idx(c, c, c + 3)] == 1);
}

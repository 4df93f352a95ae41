#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ssrad {

// Deterministic PRNG with hand-rolled distributions. std::mt19937 plus the
// standard <random> distributions would be deterministic per libstdc++
// version only; the splitmix64 core below produces identical streams on any
// conforming compiler, which the reproducibility contract relies on.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // inclusive bounds, rejection sampling for exact uniformity
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return lo + static_cast<int64_t>(r % range);
    }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Named sub-stream derivation: every random decision in the pipeline draws
// from a stream keyed by (master seed, stream name, indices), so any stage
// can be replayed in isolation and resumed mid-run.
inline uint64_t derive_seed(uint64_t master, std::string_view stream, uint64_t a = 0,
                            uint64_t b = 0) {
    uint64_t h = 0xcbf29ce484222325ULL ^ master;
    auto mix = [&h](uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    mix(a);
    mix(b);
    return h;
}

inline Rng derive_rng(uint64_t master, std::string_view stream, uint64_t a = 0, uint64_t b = 0) {
    return Rng(derive_seed(master, stream, a, b));
}

}  // namespace ssrad

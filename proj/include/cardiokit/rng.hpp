#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace cardiokit {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and a key path,
// e.g. derive_seed(seed, {kForestStream, tree_index}). Every consumer of
// randomness in the library gets its seed through this, so results do not
// depend on evaluation order or thread count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ull);
    for (std::uint64_t p : path)
        h = mix64(h ^ (p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
    return h;
}

// splitmix64 generator. Small, fast, and fully specified here so that
// streams are reproducible across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        return mix64(z);
    }

    // [0, 1)
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next();
        while (v >= limit)
            v = next();
        return v % n;
    }

    bool bernoulli(double p) {
        return uniform01() < p;
    }

    // Box-Muller; the second deviate is discarded to keep the generator
    // stateless beyond the counter.
    double normal() {
        double u1 = uniform01();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) {
        return mean + sd * normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

    // First k elements of a Fisher-Yates pass over [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        if (k > n)
            k = n;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(idx[i], idx[i + below(n - i)]);
        idx.resize(k);
        return idx;
    }

private:
    std::uint64_t state_;
};

// Stream tags for derive_seed paths, one per randomness consumer.
enum StreamTag : std::uint64_t {
    kStreamSubjectParams = 1,
    kStreamBeatTimes = 2,
    kStreamNoise = 3,
    kStreamSplit = 4,
    kStreamForestTree = 5,
    kStreamPermutation = 6,
    kStreamClusterShuffle = 7,
    kStreamRepresentative = 8,
    kStreamKFold = 9,
    kStreamGa = 10,
    kStreamGaFitness = 11,
};

} // namespace cardiokit

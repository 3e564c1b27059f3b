#pragma once

#include <cmath>
#include <cstdint>

namespace latentmark {

// Counter-free splitmix64-based generator. Used everywhere instead of
// <random> engines so that streams are reproducible across standard
// library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    float uniform_f() { return static_cast<float>(uniform()); }

    // uniform in [lo, hi]
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // standard normal via Box-Muller, one value per call (no caching so
    // that interleaved draws stay stream-stable)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    float normal_f(float mean = 0.f, float stddev = 1.f) {
        return mean + stddev * static_cast<float>(normal());
    }

    // derive an independent stream (for per-worker / per-sample rngs)
    Rng fork(std::uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL));
    }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

// FNV-1a, used for config hashes, dataset fingerprints and backend
// weight hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace latentmark

#pragma once

#include <cstdint>
#include <cmath>
#include <span>
#include <vector>

namespace dlif {

/// splitmix64; used to expand user seeds into generator state and to derive
/// independent per-subject / per-fold streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mix two 64-bit values into a stream seed (seed, stream index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return splitmix64(s);
}

/// xoshiro256** seeded through splitmix64. Deterministic across platforms,
/// no library dependence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// uniform in [0,1) with 53 random bits
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// inclusive range
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Box-Muller; second value cached so draws come in a fixed order.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// N(0, sigma) truncated to |z| <= 2*sigma by resampling
    double truncated_normal(double sigma) {
        double z = normal();
        while (std::fabs(z) > 2.0) z = normal();
        return z * sigma;
    }

    /// Fisher-Yates
    template <typename T>
    void shuffle(std::span<T> xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(xs[i - 1], xs[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        shuffle(std::span<T>(xs));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace dlif

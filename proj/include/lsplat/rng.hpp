#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lsplat {

// Deterministic RNG with hand-rolled distributions. std:: distribution
// objects are implementation-defined, which would break seed-reproducibility
// tests across standard libraries; the generator itself is portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    // Box-Muller; one value per call, cached pair dropped for simplicity.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derives an independent stream; used to give each subsystem its own seed.
    Rng fork(std::uint64_t salt) {
        std::uint64_t s = next_u64() ^ (salt * 0x9e3779b97f4a7c15ull);
        return Rng(s);
    }

    template <typename It>
    void shuffle(It begin, It end) {
        const auto n = end - begin;
        for (auto i = n - 1; i > 0; --i) {
            const auto j = engine_() % static_cast<std::uint64_t>(i + 1);
            std::swap(begin[i], begin[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace lsplat

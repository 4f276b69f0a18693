#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "dgan/common.hpp"

namespace dgan {

// Deterministic RNG. mt19937_64 provides the raw stream; the distribution
// transforms are implemented here because the std:: distributions are
// implementation-defined and would break bit-reproducibility across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derives an independent stream seed, e.g. Rng(Rng::derive(seed, "critic")).
    // Streams for batches, parameter init and interpolation draws are kept
    // separate so that disabling one training phase does not shift the others.
    static std::uint64_t derive(std::uint64_t seed, std::string_view label) {
        std::uint64_t h = fnv1a(label.data(), label.size());
        std::uint64_t z = seed ^ h;
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return gen_(); }

    // [0,1)
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds, unbiased via rejection
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t range = std::uint64_t(hi - lo) + 1;
        if (range == 0) return std::int64_t(gen_());
        std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % range + 1) % range;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v > limit);
        return lo + std::int64_t(v % range);
    }

    // Standard normal, Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, scale), Marsaglia-Tsang. shape > 0.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v * scale;
        }
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dgan

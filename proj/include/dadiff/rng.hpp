#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dadiff/tensor.hpp"

namespace dadiff {

/// Deterministic random stream. mt19937_64 is bit-exact across platforms;
/// normal draws use an explicit Box-Muller so the draw count per call is
/// fixed (std::normal_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// uniform in [0,1)
    double uniform() {
        return (eng_() >> 11) * (1.0 / 9007199254740992.0); // 53-bit mantissa
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// inclusive integer range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    double normal() {
        double u1 = (static_cast<double>(eng_() >> 11) + 1.0) / 9007199254740993.0; // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    Tensor normal_tensor(std::vector<std::size_t> shape, double sigma = 1.0) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = sigma * normal();
        return t;
    }

    /// splitmix64 step: derive an independent stream id from (seed, stream).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
};

} // namespace dadiff

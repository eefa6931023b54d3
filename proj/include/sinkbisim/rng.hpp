#pragma once

// Counter-based random numbers with explicit stream splitting.
//
// Every draw is a pure function of (key, counter): the key is derived from a
// user seed and a stream id, the counter increments per draw. Distributions
// are implemented here rather than taken from <random> because the standard
// distributions are implementation-defined, and generated MDPs must be
// bit-identical across toolchains.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace sinkbisim {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer (a bijective 64-bit mixer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
    // FNV-1a, then mixed.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return mix64(h);
}

}  // namespace detail

/// Stream ids used by the library's own call sites. Keeping them here
/// documents the stream layout in one place.
namespace streams {
inline constexpr std::uint64_t kTransitions = 1;
inline constexpr std::uint64_t kChainParams = 2;
inline constexpr std::uint64_t kPerturbation = 3;
inline constexpr std::uint64_t kGreedyNoise = 4;
inline constexpr std::uint64_t kSharpness = 5;
inline constexpr std::uint64_t kTests = 99;
}  // namespace streams

class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(detail::mix64(detail::mix64(seed + detail::kGolden) ^ (stream * 0xD6E8FEB86659FD93ULL))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

    /// Independent child stream; deterministic in (this key, id), does not
    /// advance the parent.
    [[nodiscard]] CounterRng split(std::uint64_t id) const noexcept {
        CounterRng child(0, 0);
        child.key_ = detail::mix64(key_ ^ detail::mix64(id + 0x632BE59BD9B4E019ULL));
        return child;
    }

    [[nodiscard]] CounterRng split(std::string_view name) const noexcept { return split(detail::hash_name(name)); }

    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open0() noexcept { return 1.0 - uniform(); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive. Uses rejection to stay unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("CounterRng::below: n must be positive");
        const std::uint64_t limit = max() - max() % n;
        for (;;) {
            const std::uint64_t x = (*this)();
            if (x < limit) return x % n;
        }
    }

    double exponential() noexcept { return -std::log(uniform_open0()); }

    /// Standard normal via Box-Muller (one output per call).
    double normal() noexcept {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Gamma(shape, 1), Marsaglia-Tsang; shape < 1 handled by the U^{1/a} boost.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("CounterRng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform_open0(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open0();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Uniform sample from the (dim-1)-simplex (flat Dirichlet) via normalized
/// exponentials.
inline std::vector<double> sample_simplex(std::size_t dim, CounterRng& rng) {
    if (dim == 0) throw std::invalid_argument("sample_simplex: dim must be >= 1");
    std::vector<double> out(dim);
    if (dim == 1) {
        out[0] = 1.0;
        return out;
    }
    double total = 0.0;
    for (auto& x : out) {
        x = rng.exponential();
        total += x;
    }
    for (auto& x : out) x /= total;
    return out;
}

/// Symmetric Dirichlet(concentration) sample. Very small concentrations can
/// underflow every gamma draw; in that case the mass goes to one uniformly
/// chosen coordinate, which is the limiting distribution.
inline std::vector<double> sample_dirichlet(std::size_t dim, double concentration, CounterRng& rng) {
    if (dim == 0) throw std::invalid_argument("sample_dirichlet: dim must be >= 1");
    std::vector<double> out(dim);
    double total = 0.0;
    for (auto& x : out) {
        x = rng.gamma(concentration);
        total += x;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        std::fill(out.begin(), out.end(), 0.0);
        out[rng.below(dim)] = 1.0;
        return out;
    }
    for (auto& x : out) x /= total;
    return out;
}

}  // namespace sinkbisim

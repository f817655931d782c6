#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace immc {

/// Single seeded source for every stochastic draw in the library.
///
/// All Beta, Dirichlet, categorical and Bernoulli draws go through this type,
/// so a run is reproducible from its seed as long as callers keep the same
/// draw order.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform();

    /// Uniform integer in [lo, hi] inclusive.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

    bool bernoulli(double p) { return uniform() < p; }

    /// log of a Gamma(shape, 1) variate. Small shapes use the
    /// Gamma(a) = Gamma(a+1) * U^(1/a) boost so the draw stays finite in log
    /// space even when the variate itself would underflow.
    double log_gamma(double shape);

    double gamma(double shape);
    double beta(double a, double b);
    std::uint64_t poisson(double mean);

    /// Draw from Dir(concentration) into out. Entries are strictly
    /// nonnegative and sum to one.
    void dirichlet(std::span<const double> concentration, std::span<double> out);
    std::vector<double> dirichlet(std::span<const double> concentration);

    /// Index drawn proportionally to the nonnegative weights. Throws
    /// std::domain_error when the total mass is zero or not finite.
    std::size_t categorical(std::span<const double> weights);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Deterministic child seed for the k-th independent stream of a parent
/// seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k);

}  // namespace immc

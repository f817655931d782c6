#include "immc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace immc {

double Rng::uniform()
{
    // 53 random bits, open at 1.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi)
{
    std::uniform_int_distribution<std::uint64_t> dist(lo, hi);
    return dist(engine_);
}

double Rng::log_gamma(double shape)
{
    if (!(shape > 0.0))
        throw std::domain_error("gamma shape must be positive");
    if (shape < 1.0) {
        std::gamma_distribution<double> g(shape + 1.0, 1.0);
        double u = uniform();
        while (u == 0.0)
            u = uniform();
        return std::log(g(engine_)) + std::log(u) / shape;
    }
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(engine_));
}

double Rng::gamma(double shape)
{
    return std::exp(log_gamma(shape));
}

double Rng::beta(double a, double b)
{
    double la = log_gamma(a);
    double lb = log_gamma(b);
    double m = std::max(la, lb);
    double ea = std::exp(la - m);
    double eb = std::exp(lb - m);
    return ea / (ea + eb);
}

std::uint64_t Rng::poisson(double mean)
{
    if (mean <= 0.0)
        return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(engine_);
}

void Rng::dirichlet(std::span<const double> concentration, std::span<double> out)
{
    if (concentration.size() != out.size() || concentration.empty())
        throw std::invalid_argument("dirichlet: size mismatch");
    if (concentration.size() == 1) {
        out[0] = 1.0;
        return;
    }
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < concentration.size(); ++k) {
        out[k] = log_gamma(concentration[k]);
        top = std::max(top, out[k]);
    }
    double total = 0.0;
    for (double& v : out) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : out)
        v /= total;
}

std::vector<double> Rng::dirichlet(std::span<const double> concentration)
{
    std::vector<double> out(concentration.size());
    dirichlet(concentration, out);
    return out;
}

std::size_t Rng::categorical(std::span<const double> weights)
{
    double total = 0.0;
    for (double w : weights)
        total += w;
    if (!(total > 0.0) || !std::isfinite(total))
        throw std::domain_error("categorical: zero or non-finite mass");
    double u = uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] <= 0.0)
            continue;
        acc += weights[k];
        last = k;
        if (u < acc)
            return k;
    }
    return last;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace immc

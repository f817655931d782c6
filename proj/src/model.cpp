#include "immc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace immc {

void Hyperparams::validate() const
{
    if (!(gamma > 0.0))
        throw ModelError("gamma must be positive");
    if (!(alpha > 0.0))
        throw ModelError("alpha must be positive");
    if (!(kappa >= 0.0))
        throw ModelError("kappa must be nonnegative");
    if (!(sigma > 0.0))
        throw ModelError("sigma must be positive");
    if (!(lambda > 0.0))
        throw ModelError("lambda must be positive");
    if (L < 1)
        throw ModelError("truncation level L must be at least 1");
}

ModelParams::ModelParams(std::size_t L, std::size_t K)
    : L_(L), K_(K), beta_(L, 0.0), pi_(L * L, 0.0), psi_(L * K, 0.0), theta_(L * K * K, 0.0)
{
}

namespace {

double simplex_error(std::span<const double> row)
{
    double sum = 0.0;
    for (double v : row) {
        if (!(v >= 0.0))
            return std::numeric_limits<double>::infinity();
        sum += v;
    }
    return std::abs(sum - 1.0);
}

}  // namespace

double ModelParams::max_simplex_error() const
{
    double worst = simplex_error(beta_);
    for (std::size_t i = 0; i < L_; ++i) {
        worst = std::max(worst, simplex_error(pi_row(i)));
        worst = std::max(worst, simplex_error(psi_row(i)));
        for (std::size_t k = 0; k < K_; ++k)
            worst = std::max(worst, simplex_error(theta_row(i, k)));
    }
    return worst;
}

SufficientStats::SufficientStats(std::size_t L, std::size_t K)
    : L_(L), K_(K), d_(L, 0), G_(L * K * K, 0), n_(L * L, 0)
{
}

std::uint64_t SufficientStats::total_d() const
{
    std::uint64_t s = 0;
    for (auto v : d_)
        s += v;
    return s;
}

std::uint64_t SufficientStats::total_n() const
{
    std::uint64_t s = 0;
    for (auto v : n_)
        s += v;
    return s;
}

std::size_t SufficientStats::active_states() const
{
    return static_cast<std::size_t>(std::count_if(d_.begin(), d_.end(), [](auto v) { return v > 0; }));
}

std::vector<double> stick_breaking(double gamma, std::size_t L, Rng& rng)
{
    if (!(gamma > 0.0) || L < 1)
        throw ModelError("stick_breaking needs gamma > 0 and L >= 1");
    std::vector<double> w(L, 0.0);
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < L; ++i) {
        double frac = rng.beta(1.0, gamma);
        w[i] = frac * rest;
        rest -= w[i];
    }
    w[L - 1] = std::max(rest, 0.0);
    return w;
}

std::vector<double> sticky_stick_breaking(double alpha, double kappa,
                                          std::span<const double> beta, std::size_t j,
                                          Rng& rng)
{
    const std::size_t L = beta.size();
    if (j >= L)
        throw ModelError("sticky_stick_breaking: row index out of range");
    const double conc = alpha + kappa;
    std::vector<double> base(L);
    for (std::size_t i = 0; i < L; ++i)
        base[i] = (alpha * beta[i] + (i == j ? kappa : 0.0)) / conc;

    std::vector<double> w(L, 0.0);
    double rest = 1.0;
    double tail = 1.0;  // base mass of components i..L-1
    for (std::size_t i = 0; i + 1 < L; ++i) {
        tail -= base[i];
        double a = conc * base[i];
        double b = conc * std::max(tail, 0.0);
        double frac;
        if (a <= 0.0)
            frac = 0.0;
        else if (b <= 0.0)
            frac = 1.0;
        else
            frac = rng.beta(a, b);
        w[i] = frac * rest;
        rest -= w[i];
    }
    w[L - 1] = std::max(rest, 0.0);
    return w;
}

void apply_probability_floor(std::span<double> row)
{
    double total = 0.0;
    for (double& v : row) {
        v = std::max(v, kProbabilityFloor);
        total += v;
    }
    for (double& v : row)
        v /= total;
}

namespace {

void draw_row(std::span<const double> conc, std::span<double> out, Rng& rng)
{
    rng.dirichlet(conc, out);
    apply_probability_floor(out);
}

// Dirichlet shapes must be strictly positive; an exactly-zero base weight
// (underflowed beta entry) is lifted to the smallest normal double.
double shape(double v)
{
    return std::max(v, std::numeric_limits<double>::min());
}

void draw_pi(const Hyperparams& h, ModelParams& m, const SufficientStats* stats, Rng& rng)
{
    const std::size_t L = m.num_states();
    std::vector<double> conc(L);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
            double c = h.alpha * m.beta(j) + (i == j ? h.kappa : 0.0);
            if (stats)
                c += static_cast<double>(stats->n(i, j));
            conc[j] = shape(c);
        }
        draw_row(conc, m.pi_row(i), rng);
    }
}

}  // namespace

ModelParams init_priors(const Hyperparams& h, std::size_t K, Rng& rng)
{
    h.validate();
    if (K < 2)
        throw ModelError("init_priors needs K >= 2");
    const std::size_t L = h.L;
    ModelParams m(L, K);

    std::vector<double> conc(L, h.gamma / static_cast<double>(L));
    draw_row(conc, m.beta(), rng);

    draw_pi(h, m, nullptr, rng);

    std::vector<double> psi_conc(K, h.sigma / static_cast<double>(K));
    for (std::size_t i = 0; i < L; ++i)
        draw_row(psi_conc, m.psi_row(i), rng);

    std::vector<double> theta_conc(K);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t k = 0; k < K; ++k)
            theta_conc[k] = shape(h.lambda * m.psi(i, k));
        for (std::size_t from = 0; from < K; ++from)
            draw_row(theta_conc, m.theta_row(i, from), rng);
    }
    return m;
}

ModelParams resample_params(const Hyperparams& h, const SufficientStats& stats, Rng& rng)
{
    h.validate();
    const std::size_t L = stats.num_states();
    const std::size_t K = stats.num_codes();
    if (L != h.L)
        throw ModelError("resample_params: statistics were collected for a different L");
    if (K < 2)
        throw ModelError("resample_params: statistics need K >= 2");
    ModelParams m(L, K);

    std::vector<double> conc(L);
    for (std::size_t i = 0; i < L; ++i)
        conc[i] = h.gamma / static_cast<double>(L) + static_cast<double>(stats.d(i));
    draw_row(conc, m.beta(), rng);

    draw_pi(h, m, &stats, rng);

    std::vector<double> kconc(K);
    const double sigma_k = h.sigma / static_cast<double>(K);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t to = 0; to < K; ++to) {
            std::uint64_t col = 0;
            for (std::size_t from = 0; from < K; ++from)
                col += stats.G(i, from, to);
            kconc[to] = sigma_k + static_cast<double>(col);
        }
        draw_row(kconc, m.psi_row(i), rng);
    }

    const double lambda_k = h.lambda / static_cast<double>(K);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t from = 0; from < K; ++from) {
            for (std::size_t to = 0; to < K; ++to)
                kconc[to] = lambda_k + static_cast<double>(stats.G(i, from, to));
            draw_row(kconc, m.theta_row(i, from), rng);
        }
    }
    return m;
}

}  // namespace immc

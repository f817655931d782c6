#pragma once

#include "immc/corpus.hpp"
#include "immc/rng.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace immc {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed hyperparameters of the truncated model.
struct Hyperparams {
    double gamma = 1.0;   ///< top-level concentration
    double alpha = 1.0;   ///< super-state transition concentration
    double kappa = 100.0; ///< sticky self-transition bias
    double sigma = 1.0;   ///< per-super-state occupancy concentration
    double lambda = 1.0;  ///< within-super-state transition concentration
    std::size_t L = 20;   ///< truncation level
    std::uint64_t seed = 0;

    /// Throws ModelError unless every concentration is positive, kappa >= 0
    /// and L >= 1.
    void validate() const;
};

/// Parameters of the truncated model for L super states over K codes (the
/// last code is the boundary B). Stored flat, row-major.
class ModelParams {
public:
    ModelParams() = default;
    ModelParams(std::size_t L, std::size_t K);

    std::size_t num_states() const { return L_; }
    std::size_t num_codes() const { return K_; }
    std::size_t boundary() const { return K_ - 1; }

    double& beta(std::size_t i) { return beta_[i]; }
    double beta(std::size_t i) const { return beta_[i]; }
    double& pi(std::size_t i, std::size_t j) { return pi_[i * L_ + j]; }
    double pi(std::size_t i, std::size_t j) const { return pi_[i * L_ + j]; }
    double& psi(std::size_t i, std::size_t k) { return psi_[i * K_ + k]; }
    double psi(std::size_t i, std::size_t k) const { return psi_[i * K_ + k]; }
    double& theta(std::size_t i, std::size_t from, std::size_t to)
    {
        return theta_[(i * K_ + from) * K_ + to];
    }
    double theta(std::size_t i, std::size_t from, std::size_t to) const
    {
        return theta_[(i * K_ + from) * K_ + to];
    }

    std::span<double> beta() { return beta_; }
    std::span<const double> beta() const { return beta_; }
    std::span<double> pi_row(std::size_t i) { return {pi_.data() + i * L_, L_}; }
    std::span<const double> pi_row(std::size_t i) const { return {pi_.data() + i * L_, L_}; }
    std::span<double> psi_row(std::size_t i) { return {psi_.data() + i * K_, K_}; }
    std::span<const double> psi_row(std::size_t i) const { return {psi_.data() + i * K_, K_}; }
    std::span<double> theta_row(std::size_t i, std::size_t from)
    {
        return {theta_.data() + (i * K_ + from) * K_, K_};
    }
    std::span<const double> theta_row(std::size_t i, std::size_t from) const
    {
        return {theta_.data() + (i * K_ + from) * K_, K_};
    }

    const std::vector<double>& beta_data() const { return beta_; }
    const std::vector<double>& pi_data() const { return pi_; }
    const std::vector<double>& psi_data() const { return psi_; }
    const std::vector<double>& theta_data() const { return theta_; }

    /// Largest deviation of any distribution from summing to one; negative
    /// entries count as infinite deviation.
    double max_simplex_error() const;

    bool operator==(const ModelParams&) const = default;

private:
    std::size_t L_ = 0;
    std::size_t K_ = 0;
    std::vector<double> beta_;
    std::vector<double> pi_;
    std::vector<double> psi_;
    std::vector<double> theta_;
};

/// Per-position latent variables of the concatenated stream.
///
/// z[t] is the super state, omega[t] = 1 marks the first position of a new
/// segment, p[t] is the previous sub-state (B when a segment opens) and y[t]
/// the current sub-state (B at stream boundaries).
struct LatentState {
    std::vector<std::uint32_t> z;
    std::vector<std::uint8_t> omega;
    std::vector<Code> p;
    std::vector<Code> y;

    std::size_t size() const { return z.size(); }
    void resize(std::size_t T)
    {
        z.assign(T, 0);
        omega.assign(T, 0);
        p.assign(T, 0);
        y.assign(T, 0);
    }
    bool operator==(const LatentState&) const = default;
};

/// Counts collected during one forward sweep.
class SufficientStats {
public:
    SufficientStats() = default;
    SufficientStats(std::size_t L, std::size_t K);

    std::size_t num_states() const { return L_; }
    std::size_t num_codes() const { return K_; }

    std::uint64_t& d(std::size_t i) { return d_[i]; }
    std::uint64_t d(std::size_t i) const { return d_[i]; }
    std::uint64_t& G(std::size_t i, std::size_t from, std::size_t to)
    {
        return G_[(i * K_ + from) * K_ + to];
    }
    std::uint64_t G(std::size_t i, std::size_t from, std::size_t to) const
    {
        return G_[(i * K_ + from) * K_ + to];
    }
    std::uint64_t& n(std::size_t i, std::size_t j) { return n_[i * L_ + j]; }
    std::uint64_t n(std::size_t i, std::size_t j) const { return n_[i * L_ + j]; }

    std::uint64_t total_d() const;
    std::uint64_t total_n() const;
    /// Super states with d > 0.
    std::size_t active_states() const;

    bool operator==(const SufficientStats&) const = default;

private:
    std::size_t L_ = 0;
    std::size_t K_ = 0;
    std::vector<std::uint64_t> d_;
    std::vector<std::uint64_t> G_;
    std::vector<std::uint64_t> n_;
};

/// Smallest value any drawn probability may take. Sparse Dirichlet draws
/// otherwise underflow to exact zeros, which can make every super state
/// assign zero likelihood to an observed transition.
inline constexpr double kProbabilityFloor = 1e-40;

/// Raises entries below kProbabilityFloor to it and renormalizes.
void apply_probability_floor(std::span<double> row);

/// Truncated stick breaking with Beta(1, gamma) proportions; the last entry
/// takes the remaining stick.
std::vector<double> stick_breaking(double gamma, std::size_t L, Rng& rng);

/// Row j of the sticky transition matrix by stick breaking with
/// concentration alpha + kappa around the base measure
/// (alpha * beta + kappa * delta_j) / (alpha + kappa).
std::vector<double> sticky_stick_breaking(double alpha, double kappa,
                                          std::span<const double> beta, std::size_t j,
                                          Rng& rng);

/// Initial draw of all parameters from their Dirichlet priors.
/// Draw order: beta, pi rows, psi rows, then theta rows by (i, from).
ModelParams init_priors(const Hyperparams& h, std::size_t K, Rng& rng);

/// Conjugate-style posterior draw given the counts of one sweep, in the same
/// draw order as init_priors.
ModelParams resample_params(const Hyperparams& h, const SufficientStats& stats, Rng& rng);

}  // namespace immc

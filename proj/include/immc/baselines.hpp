#pragma once

#include "immc/corpus.hpp"
#include "immc/rng.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace immc {

class BaselineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kBaselineDelta = 1e-3;

/// Finite mixture of first-order Markov chains over real symbols.
struct FmmcModel {
    std::size_t n_components = 0;
    std::size_t n_symbols = 0;
    double delta = kBaselineDelta;
    std::vector<double> weights;     ///< M
    std::vector<double> initial;     ///< M x S
    std::vector<double> transitions; ///< M x S x S
    /// Per EM iteration: data log-likelihood and the smoothed objective
    /// (log-likelihood plus delta times the sum of log parameters) that EM
    /// with add-delta re-estimation never decreases.
    std::vector<double> log_likelihood_trace;
    std::vector<double> objective_trace;

    double init(std::size_t m, Code a) const { return initial[m * n_symbols + a]; }
    double trans(std::size_t m, Code a, Code b) const
    {
        return transitions[(m * n_symbols + a) * n_symbols + b];
    }
    double log_likelihood() const
    {
        return log_likelihood_trace.empty() ? 0.0 : log_likelihood_trace.back();
    }
};

/// log P(events | component m), without the mixture weight.
double fmmc_component_log_likelihood(const FmmcModel& model, std::size_t m,
                                     std::span<const Code> events);
/// log sum_m w_m P(events | m).
double fmmc_log_likelihood(const FmmcModel& model, std::span<const Code> events);
double fmmc_corpus_log_likelihood(const FmmcModel& model, const Corpus& corpus);

/// EM over whole sequences from random (Dirichlet) responsibilities. Stops
/// after max_iters or when the objective gains less than tol.
FmmcModel fmmc_fit(const Corpus& corpus, std::size_t M, std::size_t max_iters, double tol, Rng& rng,
                   double delta = kBaselineDelta);

/// Best of `restarts` EM runs by final objective; run k is seeded from
/// derive_seed(seed, k).
FmmcModel fmmc_fit_best(const Corpus& corpus, std::size_t M, std::size_t restarts,
                        std::size_t max_iters, double tol, std::uint64_t seed,
                        double delta = kBaselineDelta);

/// Component per segment; boundaries are the start offsets of segments after
/// the first (strictly increasing, inside (0, n)).
std::vector<std::size_t> fmmc_segment_given_boundaries(const FmmcModel& model,
                                                       std::span<const Code> events,
                                                       std::span<const std::size_t> boundaries);

/// Argmax next symbol under the component posterior given the prefix.
Code fmmc_predict_next(const FmmcModel& model, std::span<const Code> prefix);

struct GridSearchResult {
    std::size_t best_M = 0;
    std::map<std::size_t, double> heldout_log_likelihood;
};

/// Fits each candidate M on a 90% split and scores the remaining 10%.
GridSearchResult fmmc_grid_search(const Corpus& corpus, std::span<const std::size_t> candidates,
                                  std::size_t restarts, std::size_t max_iters, double tol,
                                  std::uint64_t seed, double delta = kBaselineDelta);

/// Global order-k Markov model with backoff to shorter histories.
struct NgramModel {
    std::size_t order = 1;
    std::size_t n_symbols = 0;
    double delta = kBaselineDelta;
    /// counts[h] maps a length-h history to next-symbol counts; h = 0..order.
    std::vector<std::map<std::vector<Code>, std::vector<std::uint64_t>>> counts;

    /// Smoothed conditional distribution for a history of exactly that length.
    std::vector<double> conditional(std::span<const Code> history) const;
};

NgramModel ngram_fit(const Corpus& corpus, std::size_t order, double delta = kBaselineDelta);
/// Longest history (at most order, at most the prefix) seen in training.
std::size_t ngram_backoff_length(const NgramModel& model, std::span<const Code> prefix);
Code ngram_predict(const NgramModel& model, std::span<const Code> prefix);

nlohmann::json fmmc_to_json(const FmmcModel& model, const Alphabet& alphabet);
FmmcModel fmmc_from_json(const nlohmann::json& j);
nlohmann::json ngram_to_json(const NgramModel& model, const Alphabet& alphabet);
NgramModel ngram_from_json(const nlohmann::json& j);

}  // namespace immc

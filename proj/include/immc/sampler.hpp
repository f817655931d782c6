#pragma once

#include "immc/corpus.hpp"
#include "immc/model.hpp"
#include "immc/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace immc {

class SamplerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Backward messages over the concatenated stream.
///
/// Row t (0 <= t <= T) is the weight of positions t..T-1 as a function of the
/// super state at position t-1. Row T is all ones; every other row is
/// normalized to sum to one and its normalizer is kept in log_norm. The
/// weights include the sticky factor kappa on every continued segment, and
/// the forward draws read kappa from here so both passes use the same value.
struct Messages {
    std::size_t T = 0;
    std::size_t L = 0;
    double kappa = 1.0;
    std::vector<double> m;
    std::vector<double> log_norm;

    Messages() = default;
    Messages(std::size_t T_, std::size_t L_) : T(T_), L(L_), m((T_ + 1) * L_, 0.0), log_norm(T_ + 1, 0.0) {}

    std::span<double> row(std::size_t t) { return {m.data() + t * L, L}; }
    std::span<const double> row(std::size_t t) const { return {m.data() + t * L, L}; }

    /// Log of the total weight of the stream summed over all latent states,
    /// reconstructed from the row normalizers. With kappa = 1 this is the log
    /// likelihood of the stream.
    double log_likelihood() const;
};

/// Backward pass. Sequences are independent given the parameters (a sequence
/// start resets the super state), so the pass runs one OpenMP task per
/// sequence. Throws SamplerError when a row has no finite positive mass.
Messages backward_pass(const ConcatenatedStream& stream, const ModelParams& params,
                       const Hyperparams& h);

/// Serial reference for backward_pass: walks the stream position by position
/// and evaluates the intra/inter double sum literally, O(T L^2) without the
/// factorization of the inter term. Kept for tests and benchmarks.
Messages backward_pass_reference(const ConcatenatedStream& stream, const ModelParams& params,
                                 const Hyperparams& h);

/// What the forward sweep knows at position t.
struct StepContext {
    std::size_t t = 0;
    std::uint32_t z_prev = 0; ///< super state at t-1
    Code r = 0;               ///< observed code at t-1 (B at a sequence start)
    Code y = 0;               ///< observed code at t
};

/// Probability that position t opens a new segment given z_prev: the share
/// of the switch weights against kappa times the continuation weight. Forced
/// to 0 when y is B and to 1 when r is B (y takes precedence).
double omega_probability(const StepContext& ctx, const ModelParams& params,
                         const Messages& messages);

std::uint8_t sample_omega(const StepContext& ctx, const ModelParams& params,
                          const Messages& messages, Rng& rng);

/// Super state at t: z_prev when the segment continues (omega = 0 or y = B);
/// otherwise a draw proportional to the entry likelihood times the message,
/// with beta as the transition prior at a sequence start and pi[z_prev] after
/// a segment switch.
std::uint32_t sample_z(const StepContext& ctx, std::uint8_t omega, const ModelParams& params,
                       const Messages& messages, Rng& rng);

/// Adds the counts of a latent state to stats.
void accumulate_stats(const LatentState& latent, SufficientStats& stats);
SufficientStats accumulate_stats(const LatentState& latent, std::size_t L, std::size_t K);

/// Forward sweep: draws the whole latent state given precomputed messages.
/// If stats is non-null the counts are accumulated during the sweep.
LatentState sample_latent(const ConcatenatedStream& stream, const ModelParams& params,
                          const Messages& messages, Rng& rng, SufficientStats* stats = nullptr);

struct IterationResult {
    LatentState latent;
    SufficientStats stats;
    double log_likelihood = 0.0;
};

/// One blocked update of the latent state: backward pass, then a forward
/// sampling sweep. Stats are fresh for this sweep.
IterationResult gibbs_iteration(const ConcatenatedStream& stream, const ModelParams& params,
                                const Hyperparams& h, Rng& rng);

struct FitOptions {
    std::size_t iterations = 250;
    std::size_t burn_in = 250;
    /// Called after every iteration with (index, log-likelihood, active states).
    std::function<void(std::size_t, double, std::size_t)> on_iteration;
};

struct FitReport {
    std::size_t iterations = 0;
    std::size_t burn_in = 0;
    /// Per iteration, Messages::log_likelihood of the sampled stream.
    std::vector<double> log_likelihood;
    std::vector<double> iteration_seconds;
    std::vector<std::size_t> active_trace;
    LatentState latent;
    SufficientStats stats;
    ModelParams params;
    std::size_t active_states = 0;
};

/// Full sampler: prior initialization, then burn_in + iterations rounds of
/// gibbs_iteration and resample_params. The reported latent state is the
/// final sample; params are the draw made from its statistics.
FitReport fit(const ConcatenatedStream& stream, const Hyperparams& h, const FitOptions& options,
              Rng& rng);

/// Filtered posterior over the super state of the last event of a prefix.
std::vector<double> filter_last_state(const ModelParams& params, double kappa,
                                      std::span<const Code> prefix);

/// Per-sequence view of a latent state.
struct SequenceSegmentation {
    std::vector<int> labels;           ///< super state per event
    std::vector<std::size_t> boundaries; ///< offsets of segment starts
};

std::vector<SequenceSegmentation> segmentation_of(const ConcatenatedStream& stream,
                                                  const LatentState& latent);

}  // namespace immc

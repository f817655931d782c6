#include "immc/sampler.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace immc {

namespace {

struct SequenceSpan {
    std::size_t first = 0; ///< stream index of the first event
    std::size_t end = 0;   ///< stream index of the closing boundary
};

void check_stream(const ConcatenatedStream& stream, const ModelParams& params)
{
    if (stream.codes.empty())
        throw SamplerError("stream is empty");
    if (params.num_codes() != stream.num_codes())
        throw SamplerError("model has " + std::to_string(params.num_codes()) +
                           " codes but the stream uses " + std::to_string(stream.num_codes()));
    if (params.num_states() == 0)
        throw SamplerError("model has no super states");
    if (stream.codes.front() != stream.boundary || stream.codes.back() != stream.boundary)
        throw SamplerError("stream must start and end with the boundary code");
    for (Code c : stream.codes)
        if (c > stream.boundary)
            throw SamplerError("stream holds a code outside the alphabet");
}

// Sequences between boundary codes; false if two boundaries are adjacent.
bool find_sequences(const ConcatenatedStream& stream, std::vector<SequenceSpan>& out)
{
    out.clear();
    const std::size_t T = stream.size();
    std::size_t t = 1;
    while (t < T) {
        if (stream.codes[t] == stream.boundary)
            return false;
        SequenceSpan span;
        span.first = t;
        while (stream.codes[t] != stream.boundary)
            ++t;
        span.end = t;
        out.push_back(span);
        ++t;
    }
    return true;
}

void normalize_row(std::span<double> row, double& log_norm, std::size_t t)
{
    double sum = 0.0;
    for (double v : row)
        sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw SamplerError("backward message at position " + std::to_string(t) +
                           " has no finite positive mass");
    const double inv = 1.0 / sum;
    for (double& v : row)
        v *= inv;
    log_norm = std::log(sum);
}

// Row at a sequence start: every previous super state sees the same value,
// the beta-weighted entry likelihood of the first event.
void start_row(const ModelParams& params, Code y, std::span<const double> next,
               std::span<double> cur, double& log_norm, std::size_t t)
{
    const std::size_t L = params.num_states();
    const std::size_t B = params.boundary();
    double s = 0.0;
    for (std::size_t j = 0; j < L; ++j)
        s += params.beta(j) * params.theta(j, B, y) * next[j];
    if (!(s > 0.0) || !std::isfinite(s))
        throw SamplerError("backward message at sequence start " + std::to_string(t) +
                           " has no finite positive mass");
    const double u = 1.0 / static_cast<double>(L);
    for (double& v : cur)
        v = u;
    log_norm = std::log(static_cast<double>(L) * s);
}

// Row at the closing boundary of a sequence.
void end_row(const ModelParams& params, Code r, std::span<const double> next,
             std::span<double> cur, double& log_norm, std::size_t t)
{
    const std::size_t L = params.num_states();
    const std::size_t B = params.boundary();
    for (std::size_t i = 0; i < L; ++i)
        cur[i] = params.theta(i, r, B) * next[i];
    normalize_row(cur, log_norm, t);
}

// Interior row, with the inter term factored as
// psi[i,r] theta[i,r,B] psi[i,B] * sum_j pi[i,j] theta[j,B,y] m[j].
void interior_row(const ModelParams& params, double kappa, Code r, Code y,
                  std::span<const double> next, std::span<double> cur, std::span<double> entry,
                  double& log_norm, std::size_t t)
{
    const std::size_t L = params.num_states();
    const std::size_t B = params.boundary();
    for (std::size_t j = 0; j < L; ++j)
        entry[j] = params.theta(j, B, y) * next[j];
    for (std::size_t i = 0; i < L; ++i) {
        const auto pi = params.pi_row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < L; ++j)
            s += pi[j] * entry[j];
        const double exit = params.theta(i, r, B) * params.psi(i, B);
        cur[i] = params.psi(i, r) * (kappa * params.theta(i, r, y) * next[i] + exit * s);
    }
    normalize_row(cur, log_norm, t);
}

}  // namespace

double Messages::log_likelihood() const
{
    if (T < 2)
        return 0.0;
    double ll = 0.0;
    for (std::size_t t = 1; t < T; ++t)
        ll += log_norm[t];
    return ll + std::log(m[L]);
}

Messages backward_pass_reference(const ConcatenatedStream& stream, const ModelParams& params,
                                 const Hyperparams& h)
{
    check_stream(stream, params);
    const std::size_t T = stream.size();
    const std::size_t L = params.num_states();
    const Code B = stream.boundary;
    Messages msg(T, L);
    msg.kappa = h.kappa;
    for (double& v : msg.row(T))
        v = 1.0;

    for (std::size_t t = T - 1; t >= 1; --t) {
        const Code y = stream.codes[t];
        const Code r = stream.codes[t - 1];
        auto next = msg.row(t + 1);
        auto cur = msg.row(t);
        if (y == B && r == B) {
            std::copy(next.begin(), next.end(), cur.begin());
            msg.log_norm[t] = 0.0;
        } else if (y == B) {
            end_row(params, r, next, cur, msg.log_norm[t], t);
        } else if (r == B) {
            start_row(params, y, next, cur, msg.log_norm[t], t);
        } else {
            for (std::size_t i = 0; i < L; ++i) {
                const double intra = h.kappa * params.theta(i, r, y) * params.psi(i, r);
                double acc = 0.0;
                for (std::size_t j = 0; j < L; ++j) {
                    const double inter = (params.psi(i, B) * params.pi(i, j)) *
                                         (params.psi(i, r) * params.theta(i, r, B) *
                                          params.theta(j, B, y));
                    acc += ((i == j ? intra : 0.0) + inter) * next[j];
                }
                cur[i] = acc;
            }
            normalize_row(cur, msg.log_norm[t], t);
        }
    }
    if (T >= 2) {
        auto first = msg.row(1);
        std::copy(first.begin(), first.end(), msg.row(0).begin());
    }
    return msg;
}

Messages backward_pass(const ConcatenatedStream& stream, const ModelParams& params,
                       const Hyperparams& h)
{
    check_stream(stream, params);
    std::vector<SequenceSpan> spans;
    if (!find_sequences(stream, spans))
        return backward_pass_reference(stream, params, h);

    const std::size_t T = stream.size();
    const std::size_t L = params.num_states();
    const double kappa = h.kappa;
    Messages msg(T, L);
    msg.kappa = kappa;
    for (double& v : msg.row(T))
        v = 1.0;

    // Rows following a closing boundary are either row T (all ones) or the
    // next sequence's start row (exactly uniform), so each sequence only needs
    // that constant and can be processed independently.
    const double uniform = 1.0 / static_cast<double>(L);
    const auto n_seq = static_cast<std::ptrdiff_t>(spans.size());
    bool failed = false;
    std::string failure;

#pragma omp parallel
    {
        std::vector<double> entry(L);
        std::vector<double> after(L);
#pragma omp for schedule(dynamic, 8)
        for (std::ptrdiff_t s = 0; s < n_seq; ++s) {
            const SequenceSpan span = spans[static_cast<std::size_t>(s)];
            try {
                std::fill(after.begin(), after.end(), span.end + 1 == T ? 1.0 : uniform);
                end_row(params, stream.codes[span.end - 1], after, msg.row(span.end),
                        msg.log_norm[span.end], span.end);
                for (std::size_t t = span.end - 1; t > span.first; --t)
                    interior_row(params, kappa, stream.codes[t - 1], stream.codes[t],
                                 msg.row(t + 1), msg.row(t), entry, msg.log_norm[t], t);
                start_row(params, stream.codes[span.first], msg.row(span.first + 1),
                          msg.row(span.first), msg.log_norm[span.first], span.first);
            } catch (const std::exception& e) {
#pragma omp critical(immc_backward_failure)
                {
                    if (!failed) {
                        failed = true;
                        failure = e.what();
                    }
                }
            }
        }
    }
    if (failed)
        throw SamplerError(failure);

    auto first = msg.row(1);
    std::copy(first.begin(), first.end(), msg.row(0).begin());
    return msg;
}

namespace {

// Unnormalized probabilities of opening a segment in each super state j
// after z_prev; returns their sum. The factor psi[z_prev, r] shared with the
// continuation is dropped.
double switch_weights(const StepContext& ctx, const ModelParams& params, const Messages& messages,
                      std::span<double> w)
{
    const std::size_t L = params.num_states();
    const std::size_t B = params.boundary();
    const std::size_t i = ctx.z_prev;
    const auto next = messages.row(ctx.t + 1);
    const double exit = params.theta(i, ctx.r, B) * params.psi(i, B);
    const auto pi = params.pi_row(i);
    double total = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
        w[j] = exit * pi[j] * params.theta(j, B, ctx.y) * next[j];
        total += w[j];
    }
    return total;
}

double continue_weight(const StepContext& ctx, const ModelParams& params, const Messages& messages)
{
    return messages.kappa * params.theta(ctx.z_prev, ctx.r, ctx.y) *
           messages.row(ctx.t + 1)[ctx.z_prev];
}

void check_context(const StepContext& ctx, const ModelParams& params, const Messages& messages)
{
    if (ctx.t + 1 > messages.T || ctx.t == 0)
        throw SamplerError("position " + std::to_string(ctx.t) + " is outside the stream");
    if (ctx.z_prev >= params.num_states())
        throw SamplerError("previous super state out of range");
    if (ctx.r >= params.num_codes() || ctx.y >= params.num_codes())
        throw SamplerError("code out of range");
}

double omega_probability_scratch(const StepContext& ctx, const ModelParams& params,
                                 const Messages& messages, std::span<double> w)
{
    const Code B = static_cast<Code>(params.boundary());
    if (ctx.y == B)
        return 0.0;
    if (ctx.r == B)
        return 1.0;
    const double w0 = continue_weight(ctx, params, messages);
    const double w1 = switch_weights(ctx, params, messages, w);
    const double total = w0 + w1;
    if (!(total > 0.0) || !std::isfinite(total))
        throw SamplerError("segment indicator at position " + std::to_string(ctx.t) +
                           " has zero likelihood for both outcomes");
    return w1 / total;
}

std::uint32_t draw_state(std::span<const double> w, Rng& rng, std::size_t t)
{
    try {
        return static_cast<std::uint32_t>(rng.categorical(w));
    } catch (const std::domain_error&) {
        throw SamplerError("super state at position " + std::to_string(t) + " has zero mass");
    }
}

std::uint32_t sample_z_scratch(const StepContext& ctx, std::uint8_t omega,
                               const ModelParams& params, const Messages& messages, Rng& rng,
                               std::span<double> w)
{
    const std::size_t L = params.num_states();
    const Code B = static_cast<Code>(params.boundary());
    if (ctx.y == B)
        return ctx.z_prev;
    const auto next = messages.row(ctx.t + 1);
    if (ctx.r == B) {
        for (std::size_t j = 0; j < L; ++j)
            w[j] = params.beta(j) * params.theta(j, B, ctx.y) * next[j];
        return draw_state(w, rng, ctx.t);
    }
    if (omega == 0)
        return ctx.z_prev;
    switch_weights(ctx, params, messages, w);
    return draw_state(w, rng, ctx.t);
}

}  // namespace

double omega_probability(const StepContext& ctx, const ModelParams& params,
                         const Messages& messages)
{
    check_context(ctx, params, messages);
    std::vector<double> w(params.num_states());
    return omega_probability_scratch(ctx, params, messages, w);
}

std::uint8_t sample_omega(const StepContext& ctx, const ModelParams& params,
                          const Messages& messages, Rng& rng)
{
    check_context(ctx, params, messages);
    const Code B = static_cast<Code>(params.boundary());
    if (ctx.y == B)
        return 0;
    if (ctx.r == B)
        return 1;
    std::vector<double> w(params.num_states());
    const double p = omega_probability_scratch(ctx, params, messages, w);
    return rng.uniform() < p ? 1 : 0;
}

std::uint32_t sample_z(const StepContext& ctx, std::uint8_t omega, const ModelParams& params,
                       const Messages& messages, Rng& rng)
{
    check_context(ctx, params, messages);
    std::vector<double> w(params.num_states());
    return sample_z_scratch(ctx, omega, params, messages, rng, w);
}

void accumulate_stats(const LatentState& latent, SufficientStats& stats)
{
    const std::size_t T = latent.size();
    const std::size_t L = stats.num_states();
    const std::size_t K = stats.num_codes();
    if (latent.omega.size() != T || latent.p.size() != T || latent.y.size() != T)
        throw SamplerError("latent state arrays are not aligned");
    const Code B = static_cast<Code>(K - 1);
    for (std::size_t t = 0; t < T; ++t) {
        if (latent.z[t] >= L)
            throw SamplerError("super state index out of range at position " + std::to_string(t));
        if (latent.y[t] >= K)
            throw SamplerError("code out of range at position " + std::to_string(t));
    }
    for (std::size_t t = 1; t < T; ++t) {
        const Code r = latent.y[t - 1];
        const Code y = latent.y[t];
        const std::uint32_t z = latent.z[t];
        if (y != B)
            ++stats.d(z);
        if (latent.omega[t] == 1) {
            ++stats.G(z, B, y);
            if (r != B) {
                const std::uint32_t zp = latent.z[t - 1];
                ++stats.n(zp, z);
                ++stats.G(zp, r, B);
            }
        } else if (!(r == B && y == B)) {
            ++stats.G(z, r, y);
        }
    }
}

SufficientStats accumulate_stats(const LatentState& latent, std::size_t L, std::size_t K)
{
    SufficientStats stats(L, K);
    accumulate_stats(latent, stats);
    return stats;
}

LatentState sample_latent(const ConcatenatedStream& stream, const ModelParams& params,
                          const Messages& messages, Rng& rng, SufficientStats* stats)
{
    const std::size_t T = stream.size();
    if (messages.T != T || messages.L != params.num_states())
        throw SamplerError("messages do not match the stream");
    const Code B = stream.boundary;
    LatentState latent;
    latent.resize(T);
    latent.y.assign(stream.codes.begin(), stream.codes.end());
    latent.p[0] = B;
    std::vector<double> w(params.num_states());

    for (std::size_t t = 1; t < T; ++t) {
        StepContext ctx{t, latent.z[t - 1], stream.codes[t - 1], stream.codes[t]};
        std::uint8_t omega;
        if (ctx.y == B)
            omega = 0;
        else if (ctx.r == B)
            omega = 1;
        else
            omega = rng.uniform() < omega_probability_scratch(ctx, params, messages, w) ? 1 : 0;
        latent.omega[t] = omega;
        latent.z[t] = sample_z_scratch(ctx, omega, params, messages, rng, w);
        latent.p[t] = omega ? B : ctx.r;

        if (stats) {
            const std::uint32_t z = latent.z[t];
            if (ctx.y != B)
                ++stats->d(z);
            if (omega) {
                ++stats->G(z, B, ctx.y);
                if (ctx.r != B) {
                    ++stats->n(ctx.z_prev, z);
                    ++stats->G(ctx.z_prev, ctx.r, B);
                }
            } else if (!(ctx.r == B && ctx.y == B)) {
                ++stats->G(z, ctx.r, ctx.y);
            }
        }
    }
    if (T >= 2)
        latent.z[0] = latent.z[1];
    return latent;
}

IterationResult gibbs_iteration(const ConcatenatedStream& stream, const ModelParams& params,
                                const Hyperparams& h, Rng& rng)
{
    IterationResult out;
    Messages msg = backward_pass(stream, params, h);
    out.log_likelihood = msg.log_likelihood();
    out.stats = SufficientStats(params.num_states(), params.num_codes());
    out.latent = sample_latent(stream, params, msg, rng, &out.stats);
    return out;
}

FitReport fit(const ConcatenatedStream& stream, const Hyperparams& h, const FitOptions& options,
              Rng& rng)
{
    if (options.iterations < 1)
        throw SamplerError("fit needs at least one iteration");
    h.validate();
    using clock = std::chrono::steady_clock;

    FitReport report;
    report.iterations = options.iterations;
    report.burn_in = options.burn_in;
    ModelParams params = init_priors(h, stream.num_codes(), rng);
    const std::size_t total = options.burn_in + options.iterations;
    for (std::size_t it = 0; it < total; ++it) {
        auto start = clock::now();
        IterationResult step = gibbs_iteration(stream, params, h, rng);
        params = resample_params(h, step.stats, rng);
        std::chrono::duration<double> elapsed = clock::now() - start;

        const std::size_t active = step.stats.active_states();
        report.log_likelihood.push_back(step.log_likelihood);
        report.iteration_seconds.push_back(elapsed.count());
        report.active_trace.push_back(active);
        if (options.on_iteration)
            options.on_iteration(it, step.log_likelihood, active);
        if (it + 1 == total) {
            report.latent = std::move(step.latent);
            report.stats = std::move(step.stats);
            report.active_states = active;
        }
    }
    report.params = std::move(params);
    return report;
}

std::vector<double> filter_last_state(const ModelParams& params, double kappa,
                                      std::span<const Code> prefix)
{
    const std::size_t L = params.num_states();
    const std::size_t B = params.boundary();
    if (prefix.empty())
        throw SamplerError("cannot filter an empty prefix");
    for (Code c : prefix)
        if (c >= B)
            throw SamplerError("prefix holds a code outside the alphabet");

    std::vector<double> f(L), next(L);
    auto normalize = [&](std::vector<double>& v) {
        double sum = 0.0;
        for (double x : v)
            sum += x;
        if (!(sum > 0.0) || !std::isfinite(sum))
            throw SamplerError("prefix has zero likelihood under the model");
        for (double& x : v)
            x /= sum;
    };
    for (std::size_t j = 0; j < L; ++j)
        f[j] = params.beta(j) * params.theta(j, B, prefix[0]);
    normalize(f);
    for (std::size_t t = 1; t < prefix.size(); ++t) {
        const Code r = prefix[t - 1];
        const Code y = prefix[t];
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < L; ++i) {
            if (f[i] == 0.0)
                continue;
            const double stay = f[i] * params.psi(i, r);
            next[i] += stay * kappa * params.theta(i, r, y);
            const double leave = stay * params.theta(i, r, B) * params.psi(i, B);
            for (std::size_t j = 0; j < L; ++j)
                next[j] += leave * params.pi(i, j) * params.theta(j, B, y);
        }
        normalize(next);
        f.swap(next);
    }
    return f;
}

std::vector<SequenceSegmentation> segmentation_of(const ConcatenatedStream& stream,
                                                  const LatentState& latent)
{
    if (latent.size() != stream.size())
        throw SamplerError("latent state does not match the stream");
    std::vector<SequenceSegmentation> out;
    SequenceSegmentation cur;
    bool open = false;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        if (stream.codes[t] == stream.boundary) {
            if (open && !cur.labels.empty())
                out.push_back(std::move(cur));
            cur = {};
            open = true;
            continue;
        }
        if (latent.omega[t] == 1)
            cur.boundaries.push_back(cur.labels.size());
        cur.labels.push_back(static_cast<int>(latent.z[t]));
    }
    return out;
}

}  // namespace immc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "immc/generator.hpp"
#include "immc/sampler.hpp"
#include "oracle.hpp"

#include <cmath>
#include <numeric>

using namespace immc;

namespace {

Hyperparams hyper(std::size_t L, double kappa)
{
    Hyperparams h;
    h.L = L;
    h.kappa = kappa;
    return h;
}

ConcatenatedStream random_stream(std::size_t n_symbols, std::size_t n_seq, std::size_t max_len, Rng& rng)
{
    std::vector<std::vector<Code>> seqs(n_seq);
    for (auto& s : seqs) {
        const std::size_t len = 1 + rng.uniform_int(0, max_len - 1);
        for (std::size_t k = 0; k < len; ++k)
            s.push_back(static_cast<Code>(rng.uniform_int(0, n_symbols - 1)));
    }
    return oracle::stream_of(n_symbols, seqs);
}

void check_latent_invariants(const ConcatenatedStream& stream, const LatentState& latent)
{
    const Code B = stream.boundary;
    REQUIRE(latent.size() == stream.size());
    for (std::size_t t = 1; t < stream.size(); ++t) {
        const Code r = stream.codes[t - 1];
        const Code y = stream.codes[t];
        CHECK(latent.y[t] == y);
        if (y == B)
            CHECK(latent.omega[t] == 0);
        else if (r == B)
            CHECK(latent.omega[t] == 1);
        if (latent.omega[t] == 0)
            CHECK(latent.z[t] == latent.z[t - 1]);
        CHECK(latent.p[t] == (latent.omega[t] ? B : r));
    }
}

}  // namespace

TEST_CASE("backward rows match a straight-line evaluation")
{
    // Stream [B, 0, 1, B], L = 2, K = 3, hand-set parameters.
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1}});
    REQUIRE(st.codes == std::vector<Code>{2, 0, 1, 2});
    ModelParams p(2, 3);
    p.beta(0) = 0.7;
    p.beta(1) = 0.3;
    p.pi(0, 0) = 0.9;
    p.pi(0, 1) = 0.1;
    p.pi(1, 0) = 0.2;
    p.pi(1, 1) = 0.8;
    const double psi[2][3] = {{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}};
    const double theta[2][3][3] = {{{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.8, 0.1, 0.1}},
                                   {{0.3, 0.3, 0.4}, {0.2, 0.2, 0.6}, {0.25, 0.7, 0.05}}};
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a) {
            p.psi(i, a) = psi[i][a];
            for (int b = 0; b < 3; ++b)
                p.theta(i, a, b) = theta[i][a][b];
        }
    const double kappa = 3.0;

    // t = 3: y = B after r = 1.
    const double m3_0 = theta[0][1][2];
    const double m3_1 = theta[1][1][2];
    // t = 2: r = 0, y = 1.
    const double m2_0 = psi[0][0] * (kappa * theta[0][0][1] * m3_0 +
                                     theta[0][0][2] * psi[0][2] *
                                         (0.9 * theta[0][2][1] * m3_0 + 0.1 * theta[1][2][1] * m3_1));
    const double m2_1 = psi[1][0] * (kappa * theta[1][0][1] * m3_1 +
                                     theta[1][0][2] * psi[1][2] *
                                         (0.2 * theta[0][2][1] * m3_0 + 0.8 * theta[1][2][1] * m3_1));
    // t = 1: sequence start, y = 0; constant in the previous state.
    const double m1 = 0.7 * theta[0][2][0] * m2_0 + 0.3 * theta[1][2][0] * m2_1;

    for (auto pass : {backward_pass, backward_pass_reference}) {
        const Messages msg = pass(st, p, hyper(2, kappa));
        CHECK(msg.kappa == kappa);
        CHECK(msg.row(4)[0] == 1.0);
        CHECK(msg.row(4)[1] == 1.0);
        CHECK(msg.row(3)[0] == doctest::Approx(m3_0 / (m3_0 + m3_1)).epsilon(1e-12));
        CHECK(msg.row(3)[1] == doctest::Approx(m3_1 / (m3_0 + m3_1)).epsilon(1e-12));
        CHECK(msg.row(2)[0] == doctest::Approx(m2_0 / (m2_0 + m2_1)).epsilon(1e-12));
        CHECK(msg.row(2)[1] == doctest::Approx(m2_1 / (m2_0 + m2_1)).epsilon(1e-12));
        CHECK(msg.row(1)[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(msg.row(1)[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(msg.log_likelihood() == doctest::Approx(std::log(m1)).epsilon(1e-12));
    }
}

TEST_CASE("L = 1 rows are all [1]")
{
    Rng rng(1);
    const ConcatenatedStream st = random_stream(3, 5, 8, rng);
    const ModelParams p = oracle::dense_params(1, 4, 2);
    const Messages msg = backward_pass(st, p, hyper(1, 100.0));
    for (std::size_t t = 0; t <= st.size(); ++t)
        CHECK(msg.row(t)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("message rows are probability vectors and both passes agree")
{
    Rng rng(3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConcatenatedStream st = random_stream(4, 6, 40, rng);
        const ModelParams p = init_priors(hyper(6, 100.0), st.num_codes(), rng);
        const Messages fast = backward_pass(st, p, hyper(6, 100.0));
        const Messages ref = backward_pass_reference(st, p, hyper(6, 100.0));
        for (std::size_t t = 0; t < st.size(); ++t) {
            const auto row = fast.row(t);
            double s = 0.0;
            for (std::size_t i = 0; i < row.size(); ++i) {
                CHECK(std::isfinite(row[i]));
                CHECK(row[i] >= 0.0);
                s += row[i];
                CHECK(row[i] == doctest::Approx(ref.row(t)[i]).epsilon(1e-9));
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        CHECK(fast.log_likelihood() == doctest::Approx(ref.log_likelihood()).epsilon(1e-9));
    }
}

TEST_CASE("log-likelihood equals the log of the enumerated total weight")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ConcatenatedStream st = oracle::stream_of(2, {{0, 1, 1}, {1, 0}});
        const ModelParams p = oracle::dense_params(2, 3, seed);
        const double kappa = 0.5 + seed;
        const oracle::Enumeration e = oracle::enumerate(st, p, kappa);
        CHECK(backward_pass(st, p, hyper(2, kappa)).log_likelihood() ==
              doctest::Approx(std::log(e.total)).epsilon(1e-10));
    }
}

TEST_CASE("degenerate parameters raise a sampler error")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1}});
    ModelParams p = oracle::dense_params(2, 3, 4);
    for (std::size_t i = 0; i < 2; ++i) {
        p.theta(i, 2, 0) = 0.0;
        p.theta(i, 2, 1) = 1.0;
    }
    CHECK_THROWS_AS(backward_pass(st, p, hyper(2, 1.0)), SamplerError);
    CHECK_THROWS_AS(backward_pass(st, oracle::dense_params(2, 4, 1), hyper(2, 1.0)), SamplerError);
}

TEST_CASE("segment indicator is forced at boundaries")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1}});
    const ModelParams p = oracle::dense_params(2, 3, 5);
    const Messages msg = backward_pass(st, p, hyper(2, 1.0));
    Rng rng(6);
    const StepContext end{3, 0, 1, 2};
    const StepContext start{1, 1, 2, 0};
    CHECK(omega_probability(end, p, msg) == 0.0);
    CHECK(omega_probability(start, p, msg) == 1.0);
    for (int k = 0; k < 100; ++k) {
        CHECK(sample_omega(end, p, msg, rng) == 0);
        CHECK(sample_omega(start, p, msg, rng) == 1);
    }
}

TEST_CASE("without kappa every interior position opens a segment")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1, 0, 0}});
    ModelParams p = oracle::dense_params(2, 3, 7);
    p.theta(0, 0, 1) = 0.0;
    p.theta(0, 0, 0) = 0.5;
    p.theta(0, 0, 2) = 0.5;
    const Messages msg = backward_pass(st, p, hyper(2, 0.0));
    const StepContext ctx{2, 0, 0, 1};
    CHECK(omega_probability(ctx, p, msg) == 1.0);
    CHECK(omega_probability(StepContext{3, 1, 1, 0}, p, msg) == 1.0);
    Rng rng(8);
    for (int k = 0; k < 50; ++k)
        CHECK(sample_omega(ctx, p, msg, rng) == 1);
}

TEST_CASE("continuation keeps the super state")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1, 0}});
    const ModelParams p = oracle::dense_params(3, 3, 9);
    const Messages msg = backward_pass(st, p, hyper(3, 1.0));
    Rng rng(10);
    for (std::uint32_t z = 0; z < 3; ++z) {
        CHECK(sample_z(StepContext{2, z, 0, 1}, 0, p, msg, rng) == z);
        CHECK(sample_z(StepContext{4, z, 0, 2}, 1, p, msg, rng) == z);
    }
    const ModelParams one = oracle::dense_params(1, 3, 11);
    const Messages m1 = backward_pass(st, one, hyper(1, 1.0));
    for (int k = 0; k < 20; ++k)
        CHECK(sample_z(StepContext{2, 0, 0, 1}, 1, one, m1, rng) == 0);
}

TEST_CASE("stats of a single segment")
{
    // [B, a, b, B] in super state 0 with a = 0, b = 1, B = 2.
    LatentState latent;
    latent.z = {0, 0, 0, 0};
    latent.omega = {0, 1, 0, 0};
    latent.p = {2, 2, 0, 1};
    latent.y = {2, 0, 1, 2};
    const SufficientStats s = accumulate_stats(latent, 2, 3);
    CHECK(s.d(0) == 2);
    CHECK(s.d(1) == 0);
    CHECK(s.G(0, 2, 0) == 1);
    CHECK(s.G(0, 0, 1) == 1);
    CHECK(s.G(0, 1, 2) == 1);
    CHECK(s.total_n() == 0);
    std::uint64_t g = 0;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b)
            g += s.G(0, a, b) + s.G(1, a, b);
    CHECK(g == 3);
}

TEST_CASE("all-boundary stream leaves stats unchanged")
{
    LatentState latent;
    latent.resize(3);
    latent.y = {2, 2, 2};
    latent.p = {2, 2, 2};
    CHECK(accumulate_stats(latent, 2, 3) == SufficientStats(2, 3));
}

TEST_CASE("stats guard indices")
{
    LatentState latent;
    latent.resize(2);
    latent.y = {2, 0};
    latent.z = {0, 5};
    CHECK_THROWS_AS(accumulate_stats(latent, 2, 3), SamplerError);
}

TEST_CASE("gibbs iteration invariants")
{
    Rng data(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ConcatenatedStream st = random_stream(3, 8, 30, data);
        const Hyperparams h = hyper(5, 10.0);
        Rng init(seed);
        const ModelParams p = init_priors(h, st.num_codes(), init);
        Rng a(100 + seed);
        Rng b(100 + seed);
        const IterationResult ra = gibbs_iteration(st, p, h, a);
        const IterationResult rb = gibbs_iteration(st, p, h, b);
        CHECK(ra.latent == rb.latent);
        CHECK(ra.stats == rb.stats);
        CHECK(ra.log_likelihood == rb.log_likelihood);
        check_latent_invariants(st, ra.latent);
        CHECK(ra.stats == accumulate_stats(ra.latent, h.L, st.num_codes()));

        std::size_t emissions = 0;
        std::size_t switches = 0;
        for (std::size_t t = 1; t < st.size(); ++t) {
            if (!st.is_boundary(t))
                ++emissions;
            if (ra.latent.omega[t] == 1 && !st.is_boundary(t - 1))
                ++switches;
        }
        CHECK(ra.stats.total_d() == emissions);
        CHECK(ra.stats.total_n() == switches);
    }
}

TEST_CASE("single-emission z marginal matches enumeration")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{1}});
    REQUIRE(st.size() == 3);
    const ModelParams p = oracle::dense_params(2, 3, 13);
    const auto e = oracle::enumerate(st, p, 100.0);
    const double w0 = p.beta(0) * p.theta(0, 2, 1) * p.theta(0, 1, 2);
    const double w1 = p.beta(1) * p.theta(1, 2, 1) * p.theta(1, 1, 2);
    CHECK(e.marginal[1][0] == doctest::Approx(w0 / (w0 + w1)).epsilon(1e-12));
    const auto cmp = oracle::compare_with_enumeration(st, p, 100.0, 200000, 14);
    CHECK(cmp.max_marginal_tv < 0.02);
}

TEST_CASE("z marginals match enumeration on small instances")
{
    struct Instance {
        std::vector<std::vector<Code>> seqs;
        double kappa;
        std::uint64_t seed;
    };
    const std::vector<Instance> cases{{{{0, 1, 1, 0}}, 2.0, 21},
                                      {{{0, 1}, {1}}, 100.0, 22},
                                      {{{1, 1, 0, 0}}, 0.0, 23}};
    for (const auto& c : cases) {
        const ConcatenatedStream st = oracle::stream_of(2, c.seqs);
        REQUIRE(st.size() <= 6);
        const ModelParams p = oracle::dense_params(2, 3, c.seed);
        const auto cmp = oracle::compare_with_enumeration(st, p, c.kappa, 200000, c.seed + 1);
        CHECK(cmp.max_marginal_tv < 0.02);
        CHECK(cmp.joint_tv < 0.02);
    }
}

TEST_CASE("fit with L = 1 keeps every event in state 0")
{
    Rng data(15);
    const ConcatenatedStream st = random_stream(3, 4, 20, data);
    Rng rng(16);
    FitOptions opt;
    opt.iterations = 5;
    opt.burn_in = 5;
    const FitReport rep = fit(st, hyper(1, 100.0), opt, rng);
    CHECK(rep.active_states == 1);
    for (auto z : rep.latent.z)
        CHECK(z == 0);
    CHECK(rep.log_likelihood.size() == 10);
    CHECK(rep.iteration_seconds.size() == 10);
    CHECK(rep.active_states <= 1);
}

TEST_CASE("fit log-likelihood trace is finite on random corpora")
{
    Rng data(17);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ConcatenatedStream st = random_stream(1 + seed % 5, 3 + seed % 4, 25, data);
        Rng rng(seed);
        FitOptions opt;
        opt.iterations = 3;
        opt.burn_in = 2;
        const FitReport rep = fit(st, hyper(4, 100.0), opt, rng);
        for (double ll : rep.log_likelihood)
            CHECK(std::isfinite(ll));
        CHECK(rep.active_states <= 4);
        check_latent_invariants(st, rep.latent);
        CHECK(rep.params.max_simplex_error() < 1e-9);
    }
}

TEST_CASE("fit is reproducible from its seed")
{
    const ConcatenatedStream st =
        concatenate(generate_corpus(default_spec(TestCaseId::I, SizePreset::small, 3)).corpus);
    FitOptions opt;
    opt.iterations = 3;
    opt.burn_in = 3;
    Rng a(5);
    Rng b(5);
    const FitReport ra = fit(st, Hyperparams{}, opt, a);
    const FitReport rb = fit(st, Hyperparams{}, opt, b);
    CHECK(ra.latent == rb.latent);
    CHECK(ra.params == rb.params);
    CHECK(ra.stats == rb.stats);
    CHECK(ra.log_likelihood == rb.log_likelihood);
    FitOptions zero;
    zero.iterations = 0;
    CHECK_THROWS_AS(fit(st, Hyperparams{}, zero, a), SamplerError);
}

TEST_CASE("filtered state posterior")
{
    // Two super states on disjoint halves of a four-symbol alphabet.
    ModelParams p(2, 5);
    for (std::size_t i = 0; i < 2; ++i) {
        p.beta(i) = 0.5;
        for (std::size_t j = 0; j < 2; ++j)
            p.pi(i, j) = i == j ? 0.9 : 0.1;
        for (std::size_t k = 0; k < 5; ++k) {
            p.psi(i, k) = 0.2;
            for (std::size_t l = 0; l < 5; ++l)
                p.theta(i, k, l) = 0.0;
        }
        const Code lo = static_cast<Code>(2 * i);
        for (std::size_t k : {std::size_t{lo}, std::size_t{lo + 1}, std::size_t{4}}) {
            p.theta(i, k, lo) = 0.45;
            p.theta(i, k, lo + 1) = 0.45;
            p.theta(i, k, 4) = 0.1;
        }
    }
    const std::vector<Code> prefix{2, 3, 3, 2};
    const auto post = filter_last_state(p, 100.0, prefix);
    CHECK(post[1] == doctest::Approx(1.0));
    CHECK(post[0] == doctest::Approx(0.0));
    const auto mixed = filter_last_state(p, 100.0, std::vector<Code>{0, 1, 2});
    CHECK(mixed[1] == doctest::Approx(1.0));
}

TEST_CASE("segmentation view")
{
    const ConcatenatedStream st = oracle::stream_of(2, {{0, 1, 1}, {1}});
    LatentState latent;
    latent.resize(st.size());
    latent.y.assign(st.codes.begin(), st.codes.end());
    latent.z = {0, 0, 1, 1, 1, 0, 0};
    latent.omega = {0, 1, 1, 0, 0, 1, 0};
    const auto seg = segmentation_of(st, latent);
    REQUIRE(seg.size() == 2);
    CHECK(seg[0].labels == std::vector<int>{0, 1, 1});
    CHECK(seg[0].boundaries == std::vector<std::size_t>{0, 1});
    CHECK(seg[1].labels == std::vector<int>{0});
}

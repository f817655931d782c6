#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "immc/model.hpp"
#include "immc/model_io.hpp"
#include "oracle.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace immc;

namespace {

double sum(std::span<const double> v)
{
    return std::accumulate(v.begin(), v.end(), 0.0);
}

bool is_simplex(std::span<const double> v, double tol)
{
    for (double x : v)
        if (!(x >= 0.0))
            return false;
    return std::abs(sum(v) - 1.0) <= tol;
}

Hyperparams small_h(std::size_t L)
{
    Hyperparams h;
    h.L = L;
    return h;
}

// Dir(conc) through std::gamma_distribution, independent of Rng::dirichlet.
std::vector<double> reference_dirichlet(std::span<const double> conc, std::mt19937_64& eng)
{
    std::vector<double> out(conc.size());
    double total = 0.0;
    for (std::size_t k = 0; k < conc.size(); ++k) {
        std::gamma_distribution<double> g(conc[k], 1.0);
        out[k] = g(eng);
        total += out[k];
    }
    for (double& v : out)
        v /= total;
    return out;
}

}  // namespace

TEST_CASE("stick breaking with L = 1 is the whole stick")
{
    Rng rng(1);
    CHECK(stick_breaking(1.0, 1, rng) == std::vector<double>{1.0});
    CHECK_THROWS_AS(stick_breaking(0.0, 3, rng), ModelError);
}

TEST_CASE("stick breaking draws are probability vectors")
{
    Rng rng(2);
    for (int k = 0; k < 200; ++k) {
        const auto w = stick_breaking(0.5 + k * 0.05, 1 + k % 30, rng);
        CHECK(is_simplex(w, 1e-12));
    }
}

TEST_CASE("first stick fraction has Beta(1,1) mean")
{
    Rng rng(3);
    const std::size_t n = 100000;
    double m = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        m += stick_breaking(1.0, 50, rng)[0];
    CHECK(std::abs(m / n - 0.5) < 0.01);
}

TEST_CASE("mass of the first ten sticks does not shrink as L grows past ten")
{
    Rng rng(4);
    const std::size_t n = 20000;
    double prev_mean = 0.0;
    double prev_sd = 0.0;
    for (std::size_t L : {11, 20, 50, 100}) {
        double m = 0.0;
        double m2 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto w = stick_breaking(1.0, L, rng);
            const double head = std::accumulate(w.begin(), w.begin() + 10, 0.0);
            m += head;
            m2 += head * head;
        }
        const double mean = m / n;
        const double sd = std::sqrt(std::max(m2 / n - mean * mean, 0.0) / n);
        if (L != 11)
            CHECK(mean >= prev_mean - 4.0 * std::hypot(sd, prev_sd));
        prev_mean = mean;
        prev_sd = sd;
    }
}

TEST_CASE("sticky stick breaking is a probability vector")
{
    Rng rng(5);
    const std::vector<double> beta{0.1, 0.2, 0.3, 0.4};
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(is_simplex(sticky_stick_breaking(1.0, 5.0, beta, j, rng), 1e-12));
    CHECK_THROWS_AS(sticky_stick_breaking(1.0, 5.0, beta, 4, rng), ModelError);
}

TEST_CASE("sticky stick breaking without kappa matches Dir(alpha beta)")
{
    Rng rng(6);
    std::mt19937_64 eng(66);
    const std::vector<double> beta{0.4, 0.3, 0.2, 0.1};
    const double alpha = 2.0;
    std::vector<double> conc(beta.size());
    for (std::size_t k = 0; k < beta.size(); ++k)
        conc[k] = alpha * beta[k];
    const std::size_t n = 100000;
    std::vector<std::vector<double>> a(beta.size()), b(beta.size());
    for (std::size_t s = 0; s < n; ++s) {
        const auto x = sticky_stick_breaking(alpha, 0.0, beta, 1, rng);
        const auto y = reference_dirichlet(conc, eng);
        for (std::size_t k = 0; k < beta.size(); ++k) {
            a[k].push_back(x[k]);
            b[k].push_back(y[k]);
        }
    }
    for (std::size_t k = 0; k < beta.size(); ++k)
        CHECK(oracle::ks_statistic(a[k], b[k]) < oracle::ks_critical(n, n, 1e-3));
}

TEST_CASE("large kappa puts the mass on the diagonal")
{
    Rng rng(7);
    const std::vector<double> beta{0.25, 0.25, 0.25, 0.25};
    double m = 0.0;
    const std::size_t n = 10000;
    for (std::size_t s = 0; s < n; ++s)
        m += sticky_stick_breaking(1.0, 1e6, beta, 2, rng)[2];
    CHECK(m / n > 0.99);
}

TEST_CASE("prior draws are probability vectors")
{
    Rng rng(8);
    for (std::size_t L : {1, 3, 20}) {
        const ModelParams p = init_priors(small_h(L), 6, rng);
        CHECK(p.num_states() == L);
        CHECK(p.num_codes() == 6);
        CHECK(p.max_simplex_error() < 1e-9);
    }
    CHECK_THROWS_AS(init_priors(small_h(2), 1, rng), ModelError);
}

TEST_CASE("L = 1 prior gives beta = [1]")
{
    Rng rng(9);
    const ModelParams p = init_priors(small_h(1), 4, rng);
    CHECK(p.beta(0) == 1.0);
}

TEST_CASE("sticky prior favors self transitions")
{
    Rng rng(10);
    Hyperparams h = small_h(5);
    h.kappa = 100.0;
    h.alpha = 1.0;
    double diag = 0.0;
    double off = 0.0;
    const std::size_t n = 10000;
    for (std::size_t s = 0; s < n; ++s) {
        const ModelParams p = init_priors(h, 3, rng);
        diag += p.pi(0, 0);
        off += p.pi(0, 1);
    }
    CHECK(diag / n > off / n);
    CHECK(diag / n > 0.9);
}

TEST_CASE("hyperparameter validation")
{
    Hyperparams h;
    CHECK_NOTHROW(h.validate());
    h.kappa = 0.0;
    CHECK_NOTHROW(h.validate());
    for (auto mutate : std::vector<void (*)(Hyperparams&)>{
             [](Hyperparams& x) { x.gamma = 0.0; }, [](Hyperparams& x) { x.alpha = -1.0; },
             [](Hyperparams& x) { x.kappa = -0.5; }, [](Hyperparams& x) { x.sigma = 0.0; },
             [](Hyperparams& x) { x.lambda = 0.0; }, [](Hyperparams& x) { x.L = 0; }}) {
        Hyperparams bad;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), ModelError);
    }
}

TEST_CASE("posterior draw concentrates on large counts")
{
    Rng rng(11);
    const Hyperparams h = small_h(4);
    SufficientStats stats(4, 3);
    stats.d(0) = 1000000;
    stats.G(1, 0, 0) = 1000000;
    double beta0 = 0.0;
    double theta = 0.0;
    const std::size_t n = 2000;
    for (std::size_t s = 0; s < n; ++s) {
        const ModelParams p = resample_params(h, stats, rng);
        CHECK(p.max_simplex_error() < 1e-9);
        beta0 += p.beta(0);
        theta += p.theta(1, 0, 0);
    }
    CHECK(beta0 / n > 0.999);
    CHECK(theta / n > 0.999);
}

TEST_CASE("posterior draw checks shapes")
{
    Rng rng(12);
    CHECK_THROWS_AS(resample_params(small_h(3), SufficientStats(4, 3), rng), ModelError);
}

TEST_CASE("posterior draw is deterministic in the seed")
{
    const Hyperparams h = small_h(3);
    SufficientStats stats(3, 4);
    stats.d(1) = 7;
    stats.G(1, 3, 0) = 2;
    stats.n(0, 1) = 3;
    Rng a(13);
    Rng b(13);
    CHECK(resample_params(h, stats, a) == resample_params(h, stats, b));
}

TEST_CASE("zero counts reproduce the prior for beta and pi")
{
    Hyperparams h = small_h(3);
    h.kappa = 0.0;
    const SufficientStats zero(3, 4);
    Rng ra(14);
    Rng rb(15);
    const std::size_t n = 10000;
    std::vector<double> beta_a, beta_b, pi_a, pi_b;
    for (std::size_t s = 0; s < n; ++s) {
        const ModelParams a = init_priors(h, 4, ra);
        const ModelParams b = resample_params(h, zero, rb);
        beta_a.push_back(a.beta(0));
        beta_b.push_back(b.beta(0));
        pi_a.push_back(a.pi(1, 2));
        pi_b.push_back(b.pi(1, 2));
    }
    CHECK(oracle::ks_statistic(beta_a, beta_b) < oracle::ks_critical(n, n, 1e-3));
    CHECK(oracle::ks_statistic(pi_a, pi_b) < oracle::ks_critical(n, n, 1e-3));
}

TEST_CASE("probability floor keeps rows on the simplex")
{
    std::vector<double> row{1.0, 0.0, 0.0};
    apply_probability_floor(row);
    CHECK(row[1] == kProbabilityFloor);
    CHECK(is_simplex(row, 1e-15));
}

TEST_CASE("stats totals")
{
    SufficientStats s(3, 4);
    s.d(0) = 2;
    s.d(2) = 5;
    s.n(0, 2) = 1;
    s.n(2, 2) = 4;
    CHECK(s.total_d() == 7);
    CHECK(s.total_n() == 5);
    CHECK(s.active_states() == 2);
}

TEST_CASE("model file round trip is exact")
{
    Rng rng(16);
    SavedModel m;
    m.hyperparams = small_h(4);
    m.hyperparams.kappa = 12.5;
    m.hyperparams.seed = 99;
    m.alphabet = Alphabet({"a", "b", "c"});
    m.params = init_priors(m.hyperparams, 4, rng);
    m.iterations_run = 17;
    const auto dir = std::filesystem::temp_directory_path() / "immc_test_model";
    std::filesystem::create_directories(dir);
    save_model(m, dir / "m.json");
    const SavedModel back = load_model(dir / "m.json");
    CHECK(back.params == m.params);
    CHECK(back.alphabet == m.alphabet);
    CHECK(back.iterations_run == 17);
    CHECK(back.hyperparams.kappa == 12.5);
    CHECK(back.hyperparams.seed == 99);
    CHECK(back.hyperparams.L == 4);
    CHECK(model_kind(load_model_document(dir / "m.json")) == "immc");
}

TEST_CASE("model file guards")
{
    Rng rng(17);
    SavedModel m;
    m.hyperparams = small_h(2);
    m.alphabet = Alphabet({"a"});
    m.params = init_priors(m.hyperparams, 2, rng);
    auto doc = model_to_json(m);
    doc["format_version"] = 2;
    CHECK_THROWS_AS(model_from_json(doc), ModelError);

    const auto dir = std::filesystem::temp_directory_path() / "immc_test_model";
    std::filesystem::create_directories(dir);
    const std::string text = model_to_json(m).dump();
    {
        std::ofstream out(dir / "truncated.json");
        out << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(load_model(dir / "truncated.json"), ModelError);
    CHECK_THROWS_AS(load_model(dir / "absent.json"), ModelError);

    auto bad = model_to_json(m);
    bad["theta"] = nlohmann::json::array();
    CHECK_THROWS_AS(model_from_json(bad), ModelError);
}

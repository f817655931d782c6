#include "immc/baselines.hpp"

#include "immc/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace immc {

using json = nlohmann::json;

namespace {

double log_sum_exp(std::span<const double> v)
{
    double top = -std::numeric_limits<double>::infinity();
    for (double x : v)
        top = std::max(top, x);
    if (!std::isfinite(top))
        return top;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - top);
    return top + std::log(s);
}

void normalize_smoothed(std::span<double> row, double delta)
{
    double total = 0.0;
    for (double& x : row) {
        x += delta;
        total += x;
    }
    for (double& x : row)
        x /= total;
}

std::size_t lowest_argmax(std::span<const double> v)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best])
            best = k;
    return best;
}

void check_events(std::span<const Code> events, std::size_t S)
{
    for (Code c : events)
        if (c >= S)
            throw BaselineError("event code " + std::to_string(c) + " outside the alphabet");
}

double log_prior(const FmmcModel& m)
{
    double s = 0.0;
    for (double w : m.weights)
        s += std::log(w);
    for (double p : m.initial)
        s += std::log(p);
    for (double p : m.transitions)
        s += std::log(p);
    return m.delta * s;
}

// Weighted count re-estimation from responsibilities (N x M).
void m_step(FmmcModel& model, const Corpus& corpus, const std::vector<double>& resp)
{
    const std::size_t M = model.n_components;
    const std::size_t S = model.n_symbols;
    std::fill(model.weights.begin(), model.weights.end(), 0.0);
    std::fill(model.initial.begin(), model.initial.end(), 0.0);
    std::fill(model.transitions.begin(), model.transitions.end(), 0.0);
    for (std::size_t n = 0; n < corpus.sequences.size(); ++n) {
        const auto& ev = corpus.sequences[n].events;
        for (std::size_t m = 0; m < M; ++m) {
            const double r = resp[n * M + m];
            model.weights[m] += r;
            if (ev.empty() || r == 0.0)
                continue;
            model.initial[m * S + ev[0]] += r;
            for (std::size_t t = 1; t < ev.size(); ++t)
                model.transitions[(m * S + ev[t - 1]) * S + ev[t]] += r;
        }
    }
    normalize_smoothed(model.weights, model.delta);
    for (std::size_t m = 0; m < M; ++m) {
        normalize_smoothed(std::span<double>(model.initial).subspan(m * S, S), model.delta);
        for (std::size_t a = 0; a < S; ++a)
            normalize_smoothed(std::span<double>(model.transitions).subspan((m * S + a) * S, S),
                               model.delta);
    }
}

// Fills responsibilities and returns the data log-likelihood.
double e_step(const FmmcModel& model, const Corpus& corpus, std::vector<double>& resp)
{
    const std::size_t M = model.n_components;
    std::vector<double> lp(M);
    double total = 0.0;
    for (std::size_t n = 0; n < corpus.sequences.size(); ++n) {
        const auto& ev = corpus.sequences[n].events;
        for (std::size_t m = 0; m < M; ++m)
            lp[m] = std::log(model.weights[m]) + fmmc_component_log_likelihood(model, m, ev);
        const double norm = log_sum_exp(lp);
        total += norm;
        for (std::size_t m = 0; m < M; ++m)
            resp[n * M + m] = std::exp(lp[m] - norm);
    }
    return total;
}

}  // namespace

double fmmc_component_log_likelihood(const FmmcModel& model, std::size_t m,
                                     std::span<const Code> events)
{
    if (events.empty())
        return 0.0;
    double s = std::log(model.init(m, events[0]));
    for (std::size_t t = 1; t < events.size(); ++t)
        s += std::log(model.trans(m, events[t - 1], events[t]));
    return s;
}

double fmmc_log_likelihood(const FmmcModel& model, std::span<const Code> events)
{
    check_events(events, model.n_symbols);
    std::vector<double> lp(model.n_components);
    for (std::size_t m = 0; m < model.n_components; ++m)
        lp[m] = std::log(model.weights[m]) + fmmc_component_log_likelihood(model, m, events);
    return log_sum_exp(lp);
}

double fmmc_corpus_log_likelihood(const FmmcModel& model, const Corpus& corpus)
{
    double s = 0.0;
    for (const auto& seq : corpus.sequences)
        s += fmmc_log_likelihood(model, seq.events);
    return s;
}

FmmcModel fmmc_fit(const Corpus& corpus, std::size_t M, std::size_t max_iters, double tol, Rng& rng,
                   double delta)
{
    if (M < 1)
        throw BaselineError("FMMC needs at least one component");
    if (corpus.sequences.empty() || corpus.alphabet.size() == 0)
        throw BaselineError("FMMC needs a non-empty corpus");
    if (!(delta > 0.0))
        throw BaselineError("smoothing constant must be positive");
    if (max_iters < 1)
        throw BaselineError("FMMC needs at least one EM iteration");
    for (const auto& seq : corpus.sequences)
        check_events(seq.events, corpus.alphabet.size());

    FmmcModel model;
    model.n_components = M;
    model.n_symbols = corpus.alphabet.size();
    model.delta = delta;
    const std::size_t S = model.n_symbols;
    model.weights.assign(M, 0.0);
    model.initial.assign(M * S, 0.0);
    model.transitions.assign(M * S * S, 0.0);

    const std::size_t N = corpus.sequences.size();
    std::vector<double> resp(N * M);
    const std::vector<double> flat(M, 1.0);
    for (std::size_t n = 0; n < N; ++n)
        rng.dirichlet(flat, std::span<double>(resp).subspan(n * M, M));

    for (std::size_t it = 0; it < max_iters; ++it) {
        m_step(model, corpus, resp);
        const double ll = e_step(model, corpus, resp);
        const double obj = ll + log_prior(model);
        const bool converged = !model.objective_trace.empty() &&
                               obj - model.objective_trace.back() < tol;
        model.log_likelihood_trace.push_back(ll);
        model.objective_trace.push_back(obj);
        if (converged)
            break;
    }
    return model;
}

FmmcModel fmmc_fit_best(const Corpus& corpus, std::size_t M, std::size_t restarts,
                        std::size_t max_iters, double tol, std::uint64_t seed, double delta)
{
    if (restarts < 1)
        throw BaselineError("FMMC needs at least one restart");
    FmmcModel best;
    for (std::size_t k = 0; k < restarts; ++k) {
        Rng rng(derive_seed(seed, k));
        FmmcModel m = fmmc_fit(corpus, M, max_iters, tol, rng, delta);
        if (k == 0 || m.objective_trace.back() > best.objective_trace.back())
            best = std::move(m);
    }
    return best;
}

std::vector<std::size_t> fmmc_segment_given_boundaries(const FmmcModel& model,
                                                       std::span<const Code> events,
                                                       std::span<const std::size_t> boundaries)
{
    check_events(events, model.n_symbols);
    std::vector<std::size_t> cuts{0};
    for (std::size_t b : boundaries) {
        if (b <= cuts.back() || b >= events.size())
            throw BaselineError("segment boundaries must be increasing split points inside the sequence");
        cuts.push_back(b);
    }
    cuts.push_back(events.size());
    std::vector<std::size_t> labels;
    std::vector<double> lp(model.n_components);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto seg = events.subspan(cuts[k], cuts[k + 1] - cuts[k]);
        for (std::size_t m = 0; m < model.n_components; ++m)
            lp[m] = std::log(model.weights[m]) + fmmc_component_log_likelihood(model, m, seg);
        labels.push_back(lowest_argmax(lp));
    }
    return labels;
}

Code fmmc_predict_next(const FmmcModel& model, std::span<const Code> prefix)
{
    if (prefix.empty())
        throw BaselineError("prediction needs a non-empty prefix");
    check_events(prefix, model.n_symbols);
    const std::size_t M = model.n_components;
    const std::size_t S = model.n_symbols;
    std::vector<double> lp(M);
    for (std::size_t m = 0; m < M; ++m)
        lp[m] = std::log(model.weights[m]) + fmmc_component_log_likelihood(model, m, prefix);
    const double norm = log_sum_exp(lp);
    std::vector<double> score(S, 0.0);
    const Code last = prefix.back();
    for (std::size_t m = 0; m < M; ++m) {
        const double post = std::exp(lp[m] - norm);
        for (std::size_t j = 0; j < S; ++j)
            score[j] += post * model.trans(m, last, static_cast<Code>(j));
    }
    return static_cast<Code>(lowest_argmax(score));
}

GridSearchResult fmmc_grid_search(const Corpus& corpus, std::span<const std::size_t> candidates,
                                  std::size_t restarts, std::size_t max_iters, double tol,
                                  std::uint64_t seed, double delta)
{
    if (candidates.empty())
        throw BaselineError("grid search needs at least one candidate size");
    if (corpus.sequences.size() < 2)
        throw BaselineError("grid search needs at least two sequences");
    auto [train, heldout] = split_train_test(corpus, 0.1, seed);
    GridSearchResult result;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t M : candidates) {
        FmmcModel m = fmmc_fit_best(train, M, restarts, max_iters, tol, derive_seed(seed, M), delta);
        const double ll = fmmc_corpus_log_likelihood(m, heldout);
        result.heldout_log_likelihood[M] = ll;
        if (result.best_M == 0 || ll > best) {
            best = ll;
            result.best_M = M;
        }
    }
    return result;
}

std::vector<double> NgramModel::conditional(std::span<const Code> history) const
{
    std::vector<double> p(n_symbols, 0.0);
    if (history.size() < counts.size()) {
        auto it = counts[history.size()].find(std::vector<Code>(history.begin(), history.end()));
        if (it != counts[history.size()].end())
            for (std::size_t j = 0; j < n_symbols; ++j)
                p[j] = static_cast<double>(it->second[j]);
    }
    normalize_smoothed(p, delta);
    return p;
}

NgramModel ngram_fit(const Corpus& corpus, std::size_t order, double delta)
{
    if (order < 1)
        throw BaselineError("n-gram order must be at least 1");
    if (!(delta > 0.0))
        throw BaselineError("smoothing constant must be positive");
    NgramModel model;
    model.order = order;
    model.n_symbols = corpus.alphabet.size();
    model.delta = delta;
    model.counts.resize(order + 1);
    const std::size_t S = model.n_symbols;
    for (const auto& seq : corpus.sequences) {
        const auto& ev = seq.events;
        check_events(ev, S);
        for (std::size_t t = 0; t < ev.size(); ++t) {
            for (std::size_t h = 0; h <= std::min(order, t); ++h) {
                std::vector<Code> key(ev.begin() + static_cast<std::ptrdiff_t>(t - h),
                                      ev.begin() + static_cast<std::ptrdiff_t>(t));
                auto& row = model.counts[h][key];
                if (row.empty())
                    row.assign(S, 0);
                ++row[ev[t]];
            }
        }
    }
    return model;
}

std::size_t ngram_backoff_length(const NgramModel& model, std::span<const Code> prefix)
{
    for (std::size_t h = std::min(model.order, prefix.size()); h > 0; --h) {
        std::vector<Code> key(prefix.end() - static_cast<std::ptrdiff_t>(h), prefix.end());
        if (model.counts[h].contains(key))
            return h;
    }
    return 0;
}

Code ngram_predict(const NgramModel& model, std::span<const Code> prefix)
{
    check_events(prefix, model.n_symbols);
    if (model.n_symbols == 0)
        throw BaselineError("n-gram model has an empty alphabet");
    const std::size_t h = ngram_backoff_length(model, prefix);
    const auto p = model.conditional(prefix.subspan(prefix.size() - h));
    return static_cast<Code>(lowest_argmax(p));
}

json fmmc_to_json(const FmmcModel& model, const Alphabet& alphabet)
{
    const std::size_t M = model.n_components;
    const std::size_t S = model.n_symbols;
    json initial = json::array(), transitions = json::array();
    for (std::size_t m = 0; m < M; ++m) {
        initial.push_back(std::vector<double>(model.initial.begin() + m * S,
                                              model.initial.begin() + (m + 1) * S));
        json rows = json::array();
        for (std::size_t a = 0; a < S; ++a) {
            auto first = model.transitions.begin() + static_cast<std::ptrdiff_t>((m * S + a) * S);
            rows.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(S)));
        }
        transitions.push_back(std::move(rows));
    }
    return json{{"format_version", kModelFormatVersion},
                {"model_kind", "fmmc"},
                {"alphabet", alphabet.symbols()},
                {"n_components", M},
                {"delta", model.delta},
                {"weights", model.weights},
                {"initial", std::move(initial)},
                {"transitions", std::move(transitions)},
                {"log_likelihood", model.log_likelihood()}};
}

FmmcModel fmmc_from_json(const json& j)
{
    try {
        if (j.at("model_kind").get<std::string>() != "fmmc")
            throw BaselineError("document does not hold an fmmc model");
        FmmcModel m;
        m.n_symbols = j.at("alphabet").size();
        m.n_components = j.at("n_components").get<std::size_t>();
        m.delta = j.at("delta").get<double>();
        m.weights = j.at("weights").get<std::vector<double>>();
        const std::size_t M = m.n_components;
        const std::size_t S = m.n_symbols;
        const auto& init = j.at("initial");
        const auto& trans = j.at("transitions");
        if (m.weights.size() != M || init.size() != M || trans.size() != M)
            throw BaselineError("fmmc document has the wrong shape");
        for (std::size_t k = 0; k < M; ++k) {
            auto row = init[k].get<std::vector<double>>();
            if (row.size() != S || trans[k].size() != S)
                throw BaselineError("fmmc document has the wrong shape");
            m.initial.insert(m.initial.end(), row.begin(), row.end());
            for (std::size_t a = 0; a < S; ++a) {
                auto t = trans[k][a].get<std::vector<double>>();
                if (t.size() != S)
                    throw BaselineError("fmmc document has the wrong shape");
                m.transitions.insert(m.transitions.end(), t.begin(), t.end());
            }
        }
        m.log_likelihood_trace.push_back(j.value("log_likelihood", 0.0));
        return m;
    } catch (const json::exception& e) {
        throw BaselineError(std::string("corrupt fmmc document: ") + e.what());
    }
}

json ngram_to_json(const NgramModel& model, const Alphabet& alphabet)
{
    json tables = json::array();
    for (const auto& level : model.counts)
        for (const auto& [history, counts] : level)
            tables.push_back(json{{"history", history}, {"counts", counts}});
    return json{{"format_version", kModelFormatVersion},
                {"model_kind", "ngram"},
                {"alphabet", alphabet.symbols()},
                {"order", model.order},
                {"delta", model.delta},
                {"tables", std::move(tables)}};
}

NgramModel ngram_from_json(const json& j)
{
    try {
        if (j.at("model_kind").get<std::string>() != "ngram")
            throw BaselineError("document does not hold an ngram model");
        NgramModel m;
        m.n_symbols = j.at("alphabet").size();
        m.order = j.at("order").get<std::size_t>();
        m.delta = j.at("delta").get<double>();
        if (m.order < 1)
            throw BaselineError("n-gram order must be at least 1");
        m.counts.resize(m.order + 1);
        for (const auto& t : j.at("tables")) {
            auto history = t.at("history").get<std::vector<Code>>();
            auto counts = t.at("counts").get<std::vector<std::uint64_t>>();
            if (history.size() > m.order || counts.size() != m.n_symbols)
                throw BaselineError("ngram table has the wrong shape");
            m.counts[history.size()][std::move(history)] = std::move(counts);
        }
        return m;
    } catch (const json::exception& e) {
        throw BaselineError(std::string("corrupt ngram document: ") + e.what());
    }
}

}  // namespace immc

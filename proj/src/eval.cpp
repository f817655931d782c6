#include "immc/eval.hpp"

#include "immc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace immc {

using json = nlohmann::json;

std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight)
{
    const std::size_t n = weight.size();
    if (n == 0)
        return {};
    double top = 0.0;
    for (const auto& row : weight) {
        if (row.size() != n)
            throw EvalError("assignment matrix must be square");
        for (double w : row)
            top = std::max(top, w);
    }
    // Kuhn-Munkres on cost = top - weight, 1-based potentials.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j])
                    continue;
                const double cur = (top - weight[i0 - 1][j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0)
            assignment[p[j] - 1] = j - 1;
    return assignment;
}

SegmentationScore segmentation_error(std::span<const int> predicted, std::span<const int> truth)
{
    if (predicted.size() != truth.size())
        throw EvalError("predicted and true labels differ in length (" +
                        std::to_string(predicted.size()) + " vs " + std::to_string(truth.size()) + ")");
    SegmentationScore score;
    score.total = truth.size();
    if (score.total == 0)
        return score;

    auto distinct = [](std::span<const int> v) {
        std::vector<int> out(v.begin(), v.end());
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };
    score.predicted_labels = distinct(predicted);
    score.true_labels = distinct(truth);
    const std::size_t P = score.predicted_labels.size();
    const std::size_t Q = score.true_labels.size();
    auto index_of = [](const std::vector<int>& labels, int v) {
        return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), v) - labels.begin());
    };
    score.confusion.assign(P, std::vector<std::uint64_t>(Q, 0));
    for (std::size_t t = 0; t < truth.size(); ++t)
        ++score.confusion[index_of(score.predicted_labels, predicted[t])]
                         [index_of(score.true_labels, truth[t])];

    const std::size_t n = std::max(P, Q);
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < P; ++a)
        for (std::size_t b = 0; b < Q; ++b)
            w[a][b] = static_cast<double>(score.confusion[a][b]);
    auto assignment = max_weight_assignment(w);
    for (std::size_t a = 0; a < P; ++a) {
        const std::size_t b = assignment[a];
        if (b >= Q)
            continue;
        score.matching[score.predicted_labels[a]] = score.true_labels[b];
        score.agreed += score.confusion[a][b];
    }
    score.error_rate =
        1.0 - static_cast<double>(score.agreed) / static_cast<double>(score.total);
    return score;
}

json score_to_json(const SegmentationScore& score)
{
    json matching = json::array();
    for (const auto& [pred, truth] : score.matching)
        matching.push_back(json{{"predicted", pred}, {"true", truth}});
    return json{{"error_rate", score.error_rate},
                {"definition", "mismatched-event fraction under optimal injective label matching"},
                {"total", score.total},
                {"agreed", score.agreed},
                {"predicted_labels", score.predicted_labels},
                {"true_labels", score.true_labels},
                {"confusion", score.confusion},
                {"matching", matching}};
}

std::size_t argmax(std::span<const double> v)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best])
            best = k;
    return best;
}

Code immc_predict_next(const ModelParams& params, const Hyperparams& h,
                       std::span<const Code> prefix)
{
    const auto posterior = filter_last_state(params, h.kappa, prefix);
    const std::size_t S = params.boundary();
    const Code last = prefix.back();
    std::vector<double> score(S, 0.0);
    for (std::size_t i = 0; i < params.num_states(); ++i) {
        if (posterior[i] == 0.0)
            continue;
        const auto row = params.theta_row(i, last);
        for (std::size_t j = 0; j < S; ++j)
            score[j] += posterior[i] * row[j];
    }
    return static_cast<Code>(argmax(score));
}

double prediction_accuracy(const Predictor& predict, const Corpus& test, std::uint64_t seed)
{
    if (test.sequences.empty())
        throw EvalError("prediction needs at least one test sequence");
    std::size_t correct = 0;
    for (std::size_t s = 0; s < test.sequences.size(); ++s) {
        const auto cut = cut_for_prediction(test.sequences[s], derive_seed(seed, s));
        if (predict(cut.prefix.events) == cut.target)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.sequences.size());
}

Summary summarize(std::span<const double> values)
{
    Summary s;
    s.runs = values.size();
    if (values.empty())
        return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values)
        var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s.min = *lo;
    s.max = *hi;
    return s;
}

json summary_to_json(const Summary& s)
{
    return json{{"runs", s.runs}, {"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

json run_report(const std::vector<FitReport>& fits, std::span<const double> error_rates,
                std::span<const double> accuracies)
{
    if (fits.empty())
        throw EvalError("run report needs at least one run");
    json runs = json::array();
    std::vector<double> iteration_times;
    for (std::size_t k = 0; k < fits.size(); ++k) {
        const auto& f = fits[k];
        json row{{"run", k},
                 {"iterations", f.iterations},
                 {"burn_in", f.burn_in},
                 {"active_states", f.active_states},
                 {"final_log_joint", f.log_likelihood.empty() ? 0.0 : f.log_likelihood.back()},
                 {"log_joint", f.log_likelihood},
                 {"iteration_seconds", f.iteration_seconds}};
        if (k < error_rates.size())
            row["error_rate"] = error_rates[k];
        if (k < accuracies.size())
            row["accuracy"] = accuracies[k];
        runs.push_back(std::move(row));
        iteration_times.insert(iteration_times.end(), f.iteration_seconds.begin(),
                               f.iteration_seconds.end());
    }
    json aggregate{{"runs", fits.size()}, {"iteration_seconds", summary_to_json(summarize(iteration_times))}};
    if (!error_rates.empty())
        aggregate["error_rate"] = summary_to_json(summarize(error_rates));
    if (!accuracies.empty())
        aggregate["accuracy"] = summary_to_json(summarize(accuracies));
    return json{{"runs", std::move(runs)}, {"aggregate", std::move(aggregate)}};
}

std::string table_csv(const std::vector<TableRow>& rows)
{
    std::ostringstream out;
    out << "method,testcase,size,runs,mean_error,stddev_error\n";
    out.precision(6);
    for (const auto& r : rows)
        out << r.method << ',' << r.testcase << ',' << r.size << ',' << r.error.runs << ','
            << r.error.mean << ',' << r.error.stddev << '\n';
    return out.str();
}

}  // namespace immc

#pragma once

#include "immc/corpus.hpp"
#include "immc/model.hpp"
#include "immc/sampler.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace immc {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Column index assigned to each row by a maximum-weight perfect matching on
/// a square matrix (Hungarian algorithm, O(n^3)).
std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight);

struct SegmentationScore {
    double error_rate = 0.0;
    std::size_t total = 0;
    std::size_t agreed = 0;
    std::vector<int> predicted_labels;          ///< distinct predicted labels, sorted
    std::vector<int> true_labels;               ///< distinct true labels, sorted
    std::vector<std::vector<std::uint64_t>> confusion; ///< predicted x true counts
    std::map<int, int> matching;                ///< predicted label -> true label
};

/// Fraction of events whose label disagrees under the injective
/// predicted-to-true label matching that maximizes agreement. Predicted
/// labels left unmatched count as errors.
SegmentationScore segmentation_error(std::span<const int> predicted, std::span<const int> truth);
nlohmann::json score_to_json(const SegmentationScore& score);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

/// MAP next observation: argmax_j sum_i P(z_last = i | prefix) theta[i, last, j]
/// over real symbols j.
Code immc_predict_next(const ModelParams& params, const Hyperparams& h,
                       std::span<const Code> prefix);

using Predictor = std::function<Code(std::span<const Code>)>;

/// Cuts every test sequence (seeded per sequence from seed), predicts the
/// event after the cut and returns the fraction predicted correctly.
double prediction_accuracy(const Predictor& predict, const Corpus& test, std::uint64_t seed);

struct Summary {
    std::size_t runs = 0;
    double mean = 0.0;
    double stddev = 0.0; ///< population standard deviation
    double min = 0.0;
    double max = 0.0;
};

Summary summarize(std::span<const double> values);
nlohmann::json summary_to_json(const Summary& s);

/// Report over several fits: per-run rows plus aggregates of error rates,
/// accuracies (either may be empty) and per-iteration wall time.
nlohmann::json run_report(const std::vector<FitReport>& fits, std::span<const double> error_rates,
                          std::span<const double> accuracies);

struct TableRow {
    std::string method;
    std::string testcase;
    std::string size;
    Summary error;
};

/// Method x test case x size error table as CSV.
std::string table_csv(const std::vector<TableRow>& rows);

}  // namespace immc

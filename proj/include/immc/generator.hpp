#pragma once

#include "immc/corpus.hpp"
#include "immc/model.hpp"
#include "immc/rng.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace immc {

class GeneratorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A ground-truth Markov process over a subset of the alphabet. A segment
/// starts in a state drawn from entry and leaves the process from state k
/// with probability 1 - sum(transition row k).
struct GroundTruthProcess {
    std::string name;
    std::vector<Code> states;
    std::vector<double> entry;
    std::vector<double> transitions; ///< states.size() squared, row-major

    std::size_t size() const { return states.size(); }
    double transition(std::size_t from, std::size_t to) const
    {
        return transitions[from * states.size() + to];
    }
    double exit_probability(std::size_t from) const;

    /// Throws GeneratorError unless entry is a distribution, every row has
    /// nonnegative mass at most one, and an exit is reachable from every
    /// state reachable from an entry.
    void validate() const;
};

/// One directed edge of a process table, by symbol.
struct Edge {
    std::string from;
    std::string to;
    double p;
};

/// Builds and validates a process from symbol-labelled entry weights and
/// edges. Symbols are interned into alphabet.
GroundTruthProcess make_process(std::string name, Alphabet& alphabet,
                                const std::vector<std::pair<std::string, double>>& entry,
                                const std::vector<Edge>& edges);

enum class TestCaseId { I, II, III };
TestCaseId parse_testcase(const std::string& name);
std::string testcase_name(TestCaseId id);

struct TestCase {
    Alphabet alphabet;
    std::vector<GroundTruthProcess> processes;
};

/// Built-in benchmark processes. II and III are fixed graphs with shared state
/// spaces; I is three processes on pairwise-disjoint 4-state spaces.
TestCase builtin_testcase(TestCaseId which);

enum class SizePreset { small, mid, large };
SizePreset parse_size(const std::string& name);
std::size_t target_observations(SizePreset size);

struct SyntheticSpec {
    Alphabet alphabet;
    std::vector<GroundTruthProcess> processes;
    std::vector<double> mixing; ///< empty means uniform
    std::size_t target_observations = 2500;
    double mean_segments_per_sequence = 4.0;
    std::uint64_t seed = 0;

    void validate() const;
};

SyntheticSpec default_spec(TestCaseId which, SizePreset size, std::uint64_t seed);

struct SyntheticCorpus {
    Corpus corpus;
    std::vector<LabeledSequence> truth; ///< generating process index per event
};

inline constexpr std::size_t kMaxSegmentLength = 1000000;

/// Visits states from an entry draw until an exit is drawn.
std::vector<Code> sample_segment(const GroundTruthProcess& proc, Rng& rng);

/// Assembles sequences of 1 + Poisson(mean - 1) segments each, processes
/// drawn i.i.d. from mixing, until target_observations is reached. The
/// sequence in progress when the target is hit is closed there.
SyntheticCorpus generate_corpus(const SyntheticSpec& spec);

/// Forward simulation of the truncated generative process: a sequence
/// starts in z ~ beta, emits from theta[z, B, .]; after each event the
/// segment ends with theta[z, y, B], and then either the sequence ends (with
/// probability end_probability) or a new super state is drawn from pi[z].
/// Truth labels are the super states.
SyntheticCorpus sample_from_immc(const ModelParams& params, const Alphabet& alphabet,
                                 std::size_t n_sequences, Rng& rng,
                                 double end_probability = 0.5);

nlohmann::json process_to_json(const GroundTruthProcess& proc, const Alphabet& alphabet);
GroundTruthProcess process_from_json(const nlohmann::json& j, Alphabet& alphabet);
nlohmann::json testcase_to_json(const TestCase& tc);

/// Spec file: {"alphabet": [...]?, "processes": [...] | "testcase": "III",
/// "mixing": [...], "target_observations": n, "mean_segments_per_sequence": x,
/// "seed": s}.
SyntheticSpec spec_from_json(const nlohmann::json& j);
SyntheticSpec load_spec(const std::filesystem::path& path);

}  // namespace immc

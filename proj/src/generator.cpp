#include "immc/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace immc {

using json = nlohmann::json;

namespace {

constexpr double kTolerance = 1e-9;

}  // namespace

double GroundTruthProcess::exit_probability(std::size_t from) const
{
    double s = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k)
        s += transition(from, k);
    return std::max(0.0, 1.0 - s);
}

void GroundTruthProcess::validate() const
{
    const std::size_t n = states.size();
    if (n == 0)
        throw GeneratorError("process '" + name + "' has no states");
    if (entry.size() != n || transitions.size() != n * n)
        throw GeneratorError("process '" + name + "' has inconsistent table sizes");
    double esum = 0.0;
    for (double e : entry) {
        if (!(e >= 0.0))
            throw GeneratorError("process '" + name + "' has a negative entry probability");
        esum += e;
    }
    if (std::abs(esum - 1.0) > kTolerance)
        throw GeneratorError("entry distribution of process '" + name + "' does not sum to 1");
    for (std::size_t a = 0; a < n; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            if (!(transition(a, b) >= 0.0))
                throw GeneratorError("process '" + name + "' has a negative transition");
            s += transition(a, b);
        }
        if (s > 1.0 + kTolerance)
            throw GeneratorError("a transition row of process '" + name + "' exceeds 1");
    }
    std::vector<Code> sorted = states;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw GeneratorError("process '" + name + "' lists a state twice");

    // Every state reachable from an entry must be able to reach an exit.
    std::vector<bool> reach(n, false);
    std::vector<std::size_t> stack;
    for (std::size_t k = 0; k < n; ++k)
        if (entry[k] > 0.0) {
            reach[k] = true;
            stack.push_back(k);
        }
    while (!stack.empty()) {
        std::size_t a = stack.back();
        stack.pop_back();
        for (std::size_t b = 0; b < n; ++b)
            if (transition(a, b) > 0.0 && !reach[b]) {
                reach[b] = true;
                stack.push_back(b);
            }
    }
    std::vector<bool> exits(n, false);
    bool changed = true;
    for (std::size_t a = 0; a < n; ++a)
        exits[a] = exit_probability(a) > kTolerance;
    while (changed) {
        changed = false;
        for (std::size_t a = 0; a < n; ++a) {
            if (exits[a])
                continue;
            for (std::size_t b = 0; b < n; ++b)
                if (transition(a, b) > 0.0 && exits[b]) {
                    exits[a] = true;
                    changed = true;
                    break;
                }
        }
    }
    for (std::size_t a = 0; a < n; ++a)
        if (reach[a] && !exits[a])
            throw GeneratorError("process '" + name + "' can get trapped without an exit");
}

GroundTruthProcess make_process(std::string name, Alphabet& alphabet,
                                const std::vector<std::pair<std::string, double>>& entry,
                                const std::vector<Edge>& edges)
{
    GroundTruthProcess proc;
    proc.name = std::move(name);
    auto local = [&](const std::string& sym) {
        Code c = alphabet.intern(sym);
        auto it = std::find(proc.states.begin(), proc.states.end(), c);
        if (it != proc.states.end())
            return static_cast<std::size_t>(it - proc.states.begin());
        proc.states.push_back(c);
        return proc.states.size() - 1;
    };
    for (const auto& [sym, p] : entry)
        local(sym);
    for (const auto& e : edges) {
        local(e.from);
        local(e.to);
    }
    const std::size_t n = proc.states.size();
    proc.entry.assign(n, 0.0);
    proc.transitions.assign(n * n, 0.0);
    for (const auto& [sym, p] : entry)
        proc.entry[local(sym)] += p;
    for (const auto& e : edges)
        proc.transitions[local(e.from) * n + local(e.to)] += e.p;
    proc.validate();
    return proc;
}

TestCaseId parse_testcase(const std::string& name)
{
    if (name == "I" || name == "1")
        return TestCaseId::I;
    if (name == "II" || name == "2")
        return TestCaseId::II;
    if (name == "III" || name == "3")
        return TestCaseId::III;
    throw GeneratorError("unknown test case '" + name + "' (expected I, II or III)");
}

std::string testcase_name(TestCaseId id)
{
    switch (id) {
    case TestCaseId::I: return "I";
    case TestCaseId::II: return "II";
    case TestCaseId::III: return "III";
    }
    return "?";
}

namespace {

Alphabet hex_alphabet(int last)
{
    std::vector<std::string> symbols;
    const char* digits = "123456789abcdef";
    for (int k = 0; k < last; ++k)
        symbols.emplace_back(1, digits[k]);
    return Alphabet(std::move(symbols));
}

// Three processes on disjoint 4-state spaces; rows drawn once from
// Dirichlet(1.5) with exit mass 0.1 on two states each, rounded and pinned.
TestCase testcase_one()
{
    TestCase tc{hex_alphabet(12), {}};
    auto& a = tc.alphabet;
    tc.processes.push_back(make_process(
        "I-1", a, {{"1", 0.32}, {"2", 0.28}, {"3", 0.08}, {"4", 0.32}},
        {{"1", "1", 0.41}, {"1", "2", 0.03}, {"1", "3", 0.38}, {"1", "4", 0.08},
         {"2", "1", 0.43}, {"2", "2", 0.34}, {"2", "3", 0.06}, {"2", "4", 0.17},
         {"3", "1", 0.14}, {"3", "2", 0.10}, {"3", "3", 0.39}, {"3", "4", 0.27},
         {"4", "1", 0.21}, {"4", "2", 0.31}, {"4", "3", 0.09}, {"4", "4", 0.39}}));
    tc.processes.push_back(make_process(
        "I-2", a, {{"5", 0.15}, {"6", 0.27}, {"7", 0.10}, {"8", 0.48}},
        {{"5", "5", 0.40}, {"5", "6", 0.37}, {"5", "7", 0.09}, {"5", "8", 0.14},
         {"6", "5", 0.26}, {"6", "6", 0.18}, {"6", "7", 0.27}, {"6", "8", 0.19},
         {"7", "5", 0.13}, {"7", "6", 0.35}, {"7", "7", 0.46}, {"7", "8", 0.06},
         {"8", "5", 0.33}, {"8", "6", 0.05}, {"8", "7", 0.41}, {"8", "8", 0.11}}));
    tc.processes.push_back(make_process(
        "I-3", a, {{"9", 0.07}, {"a", 0.12}, {"b", 0.10}, {"c", 0.71}},
        {{"9", "9", 0.19}, {"9", "a", 0.42}, {"9", "b", 0.24}, {"9", "c", 0.05},
         {"a", "9", 0.19}, {"a", "a", 0.27}, {"a", "b", 0.08}, {"a", "c", 0.46},
         {"b", "9", 0.14}, {"b", "a", 0.20}, {"b", "b", 0.09}, {"b", "c", 0.47},
         {"c", "9", 0.33}, {"c", "a", 0.10}, {"c", "b", 0.30}, {"c", "c", 0.27}}));
    return tc;
}

// Six processes, mixed overlapping and disjoint state spaces.
TestCase testcase_two()
{
    TestCase tc{hex_alphabet(15), {}};
    auto& a = tc.alphabet;
    tc.processes.push_back(make_process(
        "II-1", a, {{"1", 0.3}, {"2", 0.7}},
        {{"1", "2", 0.9}, {"1", "3", 0.1},
         {"2", "1", 0.95}, {"2", "3", 0.05},
         {"3", "3", 0.55}, {"3", "2", 0.05}, {"3", "4", 0.4},
         {"4", "3", 0.05}, {"4", "5", 0.95},
         {"5", "4", 0.4}, {"5", "5", 0.4}}));
    tc.processes.push_back(make_process(
        "II-2", a, {{"6", 1.0}},
        {{"6", "7", 0.6}, {"6", "8", 0.1}, {"6", "6", 0.3},
         {"7", "8", 1.0},
         {"8", "6", 0.2}, {"8", "7", 0.6}}));
    tc.processes.push_back(make_process(
        "II-3", a, {{"9", 1.0}},
        {{"9", "a", 0.6}, {"9", "b", 0.4},
         {"a", "9", 1.0},
         {"b", "9", 0.2}, {"b", "a", 0.55}, {"b", "b", 0.1}, {"b", "c", 0.15},
         {"c", "c", 0.7}}));
    tc.processes.push_back(make_process(
        "II-4", a, {{"8", 0.6}, {"1", 0.4}},
        {{"8", "a", 0.95}, {"8", "d", 0.05},
         {"1", "a", 0.99}, {"1", "8", 0.01},
         {"a", "1", 0.2}, {"a", "a", 0.3}, {"a", "c", 0.5},
         {"c", "8", 0.65}, {"c", "a", 0.35},
         {"d", "c", 0.1}, {"d", "d", 0.1}}));
    tc.processes.push_back(make_process(
        "II-5", a, {{"f", 1.0}},
        {{"f", "4", 0.85}, {"f", "f", 0.15},
         {"4", "c", 1.0},
         {"c", "4", 0.1}, {"c", "6", 0.7}, {"c", "c", 0.2},
         {"6", "f", 0.75}, {"6", "e", 0.25},
         {"e", "6", 0.15}, {"e", "e", 0.25}}));
    tc.processes.push_back(make_process(
        "II-6", a, {{"8", 1.0}},
        {{"8", "9", 0.3}, {"8", "3", 0.2}, {"8", "f", 0.5},
         {"9", "5", 0.6}, {"9", "9", 0.4},
         {"5", "5", 0.4}, {"5", "4", 0.6},
         {"4", "3", 0.3}, {"4", "5", 0.5},
         {"f", "8", 1.0},
         {"3", "3", 0.4}, {"3", "f", 0.3}, {"3", "4", 0.3}}));
    return tc;
}

// Four processes; pairs share a state space and differ only in dynamics.
TestCase testcase_three()
{
    TestCase tc{hex_alphabet(10), {}};
    auto& a = tc.alphabet;
    tc.processes.push_back(make_process(
        "III-1", a, {{"1", 1.0}},
        {{"1", "2", 0.15}, {"1", "3", 0.65}, {"1", "4", 0.15},
         {"2", "1", 0.05}, {"2", "2", 0.8}, {"2", "4", 0.15},
         {"3", "3", 0.5}, {"3", "5", 0.5},
         {"4", "2", 0.1}, {"4", "3", 0.7}, {"4", "5", 0.2},
         {"5", "4", 1.0}}));
    tc.processes.push_back(make_process(
        "III-2", a, {{"1", 1.0}},
        {{"1", "2", 0.7}, {"1", "3", 0.05}, {"1", "4", 0.2},
         {"2", "1", 0.2}, {"2", "2", 0.05}, {"2", "4", 0.75},
         {"3", "3", 0.9}, {"3", "5", 0.1},
         {"4", "2", 0.65}, {"4", "3", 0.1}, {"4", "5", 0.25},
         {"5", "4", 1.0}}));
    tc.processes.push_back(make_process(
        "III-3", a, {{"6", 1.0}},
        {{"6", "8", 1.0},
         {"7", "9", 0.35}, {"7", "a", 0.65},
         {"8", "a", 0.95},
         {"9", "7", 0.25}, {"9", "8", 0.3}, {"9", "9", 0.45},
         {"a", "6", 0.4}, {"a", "7", 0.6}}));
    tc.processes.push_back(make_process(
        "III-4", a, {{"a", 1.0}},
        {{"6", "7", 1.0},
         {"7", "6", 0.4}, {"7", "8", 0.6},
         {"8", "6", 0.3}, {"8", "7", 0.3}, {"8", "9", 0.4},
         {"9", "8", 0.35}, {"9", "a", 0.6},
         {"a", "8", 1.0}}));
    return tc;
}

}  // namespace

TestCase builtin_testcase(TestCaseId which)
{
    switch (which) {
    case TestCaseId::I: return testcase_one();
    case TestCaseId::II: return testcase_two();
    case TestCaseId::III: return testcase_three();
    }
    throw GeneratorError("unknown test case");
}

SizePreset parse_size(const std::string& name)
{
    if (name == "small")
        return SizePreset::small;
    if (name == "mid")
        return SizePreset::mid;
    if (name == "large")
        return SizePreset::large;
    throw GeneratorError("unknown size '" + name + "' (expected small, mid or large)");
}

std::size_t target_observations(SizePreset size)
{
    switch (size) {
    case SizePreset::small: return 2500;
    case SizePreset::mid: return 25000;
    case SizePreset::large: return 250000;
    }
    return 0;
}

void SyntheticSpec::validate() const
{
    if (processes.empty())
        throw GeneratorError("synthetic spec has no processes");
    for (const auto& p : processes) {
        p.validate();
        for (Code c : p.states)
            if (c >= alphabet.size())
                throw GeneratorError("process '" + p.name + "' uses a code outside the alphabet");
    }
    if (!mixing.empty()) {
        if (mixing.size() != processes.size())
            throw GeneratorError("mixing has the wrong length");
        double s = 0.0;
        for (double m : mixing) {
            if (!(m >= 0.0))
                throw GeneratorError("mixing weights must be nonnegative");
            s += m;
        }
        if (std::abs(s - 1.0) > kTolerance)
            throw GeneratorError("mixing weights must sum to 1");
    }
    if (target_observations < 1)
        throw GeneratorError("target_observations must be at least 1");
    if (!(mean_segments_per_sequence >= 1.0))
        throw GeneratorError("mean_segments_per_sequence must be at least 1");
}

SyntheticSpec default_spec(TestCaseId which, SizePreset size, std::uint64_t seed)
{
    TestCase tc = builtin_testcase(which);
    SyntheticSpec spec;
    spec.alphabet = std::move(tc.alphabet);
    spec.processes = std::move(tc.processes);
    spec.target_observations = target_observations(size);
    spec.seed = seed;
    return spec;
}

std::vector<Code> sample_segment(const GroundTruthProcess& proc, Rng& rng)
{
    const std::size_t n = proc.size();
    std::vector<double> row(n + 1);
    std::vector<Code> out;
    std::size_t cur = rng.categorical(proc.entry);
    while (true) {
        out.push_back(proc.states[cur]);
        if (out.size() > kMaxSegmentLength)
            throw GeneratorError("segment of process '" + proc.name + "' exceeded " +
                                 std::to_string(kMaxSegmentLength) + " events");
        for (std::size_t k = 0; k < n; ++k)
            row[k] = proc.transition(cur, k);
        row[n] = proc.exit_probability(cur);
        std::size_t next = rng.categorical(row);
        if (next == n)
            break;
        cur = next;
    }
    return out;
}

SyntheticCorpus generate_corpus(const SyntheticSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    std::vector<double> mixing = spec.mixing;
    if (mixing.empty())
        mixing.assign(spec.processes.size(), 1.0 / static_cast<double>(spec.processes.size()));

    SyntheticCorpus out;
    out.corpus.alphabet = spec.alphabet;
    std::size_t total = 0;
    while (total < spec.target_observations) {
        const std::size_t n_segments = 1 + rng.poisson(spec.mean_segments_per_sequence - 1.0);
        Sequence seq;
        seq.id = "s" + std::to_string(out.corpus.sequences.size());
        LabeledSequence truth{seq.id, {}};
        for (std::size_t k = 0; k < n_segments && total < spec.target_observations; ++k) {
            const std::size_t proc = rng.categorical(mixing);
            auto seg = sample_segment(spec.processes[proc], rng);
            total += seg.size();
            seq.events.insert(seq.events.end(), seg.begin(), seg.end());
            truth.labels.insert(truth.labels.end(), seg.size(), static_cast<int>(proc));
        }
        out.corpus.sequences.push_back(std::move(seq));
        out.truth.push_back(std::move(truth));
    }
    return out;
}

SyntheticCorpus sample_from_immc(const ModelParams& params, const Alphabet& alphabet,
                                 std::size_t n_sequences, Rng& rng, double end_probability)
{
    const std::size_t K = params.num_codes();
    const std::size_t B = params.boundary();
    if (K != alphabet.num_codes())
        throw GeneratorError("model and alphabet disagree on the number of codes");
    if (!(end_probability > 0.0 && end_probability <= 1.0))
        throw GeneratorError("end_probability must lie in (0, 1]");

    SyntheticCorpus out;
    out.corpus.alphabet = alphabet;
    std::vector<double> emit(B);
    auto draw_symbol = [&](std::size_t z, std::size_t from) {
        auto row = params.theta_row(z, from);
        std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(B), emit.begin());
        return static_cast<Code>(rng.categorical(emit));
    };
    for (std::size_t s = 0; s < n_sequences; ++s) {
        Sequence seq;
        seq.id = "s" + std::to_string(s);
        LabeledSequence truth{seq.id, {}};
        std::size_t z = rng.categorical(params.beta());
        Code y = draw_symbol(z, B);
        std::size_t run = 0;
        while (true) {
            seq.events.push_back(y);
            truth.labels.push_back(static_cast<int>(z));
            if (++run > kMaxSegmentLength)
                throw GeneratorError("sampled segment exceeded the length limit");
            if (rng.bernoulli(params.theta(z, y, B))) {
                if (rng.bernoulli(end_probability))
                    break;
                z = rng.categorical(params.pi_row(z));
                y = draw_symbol(z, B);
                run = 0;
            } else {
                y = draw_symbol(z, y);
            }
        }
        out.corpus.sequences.push_back(std::move(seq));
        out.truth.push_back(std::move(truth));
    }
    return out;
}

json process_to_json(const GroundTruthProcess& proc, const Alphabet& alphabet)
{
    json states = json::array();
    for (Code c : proc.states)
        states.push_back(alphabet.symbol(c));
    json rows = json::array();
    for (std::size_t a = 0; a < proc.size(); ++a) {
        std::vector<double> row(proc.transitions.begin() + static_cast<std::ptrdiff_t>(a * proc.size()),
                                proc.transitions.begin() + static_cast<std::ptrdiff_t>((a + 1) * proc.size()));
        rows.push_back(row);
    }
    return json{{"name", proc.name}, {"states", states}, {"entry", proc.entry}, {"transitions", rows}};
}

GroundTruthProcess process_from_json(const json& j, Alphabet& alphabet)
{
    try {
        GroundTruthProcess proc;
        proc.name = j.value("name", std::string("process"));
        for (const auto& s : j.at("states"))
            proc.states.push_back(alphabet.intern(s.get<std::string>()));
        proc.entry = j.at("entry").get<std::vector<double>>();
        for (const auto& row : j.at("transitions")) {
            auto r = row.get<std::vector<double>>();
            if (r.size() != proc.states.size())
                throw GeneratorError("transition row of process '" + proc.name + "' has the wrong length");
            proc.transitions.insert(proc.transitions.end(), r.begin(), r.end());
        }
        proc.validate();
        return proc;
    } catch (const json::exception& e) {
        throw GeneratorError(std::string("malformed process: ") + e.what());
    }
}

json testcase_to_json(const TestCase& tc)
{
    json procs = json::array();
    for (const auto& p : tc.processes)
        procs.push_back(process_to_json(p, tc.alphabet));
    return json{{"alphabet", tc.alphabet.symbols()}, {"processes", procs}};
}

SyntheticSpec spec_from_json(const json& j)
{
    try {
        SyntheticSpec spec;
        if (j.contains("testcase")) {
            TestCase tc = builtin_testcase(parse_testcase(j.at("testcase").get<std::string>()));
            spec.alphabet = std::move(tc.alphabet);
            spec.processes = std::move(tc.processes);
        } else {
            if (j.contains("alphabet"))
                spec.alphabet = Alphabet(j.at("alphabet").get<std::vector<std::string>>());
            for (const auto& p : j.at("processes"))
                spec.processes.push_back(process_from_json(p, spec.alphabet));
        }
        if (j.contains("mixing"))
            spec.mixing = j.at("mixing").get<std::vector<double>>();
        spec.target_observations = j.value("target_observations", spec.target_observations);
        spec.mean_segments_per_sequence =
            j.value("mean_segments_per_sequence", spec.mean_segments_per_sequence);
        spec.seed = j.value("seed", spec.seed);
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw GeneratorError(std::string("malformed synthetic spec: ") + e.what());
    }
}

SyntheticSpec load_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw GeneratorError("cannot open spec file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return spec_from_json(json::parse(buf.str()));
    } catch (const json::parse_error& e) {
        throw GeneratorError("spec file " + path.string() + ": " + e.what());
    }
}

}  // namespace immc

#include "immc/corpus.hpp"

#include "immc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace immc {

using json = nlohmann::json;

Alphabet::Alphabet(std::vector<std::string> symbols)
{
    for (auto& s : symbols) {
        if (s.empty())
            throw CorpusError("alphabet symbols must be non-empty");
        if (index_.contains(s))
            throw CorpusError("duplicate alphabet symbol '" + s + "'");
        intern(s);
    }
}

Code Alphabet::intern(const std::string& symbol)
{
    auto it = index_.find(symbol);
    if (it != index_.end())
        return it->second;
    Code code = static_cast<Code>(symbols_.size());
    symbols_.push_back(symbol);
    index_.emplace(symbol, code);
    return code;
}

std::optional<Code> Alphabet::find(const std::string& symbol) const
{
    auto it = index_.find(symbol);
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

const std::string& Alphabet::symbol(Code code) const
{
    if (code >= symbols_.size())
        throw CorpusError("code " + std::to_string(code) + " is not an alphabet symbol");
    return symbols_[code];
}

std::size_t Corpus::total_events() const
{
    std::size_t n = 0;
    for (const auto& s : sequences)
        n += s.events.size();
    return n;
}

CorpusFormat parse_corpus_format(const std::string& name)
{
    if (name == "jsonl")
        return CorpusFormat::jsonl;
    if (name == "csv")
        return CorpusFormat::csv;
    throw CorpusError("unknown corpus format '" + name + "'");
}

CorpusFormat corpus_format_from_path(const std::filesystem::path& path)
{
    return path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

namespace {

Code encode_token(const std::string& token, Alphabet& alphabet, const Alphabet* fixed,
                  std::size_t line)
{
    if (token.empty())
        throw CorpusError("line " + std::to_string(line) + ": empty event token");
    if (fixed) {
        auto code = fixed->find(token);
        if (!code)
            throw CorpusError("line " + std::to_string(line) + ": symbol '" + token +
                              "' is not in the model alphabet");
        return *code;
    }
    return alphabet.intern(token);
}

void finish_corpus(Corpus& corpus, const Alphabet* fixed)
{
    if (corpus.sequences.empty())
        throw CorpusError("corpus is empty");
    if (fixed)
        corpus.alphabet = *fixed;
}

}  // namespace

Corpus parse_jsonl_corpus(std::istream& in, const Alphabet* fixed_alphabet)
{
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!row.is_object() || !row.contains("events") || !row["events"].is_array())
            throw CorpusError("line " + std::to_string(lineno) +
                              ": expected an object with an 'events' array");
        Sequence seq;
        if (row.contains("id")) {
            if (!row["id"].is_string())
                throw CorpusError("line " + std::to_string(lineno) + ": 'id' must be a string");
            seq.id = row["id"].get<std::string>();
        } else {
            seq.id = std::to_string(corpus.sequences.size());
        }
        for (const auto& ev : row["events"]) {
            if (!ev.is_string())
                throw CorpusError("line " + std::to_string(lineno) + ": events must be strings");
            seq.events.push_back(
                encode_token(ev.get<std::string>(), corpus.alphabet, fixed_alphabet, lineno));
        }
        if (seq.events.empty())
            throw CorpusError("line " + std::to_string(lineno) + ": sequence '" + seq.id +
                              "' is empty");
        corpus.sequences.push_back(std::move(seq));
    }
    finish_corpus(corpus, fixed_alphabet);
    return corpus;
}

Corpus parse_csv_corpus(std::istream& in, const Alphabet* fixed_alphabet)
{
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw CorpusError("line " + std::to_string(lineno) + ": expected two columns id,event");
        std::string id = line.substr(0, comma);
        std::string event = line.substr(comma + 1);
        if (!header_seen) {
            header_seen = true;
            if (id == "id" && event == "event")
                continue;
        }
        if (corpus.sequences.empty() || corpus.sequences.back().id != id) {
            for (const auto& s : corpus.sequences)
                if (s.id == id)
                    throw CorpusError("line " + std::to_string(lineno) + ": rows of sequence '" +
                                      id + "' are not contiguous");
            corpus.sequences.push_back(Sequence{id, {}});
        }
        corpus.sequences.back().events.push_back(
            encode_token(event, corpus.alphabet, fixed_alphabet, lineno));
    }
    finish_corpus(corpus, fixed_alphabet);
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const Alphabet* fixed_alphabet)
{
    std::ifstream in(path);
    if (!in)
        throw CorpusError("cannot open corpus file " + path.string());
    return format == CorpusFormat::csv ? parse_csv_corpus(in, fixed_alphabet)
                                       : parse_jsonl_corpus(in, fixed_alphabet);
}

void write_jsonl_corpus(const Corpus& corpus, std::ostream& out)
{
    for (const auto& seq : corpus.sequences) {
        json events = json::array();
        for (Code c : seq.events)
            events.push_back(corpus.alphabet.symbol(c));
        out << json{{"id", seq.id}, {"events", std::move(events)}}.dump() << '\n';
    }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw CorpusError("cannot write " + path.string());
    write_jsonl_corpus(corpus, out);
}

ConcatenatedStream concatenate(const Corpus& corpus)
{
    if (corpus.sequences.empty())
        throw CorpusError("cannot concatenate an empty corpus");
    ConcatenatedStream stream;
    stream.boundary = corpus.alphabet.boundary();
    stream.codes.reserve(corpus.total_events() + corpus.sequences.size() + 1);
    stream.codes.push_back(stream.boundary);
    for (const auto& seq : corpus.sequences) {
        stream.offsets.push_back(stream.codes.size());
        stream.lengths.push_back(seq.events.size());
        for (Code c : seq.events) {
            if (c >= stream.boundary)
                throw CorpusError("sequence '" + seq.id + "' holds an out-of-alphabet code");
            stream.codes.push_back(c);
        }
        stream.codes.push_back(stream.boundary);
    }
    return stream;
}

std::vector<std::vector<Code>> split_stream(const ConcatenatedStream& stream)
{
    std::vector<std::vector<Code>> out;
    std::vector<Code> current;
    bool open = false;
    for (Code c : stream.codes) {
        if (c == stream.boundary) {
            if (open && !current.empty())
                out.push_back(std::move(current));
            current.clear();
            open = true;
        } else {
            current.push_back(c);
        }
    }
    return out;
}

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double test_fraction,
                                           std::uint64_t seed)
{
    const std::size_t S = corpus.sequences.size();
    if (S < 2)
        throw CorpusError("train/test split needs at least two sequences");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw CorpusError("test fraction must lie in (0, 1)");
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(S)));
    n_test = std::clamp<std::size_t>(n_test, 1, S - 1);

    std::vector<std::size_t> order(S);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = S - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    std::vector<bool> in_test(S, false);
    for (std::size_t k = 0; k < n_test; ++k)
        in_test[order[k]] = true;

    Corpus train{corpus.alphabet, {}};
    Corpus test{corpus.alphabet, {}};
    for (std::size_t s = 0; s < S; ++s)
        (in_test[s] ? test : train).sequences.push_back(corpus.sequences[s]);
    return {std::move(train), std::move(test)};
}

PredictionCut cut_for_prediction(const Sequence& seq, std::uint64_t seed)
{
    const std::size_t n = seq.events.size();
    if (n < 2)
        throw CorpusError("sequence '" + seq.id + "' is too short to cut for prediction");
    Rng rng(seed);
    auto c = static_cast<std::size_t>(rng.uniform_int(1, n - 1));
    PredictionCut cut;
    cut.prefix.id = seq.id;
    cut.prefix.events.assign(seq.events.begin(), seq.events.begin() + static_cast<std::ptrdiff_t>(c));
    cut.target = seq.events[c];
    cut.position = c;
    return cut;
}

std::vector<LabeledSequence> load_labels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw CorpusError("cannot open label file " + path.string());
    std::vector<LabeledSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            json row = json::parse(line);
            LabeledSequence ls;
            ls.id = row.at("id").get<std::string>();
            ls.labels = row.at("labels").get<std::vector<int>>();
            out.push_back(std::move(ls));
        } catch (const json::exception& e) {
            throw CorpusError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_labels(const std::vector<LabeledSequence>& labels, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw CorpusError("cannot write " + path.string());
    for (const auto& ls : labels)
        out << json{{"id", ls.id}, {"labels", ls.labels}}.dump() << '\n';
}

std::vector<int> flatten_labels(const std::vector<LabeledSequence>& labels)
{
    std::vector<int> flat;
    for (const auto& ls : labels)
        flat.insert(flat.end(), ls.labels.begin(), ls.labels.end());
    return flat;
}

}  // namespace immc

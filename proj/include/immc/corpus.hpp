#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace immc {

/// Integer code of an observation. Codes 0..|Sigma|-1 are real symbols, the
/// code |Sigma| is the boundary symbol B.
using Code = std::uint32_t;

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered set of observation labels. The boundary symbol is not a label; it
/// is the reserved code size().
class Alphabet {
public:
    Alphabet() = default;
    explicit Alphabet(std::vector<std::string> symbols);

    /// Returns the code of symbol, appending it if unseen.
    Code intern(const std::string& symbol);
    std::optional<Code> find(const std::string& symbol) const;
    const std::string& symbol(Code code) const;

    std::size_t size() const { return symbols_.size(); }
    Code boundary() const { return static_cast<Code>(symbols_.size()); }
    /// Number of codes including the boundary symbol.
    std::size_t num_codes() const { return symbols_.size() + 1; }
    const std::vector<std::string>& symbols() const { return symbols_; }

    bool operator==(const Alphabet& other) const { return symbols_ == other.symbols_; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, Code> index_;
};

struct Sequence {
    std::string id;
    std::vector<Code> events;

    bool operator==(const Sequence&) const = default;
};

struct Corpus {
    Alphabet alphabet;
    std::vector<Sequence> sequences;

    std::size_t total_events() const;
    bool operator==(const Corpus&) const = default;
};

/// All sequences of a corpus joined into one stream. Every sequence is
/// preceded and followed by the boundary code, so the stream starts and ends
/// with it and exactly one boundary code separates neighbours.
struct ConcatenatedStream {
    std::vector<Code> codes;
    /// Stream index of the first event of each sequence.
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> lengths;
    Code boundary = 0;

    std::size_t size() const { return codes.size(); }
    std::size_t num_codes() const { return static_cast<std::size_t>(boundary) + 1; }
    bool is_boundary(std::size_t t) const { return codes[t] == boundary; }
};

enum class CorpusFormat { jsonl, csv };

CorpusFormat parse_corpus_format(const std::string& name);
/// jsonl unless the extension is .csv.
CorpusFormat corpus_format_from_path(const std::filesystem::path& path);

/// Reads a corpus. When fixed_alphabet is given every token must already be
/// one of its symbols and the corpus is encoded against it.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const Alphabet* fixed_alphabet = nullptr);
Corpus parse_jsonl_corpus(std::istream& in, const Alphabet* fixed_alphabet = nullptr);
Corpus parse_csv_corpus(std::istream& in, const Alphabet* fixed_alphabet = nullptr);

void write_jsonl_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

ConcatenatedStream concatenate(const Corpus& corpus);
/// Inverse of concatenate: the event lists between boundary codes.
std::vector<std::vector<Code>> split_stream(const ConcatenatedStream& stream);

/// Random disjoint partition into (train, test). The test part holds
/// round(test_fraction * S) sequences, at least one and at most S-1.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double test_fraction,
                                           std::uint64_t seed);

struct PredictionCut {
    Sequence prefix;
    Code target = 0;
    std::size_t position = 0;
};

/// Cuts at a position c drawn uniformly from [1, T_s-1]; prefix holds
/// events [0, c) and target is events[c].
PredictionCut cut_for_prediction(const Sequence& seq, std::uint64_t seed);

/// Per-event integer labels, keyed by sequence id (ground-truth sidecar and
/// segmentation outputs share this shape).
struct LabeledSequence {
    std::string id;
    std::vector<int> labels;
};

std::vector<LabeledSequence> load_labels(const std::filesystem::path& path);
void save_labels(const std::vector<LabeledSequence>& labels, const std::filesystem::path& path);
/// Flattens labels in sequence order.
std::vector<int> flatten_labels(const std::vector<LabeledSequence>& labels);

}  // namespace immc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "immc/corpus.hpp"
#include "immc/generator.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace immc;

namespace {

Corpus parse_jsonl(const std::string& text)
{
    std::istringstream in(text);
    return parse_jsonl_corpus(in);
}

Corpus toy_corpus(std::size_t n_sequences)
{
    Corpus c;
    c.alphabet = Alphabet({"a", "b", "c"});
    for (std::size_t s = 0; s < n_sequences; ++s)
        c.sequences.push_back(Sequence{"s" + std::to_string(s), {Code(s % 3), Code((s + 1) % 3)}});
    return c;
}

}  // namespace

TEST_CASE("jsonl encodes tokens in first-appearance order")
{
    const Corpus c = parse_jsonl(R"({"id":"a","events":["x","y","x"]})"
                                 "\n");
    CHECK(c.alphabet.symbols() == std::vector<std::string>{"x", "y"});
    REQUIRE(c.sequences.size() == 1);
    CHECK(c.sequences[0].id == "a");
    CHECK(c.sequences[0].events == std::vector<Code>{0, 1, 0});
}

TEST_CASE("alphabet grows across lines")
{
    const Corpus c = parse_jsonl(R"({"id":"a","events":["x"]})"
                                 "\n"
                                 R"({"id":"b","events":["y","z"]})"
                                 "\n");
    CHECK(c.alphabet.symbols() == std::vector<std::string>{"x", "y", "z"});
    CHECK(c.sequences[0].events == std::vector<Code>{0});
    CHECK(c.sequences[1].events == std::vector<Code>{1, 2});
    CHECK(c.alphabet.boundary() == 3);
    CHECK(c.alphabet.num_codes() == 4);
}

TEST_CASE("empty sequence is rejected")
{
    CHECK_THROWS_AS(parse_jsonl(R"({"id":"a","events":[]})"
                                "\n"),
                    CorpusError);
}

TEST_CASE("parse errors carry the line number")
{
    try {
        parse_jsonl(R"({"id":"a","events":["x"]})"
                    "\n{not json}\n");
        FAIL("expected a parse error");
    } catch (const CorpusError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("empty corpus and empty tokens are rejected")
{
    CHECK_THROWS_AS(parse_jsonl(""), CorpusError);
    CHECK_THROWS_AS(parse_jsonl(R"({"id":"a","events":["x",""]})"
                                "\n"),
                    CorpusError);
}

TEST_CASE("csv groups rows by id")
{
    std::istringstream in("id,event\na,x\na,y\nb,y\n");
    const Corpus c = parse_csv_corpus(in);
    REQUIRE(c.sequences.size() == 2);
    CHECK(c.sequences[0].events == std::vector<Code>{0, 1});
    CHECK(c.sequences[1].events == std::vector<Code>{1});
}

TEST_CASE("fixed alphabet rejects unknown symbols")
{
    const Alphabet fixed({"x", "y"});
    std::istringstream ok(R"({"id":"a","events":["y","x"]})"
                          "\n");
    CHECK(parse_jsonl_corpus(ok, &fixed).sequences[0].events == std::vector<Code>{1, 0});
    std::istringstream bad(R"({"id":"a","events":["q"]})"
                           "\n");
    CHECK_THROWS_AS(parse_jsonl_corpus(bad, &fixed), CorpusError);
}

TEST_CASE("alphabet invariants")
{
    CHECK_THROWS_AS(Alphabet({"a", "a"}), CorpusError);
    CHECK_THROWS_AS(Alphabet({""}), CorpusError);
    Alphabet a({"p", "q"});
    CHECK(a.intern("q") == 1);
    CHECK(a.intern("r") == 2);
    CHECK(a.find("zz") == std::nullopt);
    CHECK_THROWS_AS(a.symbol(a.boundary()), CorpusError);
}

TEST_CASE("concatenate places one boundary between sequences")
{
    Corpus c;
    c.alphabet = Alphabet({"a", "b", "c"});
    c.sequences = {{"s0", {0, 1}}, {"s1", {2}}};
    const ConcatenatedStream st = concatenate(c);
    CHECK(st.codes == std::vector<Code>{3, 0, 1, 3, 2, 3});
    CHECK(st.size() == 6);
    CHECK(st.offsets == std::vector<std::size_t>{1, 4});
    CHECK(st.lengths == std::vector<std::size_t>{2, 1});
}

TEST_CASE("single sequence concatenation")
{
    Corpus c;
    c.alphabet = Alphabet({"a"});
    c.sequences = {{"s0", {0}}};
    CHECK(concatenate(c).codes == std::vector<Code>{1, 0, 1});
    CHECK_THROWS_AS(concatenate(Corpus{}), CorpusError);
}

TEST_CASE("concatenation round trip on generated corpora")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SyntheticSpec spec = default_spec(TestCaseId::II, SizePreset::small, seed);
        spec.mean_segments_per_sequence = 1.5;
        Corpus c = generate_corpus(spec).corpus;
        while (c.sequences.size() < 100) {
            spec.seed += 1000;
            const Corpus more = generate_corpus(spec).corpus;
            c.sequences.insert(c.sequences.end(), more.sequences.begin(), more.sequences.end());
        }
        const ConcatenatedStream st = concatenate(c);
        std::size_t events = 0;
        for (const auto& s : c.sequences)
            events += s.events.size();
        CHECK(st.size() == events + c.sequences.size() + 1);
        CHECK(st.codes.front() == st.boundary);
        CHECK(st.codes.back() == st.boundary);
        const auto parts = split_stream(st);
        REQUIRE(parts.size() == c.sequences.size());
        for (std::size_t s = 0; s < parts.size(); ++s) {
            CHECK(parts[s] == c.sequences[s].events);
            for (Code code : c.sequences[s].events)
                CHECK(code != st.boundary);
        }
    }
}

TEST_CASE("encoding is bijective through jsonl")
{
    const Corpus c = generate_corpus(default_spec(TestCaseId::III, SizePreset::small, 3)).corpus;
    std::ostringstream out;
    write_jsonl_corpus(c, out);
    std::istringstream in(out.str());
    const Corpus back = parse_jsonl_corpus(in, &c.alphabet);
    CHECK(back == c);
    for (const auto& s : c.sequences)
        for (Code code : s.events)
            CHECK(back.alphabet.find(c.alphabet.symbol(code)) == code);
}

TEST_CASE("train/test split sizes")
{
    const Corpus c = toy_corpus(10);
    auto [train, test] = split_train_test(c, 0.1, 5);
    CHECK(train.sequences.size() == 9);
    CHECK(test.sequences.size() == 1);
    auto [train9, test9] = split_train_test(c, 0.9, 5);
    CHECK(train9.sequences.size() == 1);
    CHECK(test9.sequences.size() == 9);

    std::set<std::string> ids;
    for (const auto& s : train.sequences)
        ids.insert(s.id);
    for (const auto& s : test.sequences)
        CHECK(ids.insert(s.id).second);
    CHECK(ids.size() == 10);
}

TEST_CASE("train/test split is deterministic and guarded")
{
    const Corpus c = toy_corpus(30);
    CHECK(split_train_test(c, 0.3, 9) == split_train_test(c, 0.3, 9));
    CHECK_THROWS_AS(split_train_test(toy_corpus(1), 0.1, 0), CorpusError);
    CHECK_THROWS_AS(split_train_test(c, 0.0, 0), CorpusError);
    CHECK_THROWS_AS(split_train_test(c, 1.0, 0), CorpusError);
}

TEST_CASE("cut of a two-event sequence is forced")
{
    const PredictionCut cut = cut_for_prediction(Sequence{"s", {0, 1}}, 17);
    CHECK(cut.prefix.events == std::vector<Code>{0});
    CHECK(cut.target == 1);
    CHECK(cut.position == 1);
    CHECK_THROWS_AS(cut_for_prediction(Sequence{"s", {0}}, 0), CorpusError);
}

TEST_CASE("cut positions are uniform on [1, T-1]")
{
    const Sequence seq{"s", {0, 1, 2, 0, 1}};
    std::vector<double> freq(5, 0.0);
    const std::size_t n = 10000;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
        const PredictionCut cut = cut_for_prediction(seq, seed);
        REQUIRE(cut.position >= 1);
        REQUIRE(cut.position <= 4);
        CHECK(cut.prefix.events.size() == cut.position);
        CHECK(cut.target == seq.events[cut.position]);
        freq[cut.position] += 1.0;
    }
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (std::size_t c = 1; c <= 4; ++c)
        CHECK(std::abs(freq[c] / n - 0.25) < 3.0 * sigma);
}

TEST_CASE("label sidecar round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "immc_test_corpus";
    std::filesystem::create_directories(dir);
    const std::vector<LabeledSequence> labels{{"a", {0, 0, 1}}, {"b", {2}}};
    save_labels(labels, dir / "labels.jsonl");
    const auto back = load_labels(dir / "labels.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].labels == labels[0].labels);
    CHECK(back[1].id == "b");
    CHECK(flatten_labels(back) == std::vector<int>{0, 0, 1, 2});
    CHECK_THROWS_AS(load_labels(dir / "missing.jsonl"), CorpusError);
}

TEST_CASE("corpus file round trip in both formats")
{
    const auto dir = std::filesystem::temp_directory_path() / "immc_test_corpus";
    std::filesystem::create_directories(dir);
    const Corpus c = toy_corpus(4);
    save_corpus(c, dir / "c.jsonl");
    CHECK(load_corpus(dir / "c.jsonl", CorpusFormat::jsonl) == c);
    {
        std::ofstream csv(dir / "c.csv");
        csv << "id,event\n";
        for (const auto& s : c.sequences)
            for (Code e : s.events)
                csv << s.id << ',' << c.alphabet.symbol(e) << '\n';
    }
    CHECK(corpus_format_from_path(dir / "c.csv") == CorpusFormat::csv);
    CHECK(load_corpus(dir / "c.csv", CorpusFormat::csv).sequences.size() == 4);
    CHECK_THROWS_AS(parse_corpus_format("xml"), CorpusError);
}

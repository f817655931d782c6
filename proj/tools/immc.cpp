#include "immc/baselines.hpp"
#include "immc/eval.hpp"
#include "immc/generator.hpp"
#include "immc/model_io.hpp"
#include "immc/sampler.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace immc;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Global {
    bool json_output = false;
};

fs::path prepare_dir(const std::string& dir)
{
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// Prints a score: the bare number, or a JSON object under --json.
void print_score(const Global& g, const std::string& key, double value, json extra = json::object())
{
    if (g.json_output) {
        extra[key] = value;
        std::cout << extra.dump() << '\n';
    } else {
        std::cout << json(value).dump() << '\n';
    }
}

Corpus read_corpus(const std::string& path, const Alphabet* alphabet = nullptr)
{
    return load_corpus(path, corpus_format_from_path(path), alphabet);
}

void save_segmentation(const Corpus& corpus, const std::vector<SequenceSegmentation>& segs,
                       const fs::path& path)
{
    std::ostringstream out;
    for (std::size_t s = 0; s < segs.size(); ++s)
        out << json{{"id", corpus.sequences[s].id},
                    {"labels", segs[s].labels},
                    {"boundaries", segs[s].boundaries}}
                   .dump()
            << '\n';
    write_text(path, out.str());
}

std::vector<int> flatten(const std::vector<SequenceSegmentation>& segs)
{
    std::vector<int> flat;
    for (const auto& s : segs)
        flat.insert(flat.end(), s.labels.begin(), s.labels.end());
    return flat;
}

// Truth labels reordered to follow the corpus sequence order.
std::vector<int> truth_for(const Corpus& corpus, const std::vector<LabeledSequence>& truth)
{
    std::map<std::string, const LabeledSequence*> by_id;
    for (const auto& t : truth)
        by_id[t.id] = &t;
    std::vector<int> flat;
    for (const auto& s : corpus.sequences) {
        auto it = by_id.find(s.id);
        if (it == by_id.end())
            throw std::runtime_error("truth has no labels for sequence " + s.id);
        if (it->second->labels.size() != s.events.size())
            throw std::runtime_error("truth labels of " + s.id + " do not match its length");
        flat.insert(flat.end(), it->second->labels.begin(), it->second->labels.end());
    }
    return flat;
}

std::vector<std::size_t> active_list(const SufficientStats& stats)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stats.num_states(); ++i)
        if (stats.d(i) > 0)
            out.push_back(i);
    return out;
}

// generate

struct GenerateArgs {
    std::string testcase;
    std::string size = "small";
    std::string spec;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_generate(const GenerateArgs& a)
{
    SyntheticSpec spec;
    if (!a.spec.empty()) {
        spec = load_spec(a.spec);
        spec.seed = a.seed;
    } else {
        spec = default_spec(parse_testcase(a.testcase), parse_size(a.size), a.seed);
    }
    const SyntheticCorpus syn = generate_corpus(spec);
    const fs::path dir = prepare_dir(a.out);
    save_corpus(syn.corpus, dir / "corpus.jsonl");
    save_labels(syn.truth, dir / "truth.jsonl");
    std::cerr << "wrote " << syn.corpus.sequences.size() << " sequences, " << syn.corpus.total_events()
              << " observations to " << dir.string() << '\n';
}

// fit

struct FitArgs {
    std::string corpus;
    std::string truth;
    std::size_t iters = 250;
    std::size_t burn_in = 250;
    Hyperparams h;
    std::vector<std::uint64_t> seeds{0};
    std::string model_kind = "immc";
    std::size_t components = 3;
    std::size_t restarts = 10;
    std::size_t order = 1;
    std::string out;
};

void fit_immc(const Global& g, const FitArgs& a, const Corpus& corpus, const fs::path& dir)
{
    a.h.validate();
    const ConcatenatedStream stream = concatenate(corpus);
    std::vector<int> truth;
    if (!a.truth.empty())
        truth = truth_for(corpus, load_labels(a.truth));

    const std::size_t n = a.seeds.size();
    std::vector<FitReport> reports(n);
    std::vector<std::string> errors(n);
    FitOptions opt;
    opt.iterations = a.iters;
    opt.burn_in = a.burn_in;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < n; ++k) {
        try {
            Rng rng(a.seeds[k]);
            reports[k] = fit(stream, a.h, opt, rng);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty())
            throw std::runtime_error(e);

    std::vector<double> error_rates;
    for (std::size_t k = 0; k < n; ++k) {
        const std::string suffix = n == 1 ? "" : "_seed" + std::to_string(a.seeds[k]);
        SavedModel model;
        model.hyperparams = a.h;
        model.hyperparams.seed = a.seeds[k];
        model.alphabet = corpus.alphabet;
        model.params = reports[k].params;
        model.iterations_run = a.iters + a.burn_in;
        model.active_states = active_list(reports[k].stats);
        save_model(model, dir / ("model" + suffix + ".json"));
        const auto segs = segmentation_of(stream, reports[k].latent);
        save_segmentation(corpus, segs, dir / ("segmentation" + suffix + ".jsonl"));
        if (!truth.empty())
            error_rates.push_back(segmentation_error(flatten(segs), truth).error_rate);
    }

    json report = run_report(reports, error_rates, {});
    report["model_kind"] = "immc";
    report["seeds"] = a.seeds;
    report["hyperparams"] = hyperparams_to_json(a.h);
    write_text(dir / "report.json", report.dump(1) + '\n');

    if (g.json_output) {
        std::cout << report.dump() << '\n';
        return;
    }
    for (std::size_t k = 0; k < n; ++k) {
        std::cout << "seed " << a.seeds[k] << ": active_states " << reports[k].active_states
                  << " log_joint " << json(reports[k].log_likelihood.back()).dump();
        if (!error_rates.empty())
            std::cout << " error_rate " << json(error_rates[k]).dump();
        std::cout << '\n';
    }
}

void fit_fmmc(const Global& g, const FitArgs& a, const Corpus& corpus, const fs::path& dir)
{
    const FmmcModel m = fmmc_fit_best(corpus, a.components, a.restarts, a.iters, 1e-8, a.seeds.front());
    write_text(dir / "model.json", fmmc_to_json(m, corpus.alphabet).dump(1) + '\n');
    std::vector<SequenceSegmentation> segs;
    for (const auto& s : corpus.sequences) {
        const auto label = fmmc_segment_given_boundaries(m, s.events, {})[0];
        segs.push_back({std::vector<int>(s.events.size(), static_cast<int>(label)), {0}});
    }
    save_segmentation(corpus, segs, dir / "segmentation.jsonl");
    json report{{"model_kind", "fmmc"},
                {"components", a.components},
                {"seed", a.seeds.front()},
                {"log_likelihood", m.log_likelihood()},
                {"iterations", m.log_likelihood_trace.size()}};
    if (!a.truth.empty())
        report["error_rate"] = segmentation_error(flatten(segs), truth_for(corpus, load_labels(a.truth))).error_rate;
    write_text(dir / "report.json", report.dump(1) + '\n');
    if (g.json_output)
        std::cout << report.dump() << '\n';
    else
        std::cout << "log_likelihood " << json(m.log_likelihood()).dump() << '\n';
}

void fit_ngram(const Global& g, const FitArgs& a, const Corpus& corpus, const fs::path& dir)
{
    const NgramModel m = ngram_fit(corpus, a.order);
    write_text(dir / "model.json", ngram_to_json(m, corpus.alphabet).dump(1) + '\n');
    json report{{"model_kind", "ngram"}, {"order", a.order}, {"sequences", corpus.sequences.size()}};
    write_text(dir / "report.json", report.dump(1) + '\n');
    if (g.json_output)
        std::cout << report.dump() << '\n';
}

void cmd_fit(const Global& g, const FitArgs& a)
{
    if (a.iters < 1)
        throw UsageError("--iters must be at least 1");
    const Corpus corpus = read_corpus(a.corpus);
    const fs::path dir = prepare_dir(a.out);
    if (a.model_kind == "immc")
        fit_immc(g, a, corpus, dir);
    else if (a.model_kind == "fmmc")
        fit_fmmc(g, a, corpus, dir);
    else
        fit_ngram(g, a, corpus, dir);
}

// segment

struct SegmentArgs {
    std::string model;
    std::string corpus;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_segment(const SegmentArgs& a)
{
    const SavedModel model = load_model(a.model);
    const Corpus corpus = read_corpus(a.corpus, &model.alphabet);
    const ConcatenatedStream stream = concatenate(corpus);
    const Messages msg = backward_pass(stream, model.params, model.hyperparams);
    Rng rng(a.seed);
    const LatentState latent = sample_latent(stream, model.params, msg, rng);
    const fs::path dir = prepare_dir(a.out);
    save_segmentation(corpus, segmentation_of(stream, latent), dir / "segmentation.jsonl");
}

// predict

struct PredictArgs {
    std::string model;
    std::string corpus;
    std::uint64_t seed = 0;
};

void cmd_predict(const Global& g, const PredictArgs& a)
{
    const json doc = load_model_document(a.model);
    const std::string kind = model_kind(doc);
    const Alphabet alphabet(doc.at("alphabet").get<std::vector<std::string>>());
    const Corpus corpus = read_corpus(a.corpus, &alphabet);
    double accuracy = 0.0;
    if (kind == "immc") {
        const SavedModel m = model_from_json(doc);
        accuracy = prediction_accuracy(
            [&](std::span<const Code> p) { return immc_predict_next(m.params, m.hyperparams, p); }, corpus,
            a.seed);
    } else if (kind == "fmmc") {
        const FmmcModel m = fmmc_from_json(doc);
        accuracy = prediction_accuracy([&](std::span<const Code> p) { return fmmc_predict_next(m, p); },
                                       corpus, a.seed);
    } else if (kind == "ngram") {
        const NgramModel m = ngram_from_json(doc);
        accuracy =
            prediction_accuracy([&](std::span<const Code> p) { return ngram_predict(m, p); }, corpus, a.seed);
    } else {
        throw std::runtime_error("unknown model_kind '" + kind + "'");
    }
    print_score(g, "accuracy", accuracy,
                json{{"model_kind", kind}, {"sequences", corpus.sequences.size()}, {"seed", a.seed}});
}

// eval

struct EvalArgs {
    std::string segmentation;
    std::string truth;
    std::string out;
};

void cmd_eval(const Global& g, const EvalArgs& a)
{
    const auto pred = load_labels(a.segmentation);
    const auto truth = load_labels(a.truth);
    if (pred.size() != truth.size())
        throw std::runtime_error("segmentation and truth hold different numbers of sequences");
    for (std::size_t s = 0; s < pred.size(); ++s)
        if (pred[s].id != truth[s].id || pred[s].labels.size() != truth[s].labels.size())
            throw std::runtime_error("sequence " + pred[s].id + " does not match the truth file");
    const SegmentationScore score = segmentation_error(flatten_labels(pred), flatten_labels(truth));
    const json doc = score_to_json(score);
    write_text(prepare_dir(a.out) / "score.json", doc.dump(1) + '\n');
    if (g.json_output)
        std::cout << doc.dump() << '\n';
    else
        std::cout << json(score.error_rate).dump() << '\n';
}

// export-dot

struct ExportArgs {
    std::string model;
    double min_prob = 0.05;
    std::string out;
};

std::string quoted(const std::string& s)
{
    return json(s).dump();
}

std::string format_prob(double p)
{
    std::ostringstream os;
    os.precision(2);
    os << std::fixed << p;
    return os.str();
}

void cmd_export_dot(const ExportArgs& a)
{
    const SavedModel model = load_model(a.model);
    const auto& p = model.params;
    const std::size_t B = p.boundary();
    std::vector<std::size_t> states = model.active_states;
    if (states.empty())
        for (std::size_t i = 0; i < p.num_states(); ++i)
            states.push_back(i);
    const fs::path dir = prepare_dir(a.out);
    for (std::size_t i : states) {
        std::ostringstream dot;
        dot << "digraph super_state_" << i << " {\n";
        dot << "  label=" << quoted("super state " + std::to_string(i)) << ";\n";
        std::vector<bool> shown(B, false);
        std::ostringstream edges;
        for (std::size_t r = 0; r < B; ++r) {
            for (std::size_t y = 0; y < B; ++y) {
                const double v = p.theta(i, r, y);
                if (v < a.min_prob)
                    continue;
                shown[r] = shown[y] = true;
                edges << "  " << quoted(model.alphabet.symbol(static_cast<Code>(r))) << " -> "
                      << quoted(model.alphabet.symbol(static_cast<Code>(y))) << " [label=\"" << format_prob(v)
                      << "\"];\n";
            }
        }
        for (std::size_t s = 0; s < B; ++s) {
            const double entry = p.theta(i, B, s);
            if (!shown[s] && entry < a.min_prob)
                continue;
            dot << "  " << quoted(model.alphabet.symbol(static_cast<Code>(s)));
            if (entry >= a.min_prob)
                dot << " [penwidth=2, xlabel=\"in " << format_prob(entry) << "\"]";
            dot << ";\n";
        }
        dot << edges.str() << "}\n";
        write_text(dir / ("super_state_" + std::to_string(i) + ".dot"), dot.str());
    }
    std::cerr << "wrote " << states.size() << " graphs to " << dir.string() << '\n';
}

std::string default_out_dir()
{
    const char* env = std::getenv("IMMC_OUT_DIR");
    return env && *env ? env : ".";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Infinite mixture model of Markov chains: generate, fit, segment, predict, evaluate"};
    app.set_version_flag("--version", IMMC_VERSION);
    app.set_config("--config", "", "flat key = value file; flags override it");
    app.require_subcommand(1);

    Global g;
    app.add_flag("--json", g.json_output, "machine-readable output for score-printing commands");
    const std::string out_default = default_out_dir();

    GenerateArgs gen;
    gen.out = out_default;
    auto* generate = app.add_subcommand("generate", "synthesize a benchmark corpus and its truth labels");
    auto* tc = generate->add_option("--testcase", gen.testcase, "built-in test case")
                   ->check(CLI::IsMember({"I", "II", "III"}));
    auto* spec = generate->add_option("--spec", gen.spec, "JSON spec file")->check(CLI::ExistingFile);
    tc->excludes(spec);
    generate->add_option("--size", gen.size, "size preset")
        ->check(CLI::IsMember({"small", "mid", "large"}))
        ->capture_default_str();
    generate->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    generate->add_option("--out", gen.out, "output directory (default $IMMC_OUT_DIR or .)");

    FitArgs fa;
    fa.out = out_default;
    auto* fitcmd = app.add_subcommand("fit", "run the Gibbs sampler or a baseline on a corpus");
    fitcmd->add_option("--corpus", fa.corpus, "corpus file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
    fitcmd->add_option("--truth", fa.truth, "truth labels; adds error rates to the report")
        ->check(CLI::ExistingFile);
    fitcmd->add_option("--iters", fa.iters, "iterations after burn-in")->capture_default_str();
    fitcmd->add_option("--burn-in", fa.burn_in, "burn-in iterations")->capture_default_str();
    fitcmd->add_option("--L", fa.h.L, "truncation level")->check(CLI::PositiveNumber)->capture_default_str();
    fitcmd->add_option("--gamma", fa.h.gamma)->capture_default_str();
    fitcmd->add_option("--alpha", fa.h.alpha)->capture_default_str();
    fitcmd->add_option("--kappa", fa.h.kappa)->capture_default_str();
    fitcmd->add_option("--sigma", fa.h.sigma)->capture_default_str();
    fitcmd->add_option("--lambda", fa.h.lambda)->capture_default_str();
    auto* seed = fitcmd->add_option("--seed", fa.seeds, "sampler seed")->expected(1);
    fitcmd->add_option("--seeds", fa.seeds, "independent chains run in parallel")->excludes(seed);
    fitcmd->add_option("--model-kind", fa.model_kind, "immc, fmmc or ngram")
        ->check(CLI::IsMember({"immc", "fmmc", "ngram"}))
        ->capture_default_str();
    fitcmd->add_option("--components", fa.components, "fmmc mixture size")->capture_default_str();
    fitcmd->add_option("--restarts", fa.restarts, "fmmc EM restarts")->capture_default_str();
    fitcmd->add_option("--order", fa.order, "ngram order")->capture_default_str();
    fitcmd->add_option("--out", fa.out, "output directory (default $IMMC_OUT_DIR or .)");

    SegmentArgs sa;
    sa.out = out_default;
    auto* segment = app.add_subcommand("segment", "label a corpus with a saved model");
    segment->add_option("--model", sa.model)->required()->check(CLI::ExistingFile);
    segment->add_option("--corpus", sa.corpus)->required()->check(CLI::ExistingFile);
    segment->add_option("--seed", sa.seed)->capture_default_str();
    segment->add_option("--out", sa.out, "output directory (default $IMMC_OUT_DIR or .)");

    PredictArgs pa;
    auto* predict = app.add_subcommand("predict", "next-event accuracy on a held-out corpus");
    predict->add_option("--model", pa.model)->required()->check(CLI::ExistingFile);
    predict->add_option("--corpus", pa.corpus)->required()->check(CLI::ExistingFile);
    predict->add_option("--seed", pa.seed, "seed of the cut positions")->capture_default_str();

    EvalArgs ea;
    ea.out = out_default;
    auto* eval = app.add_subcommand("eval", "matched-label segmentation error");
    eval->add_option("--segmentation", ea.segmentation)->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", ea.truth)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", ea.out, "directory of score.json (default $IMMC_OUT_DIR or .)");

    ExportArgs xa;
    xa.out = out_default;
    auto* exportdot = app.add_subcommand("export-dot", "one DOT graph per active super state");
    exportdot->add_option("--model", xa.model)->required()->check(CLI::ExistingFile);
    exportdot->add_option("--min-prob", xa.min_prob)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    exportdot->add_option("--out", xa.out, "output directory (default $IMMC_OUT_DIR or .)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            if (gen.testcase.empty() && gen.spec.empty())
                throw UsageError("generate needs --testcase or --spec");
            cmd_generate(gen);
        } else if (fitcmd->parsed()) {
            cmd_fit(g, fa);
        } else if (segment->parsed()) {
            cmd_segment(sa);
        } else if (predict->parsed()) {
            cmd_predict(g, pa);
        } else if (eval->parsed()) {
            cmd_eval(g, ea);
        } else if (exportdot->parsed()) {
            cmd_export_dot(xa);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include "immc/model_io.hpp"

#include <fstream>
#include <sstream>

namespace immc {

using json = nlohmann::json;

json hyperparams_to_json(const Hyperparams& h)
{
    return json{{"gamma", h.gamma}, {"alpha", h.alpha}, {"kappa", h.kappa}, {"sigma", h.sigma},
                {"lambda", h.lambda}, {"L", h.L}, {"seed", h.seed}};
}

Hyperparams hyperparams_from_json(const json& j)
{
    Hyperparams h;
    h.gamma = j.at("gamma").get<double>();
    h.alpha = j.at("alpha").get<double>();
    h.kappa = j.at("kappa").get<double>();
    h.sigma = j.at("sigma").get<double>();
    h.lambda = j.at("lambda").get<double>();
    h.L = j.at("L").get<std::size_t>();
    h.seed = j.value("seed", std::uint64_t{0});
    h.validate();
    return h;
}

json model_to_json(const SavedModel& model)
{
    const auto& p = model.params;
    const std::size_t L = p.num_states();
    const std::size_t K = p.num_codes();
    json pi = json::array(), psi = json::array(), theta = json::array();
    for (std::size_t i = 0; i < L; ++i) {
        auto pr = p.pi_row(i);
        pi.push_back(std::vector<double>(pr.begin(), pr.end()));
        auto sr = p.psi_row(i);
        psi.push_back(std::vector<double>(sr.begin(), sr.end()));
        json rows = json::array();
        for (std::size_t k = 0; k < K; ++k) {
            auto tr = p.theta_row(i, k);
            rows.push_back(std::vector<double>(tr.begin(), tr.end()));
        }
        theta.push_back(std::move(rows));
    }
    return json{{"format_version", kModelFormatVersion},
                {"model_kind", "immc"},
                {"hyperparams", hyperparams_to_json(model.hyperparams)},
                {"alphabet", model.alphabet.symbols()},
                {"beta", p.beta_data()},
                {"pi", std::move(pi)},
                {"psi", std::move(psi)},
                {"theta", std::move(theta)},
                {"seed", model.hyperparams.seed},
                {"iterations_run", model.iterations_run},
                {"active_states", model.active_states}};
}

namespace {

void check_version(const json& j)
{
    if (!j.is_object() || !j.contains("format_version"))
        throw ModelError("model document lacks format_version");
    int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
        throw ModelError("unsupported model format_version " + std::to_string(version) +
                         " (expected " + std::to_string(kModelFormatVersion) + ")");
}

void read_row(const json& src, std::span<double> dst, const char* what)
{
    if (!src.is_array() || src.size() != dst.size())
        throw ModelError(std::string("model field '") + what + "' has the wrong shape");
    for (std::size_t k = 0; k < dst.size(); ++k)
        dst[k] = src[k].get<double>();
}

}  // namespace

SavedModel model_from_json(const json& j)
{
    check_version(j);
    if (model_kind(j) != "immc")
        throw ModelError("document holds a '" + model_kind(j) + "' model, not an immc model");
    try {
        SavedModel out;
        out.hyperparams = hyperparams_from_json(j.at("hyperparams"));
        out.alphabet = Alphabet(j.at("alphabet").get<std::vector<std::string>>());
        out.iterations_run = j.value("iterations_run", std::size_t{0});
        out.active_states = j.value("active_states", std::vector<std::size_t>{});
        const std::size_t L = out.hyperparams.L;
        const std::size_t K = out.alphabet.num_codes();
        out.params = ModelParams(L, K);
        auto& p = out.params;
        read_row(j.at("beta"), p.beta(), "beta");
        const auto& pi = j.at("pi");
        const auto& psi = j.at("psi");
        const auto& theta = j.at("theta");
        if (pi.size() != L || psi.size() != L || theta.size() != L)
            throw ModelError("model arrays do not have L rows");
        for (std::size_t i = 0; i < L; ++i) {
            read_row(pi[i], p.pi_row(i), "pi");
            read_row(psi[i], p.psi_row(i), "psi");
            if (theta[i].size() != K)
                throw ModelError("model field 'theta' has the wrong shape");
            for (std::size_t k = 0; k < K; ++k)
                read_row(theta[i][k], p.theta_row(i, k), "theta");
        }
        for (std::size_t i : out.active_states)
            if (i >= L)
                throw ModelError("active state index out of range");
        return out;
    } catch (const json::exception& e) {
        throw ModelError(std::string("corrupt model document: ") + e.what());
    } catch (const CorpusError& e) {
        throw ModelError(std::string("corrupt model alphabet: ") + e.what());
    }
}

void save_model(const SavedModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw ModelError("cannot write model file " + path.string());
    out << model_to_json(model).dump(1) << '\n';
}

json load_model_document(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ModelError("cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ModelError("corrupt model file " + path.string() + ": " + e.what());
    }
    check_version(doc);
    return doc;
}

std::string model_kind(const json& doc)
{
    return doc.value("model_kind", std::string("immc"));
}

SavedModel load_model(const std::filesystem::path& path)
{
    return model_from_json(load_model_document(path));
}

}  // namespace immc

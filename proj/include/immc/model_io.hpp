#pragma once

#include "immc/corpus.hpp"
#include "immc/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace immc {

inline constexpr int kModelFormatVersion = 1;

struct SavedModel {
    Hyperparams hyperparams;
    Alphabet alphabet;
    ModelParams params;
    std::size_t iterations_run = 0;
    /// Super states used by the final sample; empty means all.
    std::vector<std::size_t> active_states;
};

nlohmann::json hyperparams_to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const SavedModel& model);
/// Throws ModelError on a version mismatch or malformed document.
SavedModel model_from_json(const nlohmann::json& j);

void save_model(const SavedModel& model, const std::filesystem::path& path);
SavedModel load_model(const std::filesystem::path& path);

/// Reads any model envelope and checks its format_version; returns the
/// document for dispatch on model_kind.
nlohmann::json load_model_document(const std::filesystem::path& path);
std::string model_kind(const nlohmann::json& doc);

}  // namespace immc

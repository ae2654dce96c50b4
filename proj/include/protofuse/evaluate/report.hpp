#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "protofuse/evaluate/protocol.hpp"

namespace protofuse::evaluate {

/// 64-bit FNV-1a of the config's canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// {recipe, domain, config, config_hash, cells: [{k, seed, f1, missing}],
///  summary: [{k, mean, std, n}]}. Missing scores are null.
nlohmann::json report_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

/// Header "k,seed,macro_f1"; a missing cell leaves the score field empty.
std::string report_csv(const EvaluationReport& report);

/// Mean macro-F1 against K with one-sigma error bars.
std::string report_svg(const EvaluationReport& report);

struct ReportFiles {
  std::filesystem::path json;
  std::filesystem::path csv;
  std::filesystem::path plot;
};

/// Writes {domain}_{recipe}.json, .csv and .svg into `out_dir`, creating it
/// if needed. Throws std::invalid_argument for a report without cells and
/// std::runtime_error when a file cannot be written.
ReportFiles emit_report(const EvaluationReport& report, const std::filesystem::path& out_dir);

}  // namespace protofuse::evaluate

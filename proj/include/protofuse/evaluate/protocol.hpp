#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protofuse/corpus/dataset.hpp"

namespace protofuse::evaluate {

struct ProtocolSpec {
  corpus::Dataset test_domain;
  std::vector<std::size_t> k_values{16, 32, 64, 128, 256};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double holdout_fraction = 0.2;
  std::uint64_t holdout_seed = 0;
  std::string recipe;
  nlohmann::json config = nlohmann::json::object();

  /// Throws std::invalid_argument unless k_values is non-empty and strictly
  /// ascending and seeds are non-empty and distinct.
  void validate() const;
};

/// Inputs of one (k, seed) cell.
struct CellContext {
  const corpus::Dataset& train;    // non-held-out side of the test domain
  const corpus::Dataset& kshot;    // k per class drawn from `train`
  const corpus::Dataset& holdout;  // shared by every cell
  std::size_t k;
  std::uint64_t seed;
};

/// Fine-tunes on the cell's K-shot set and returns one predicted class per
/// holdout example, in holdout order. Must be safe to call concurrently.
using CellFn = std::function<std::vector<std::size_t>(const CellContext&)>;

struct Cell {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::optional<double> f1;  // empty when the cell failed
  std::string error;
};

struct SummaryRow {
  std::size_t k = 0;
  std::optional<double> mean;
  std::optional<double> std;
  std::size_t n = 0;  // cells that produced a score
};

struct EvaluationReport {
  std::string recipe;
  std::string domain_id;
  nlohmann::json config = nlohmann::json::object();
  std::vector<Cell> cells;  // k-major, seeds in spec order
  std::vector<SummaryRow> summary;
};

/// Splits the holdout once, then for every (k, seed) draws k per class from
/// the train side with that seed, runs `fit_predict` and scores macro-F1.
/// A cell that throws is kept as missing with its message. Mean and
/// population sigma are taken over the scored seeds of each k. With jobs > 1
/// cells run on that many threads; results do not depend on jobs.
EvaluationReport run_protocol(const ProtocolSpec& spec, const CellFn& fit_predict,
                              std::size_t jobs = 1);

struct Selection {
  std::size_t index = 0;
  std::vector<double> scores;
};

/// Scores each candidate by macro-F1 on a validation slice of
/// `validation_k` per class drawn from what is left after the K-shot sample,
/// and picks the best, earliest on ties. `fit_predict(i, kshot, validation)`
/// returns predictions for the validation examples.
Selection select_candidate(
    std::size_t n_candidates, const corpus::Dataset& domain, std::size_t k, std::uint64_t seed,
    const std::function<std::vector<std::size_t>(std::size_t, const corpus::Dataset&,
                                                 const corpus::Dataset&)>& fit_predict,
    std::size_t validation_k = 64);

/// Candidate-typed wrapper around select_candidate.
template <class Config, class FitPredict>
const Config& select_hyperparams(const std::vector<Config>& candidates,
                                 const corpus::Dataset& domain, std::size_t k, std::uint64_t seed,
                                 FitPredict fit_predict, std::size_t validation_k = 64) {
  const Selection s = select_candidate(
      candidates.size(), domain, k, seed,
      [&](std::size_t i, const corpus::Dataset& kshot, const corpus::Dataset& validation) {
        return fit_predict(candidates[i], kshot, validation);
      },
      validation_k);
  return candidates[s.index];
}

}  // namespace protofuse::evaluate

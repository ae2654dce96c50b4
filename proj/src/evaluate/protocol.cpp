#include "protofuse/evaluate/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>
#include <thread>

#include "protofuse/evaluate/metrics.hpp"
#include "protofuse/rng.hpp"

namespace protofuse::evaluate {

void ProtocolSpec::validate() const {
  if (k_values.empty()) throw std::invalid_argument("protocol: no k values");
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] == 0) throw std::invalid_argument("protocol: k values must be positive");
    if (i > 0 && k_values[i] <= k_values[i - 1]) {
      throw std::invalid_argument("protocol: k values must be strictly ascending");
    }
  }
  if (seeds.empty()) throw std::invalid_argument("protocol: no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("protocol: seeds must be distinct");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("protocol: holdout fraction must lie in (0, 1)");
  }
}

EvaluationReport run_protocol(const ProtocolSpec& spec, const CellFn& fit_predict,
                              std::size_t jobs) {
  spec.validate();
  const corpus::Split split =
      corpus::holdout_split(spec.test_domain, spec.holdout_fraction, spec.holdout_seed);
  const corpus::Dataset& train = split.first;
  const corpus::Dataset& holdout = split.second;
  const auto counts = train.class_counts();
  const std::size_t k_max = spec.k_values.back();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < k_max) {
      throw std::invalid_argument("protocol: class '" + train.manifest().label(c).name + "' has " +
                                  std::to_string(counts[c]) + " training examples, K = " +
                                  std::to_string(k_max) + " needs more");
    }
  }
  std::vector<std::size_t> golds;
  for (const auto& ex : holdout.examples()) golds.push_back(ex.label_index);

  EvaluationReport report;
  report.recipe = spec.recipe;
  report.domain_id = spec.test_domain.domain_id();
  report.config = spec.config;
  for (auto k : spec.k_values) {
    for (auto seed : spec.seeds) report.cells.push_back(Cell{k, seed, std::nullopt, {}});
  }

  auto run_cell = [&](Cell& cell) {
    try {
      const corpus::Split ks = corpus::kshot_sample(train, cell.k, cell.seed);
      const auto preds = fit_predict(CellContext{train, ks.first, holdout, cell.k, cell.seed});
      cell.f1 = macro_f1(preds, golds, holdout.n_classes());
    } catch (const std::exception& e) {
      cell.f1.reset();
      cell.error = e.what();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, report.cells.size());
  if (workers == 1) {
    for (auto& cell : report.cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < report.cells.size(); i = next++) run_cell(report.cells[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (auto k : spec.k_values) {
    SummaryRow row;
    row.k = k;
    std::vector<double> scores;
    for (const auto& cell : report.cells) {
      if (cell.k == k && cell.f1) scores.push_back(*cell.f1);
    }
    row.n = scores.size();
    if (!scores.empty()) {
      const MeanStd ms = population_mean_std(scores);
      row.mean = ms.mean;
      row.std = ms.std;
    }
    report.summary.push_back(row);
  }
  return report;
}

Selection select_candidate(
    std::size_t n_candidates, const corpus::Dataset& domain, std::size_t k, std::uint64_t seed,
    const std::function<std::vector<std::size_t>(std::size_t, const corpus::Dataset&,
                                                 const corpus::Dataset&)>& fit_predict,
    std::size_t validation_k) {
  if (n_candidates == 0) throw std::invalid_argument("select_hyperparams: no candidates");
  const corpus::Split ks = corpus::kshot_sample(domain, k, seed);
  corpus::Dataset validation = corpus::kshot_sample(ks.second, validation_k, Rng::mix(seed)).first;
  validation = validation.with(validation.examples(), corpus::SplitTag::validation);
  std::vector<std::size_t> golds;
  for (const auto& ex : validation.examples()) golds.push_back(ex.label_index);

  Selection out;
  for (std::size_t i = 0; i < n_candidates; ++i) {
    const auto preds = fit_predict(i, ks.first, validation);
    out.scores.push_back(macro_f1(preds, golds, validation.n_classes()));
    if (out.scores[i] > out.scores[out.index]) out.index = i;
  }
  return out;
}

}  // namespace protofuse::evaluate

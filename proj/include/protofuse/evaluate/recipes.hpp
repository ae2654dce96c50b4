#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protofuse/encoder/mlm.hpp"
#include "protofuse/evaluate/protocol.hpp"
#include "protofuse/fusion/fusion.hpp"
#include "protofuse/metalearn/finetune.hpp"
#include "protofuse/metalearn/learner.hpp"

namespace protofuse::evaluate {

/// A named model recipe: how the starting model is obtained and which head
/// the K-shot stage fine-tunes.
struct Recipe {
  std::string name;
  std::optional<metalearn::Algorithm> meta;  // meta-training before fine-tuning
  fusion::FusionKind fusion = fusion::FusionKind::none;
  metalearn::HeadKind head = metalearn::HeadKind::linear;
  bool mlm = false;     // masked-LM pretraining on the test domain's train side
  bool binary = false;  // supervised pretraining on binary-collapsed training domains
};

const std::vector<Recipe>& recipes();
/// Throws std::invalid_argument naming every valid recipe.
const Recipe& find_recipe(std::string_view name);

struct PipelineConfig {
  encoder::EncoderConfig encoder;
  std::size_t vocab_size = 8000;
  fusion::FusionStrategy fusion;  // joint_heads / variant; kind comes from the recipe
  metalearn::MetaConfig meta;
  metalearn::FinetuneOptions finetune;
  /// Head rate per K for the K-shot stage; K without an entry keeps
  /// finetune.rates.head.
  std::map<std::size_t, double> head_rate_by_k;
  encoder::MlmOptions mlm;
  std::set<std::string> neutral_labels;
  std::size_t binary_epochs = 2;
};

/// Full-scale defaults for a recipe: meta epochs and component rates,
/// fine-tune epochs and rates (per K where they vary), 5 MLM epochs.
PipelineConfig recipe_defaults(const Recipe& recipe);

nlohmann::json pipeline_config_json(const PipelineConfig& cfg);

/// The model a recipe starts its K-shot stage from. With a checkpoint the
/// checkpoint's model is used (its fusion must match the recipe); otherwise a
/// fresh model over a vocabulary of every given domain is created and, for
/// meta recipes, meta-trained on `train_domains`. MLM and binary pretraining
/// run here once, shared by every cell.
fusion::Model prepare_model(const Recipe& recipe, const PipelineConfig& cfg,
                            const std::vector<const corpus::Dataset*>& train_domains,
                            const corpus::Dataset& test_domain, const corpus::Dataset& test_train,
                            const metalearn::LearnerState* checkpoint = nullptr,
                            std::ostream* meta_log = nullptr);

/// Cell runner that fine-tunes a copy of `base` on the cell's K-shot set
/// (seeded by the cell seed) and predicts the holdout.
CellFn finetune_cell(const Recipe& recipe, const fusion::Model& base,
                     const metalearn::FinetuneOptions& options,
                     const std::map<std::size_t, double>& head_rate_by_k = {});

struct EvaluateRequest {
  const Recipe* recipe = nullptr;
  PipelineConfig config;
  std::vector<const corpus::Dataset*> train_domains;
  corpus::Dataset test_domain;
  std::vector<std::size_t> k_values{16, 32, 64, 128, 256};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double holdout_fraction = 0.2;
  std::uint64_t holdout_seed = 0;
  const metalearn::LearnerState* checkpoint = nullptr;
  std::size_t jobs = 1;
};

/// Holdout split, model preparation and the full (k, seed) grid.
EvaluationReport evaluate_recipe(const EvaluateRequest& request);

}  // namespace protofuse::evaluate

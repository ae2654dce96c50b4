#include "protofuse/evaluate/recipes.hpp"

#include <stdexcept>

#include "protofuse/metalearn/checkpoint.hpp"
#include "protofuse/metalearn/meta_train.hpp"

namespace protofuse::evaluate {

using fusion::FusionKind;
using metalearn::Algorithm;
using metalearn::HeadKind;
using nlohmann::json;

const std::vector<Recipe>& recipes() {
  static const std::vector<Recipe> all{
      {"untrained", std::nullopt, FusionKind::none, HeadKind::linear, false, false},
      {"retrained", std::nullopt, FusionKind::none, HeadKind::linear, true, false},
      {"binary", std::nullopt, FusionKind::none, HeadKind::linear, false, true},
      {"protonet", Algorithm::protonet, FusionKind::none, HeadKind::prototype, false, false},
      {"protomaml", Algorithm::protomaml, FusionKind::none, HeadKind::protomaml, false, false},
      {"mldg", Algorithm::mldg, FusionKind::none, HeadKind::mldg, false, false},
      {"protonet_token", Algorithm::protonet, FusionKind::token, HeadKind::prototype, false, false},
      {"protonet_label", Algorithm::protonet, FusionKind::label, HeadKind::prototype, false, false},
      {"protonet_full", Algorithm::protonet, FusionKind::full, HeadKind::prototype, false, false},
      {"je_protonet", Algorithm::protonet, FusionKind::joint, HeadKind::prototype, false, false},
      {"je_protonet_untrained", std::nullopt, FusionKind::joint, HeadKind::prototype, false, false},
      {"je_protonet_cls", Algorithm::protonet, FusionKind::joint, HeadKind::feed_forward, false, false},
  };
  return all;
}

const Recipe& find_recipe(std::string_view name) {
  for (const auto& r : recipes()) {
    if (r.name == name) return r;
  }
  std::string valid;
  for (const auto& r : recipes()) valid += (valid.empty() ? "" : ", ") + r.name;
  throw std::invalid_argument("unknown recipe '" + std::string(name) + "'; valid recipes: " + valid);
}

PipelineConfig recipe_defaults(const Recipe& recipe) {
  PipelineConfig c;
  c.encoder.d_model = 48;
  c.encoder.n_heads = 4;
  c.encoder.max_len = 64;
  c.mlm.epochs = 5;
  c.mlm.lr = 2e-5;
  c.meta.meta_epochs = 5;
  c.meta.tasks_per_epoch = 300;
  c.finetune.min_lr = 1e-5;
  c.finetune.batch_size = 16;
  auto& ft = c.finetune;
  const std::string& n = recipe.name;
  if (n == "mldg") {
    c.meta.rates = ag::ComponentRates{5e-5, 5e-5, 1e-4};
    ft.epochs = 3;
    ft.rates = {2e-5, 2e-5, 5e-3};
    c.head_rate_by_k = {{16, 5e-3}, {32, 5e-3}, {64, 7e-3}, {128, 7e-3}, {256, 5e-4}};
  } else if (n == "protomaml") {
    c.meta.rates = ag::ComponentRates{5e-5, 5e-5, 1e-4};
    ft.epochs = 4;
    ft.rates = {2e-5, 2e-5, 1e-3};
    c.head_rate_by_k = {{16, 1e-4}, {32, 1e-4}};
  } else if (n == "je_protonet" || n == "je_protonet_untrained") {
    c.meta.rates = ag::ComponentRates{5e-5, 2e-5, 1e-4};
    ft.epochs = 3;
    ft.rates = {2e-5, 2e-5, 2e-5};
  } else if (n == "je_protonet_cls") {
    c.meta.rates = ag::ComponentRates{5e-5, 2e-5, 1e-4};
    ft.epochs = 3;
    ft.rates = {2e-5, 2e-5, 1e-4};
  } else if (recipe.meta) {
    c.meta.rates = ag::ComponentRates{2e-5, 2e-5, 1e-4};
    ft.epochs = 2;
    ft.rates = {1e-5, 1e-5, 1e-5};
  } else {
    ft.epochs = 3;
    ft.rates = {2e-5, 2e-5, 2e-5};
  }
  return c;
}

json pipeline_config_json(const PipelineConfig& c) {
  const auto& f = c.finetune;
  return json{
      {"encoder", metalearn::encoder_config_json(c.encoder)},
      {"vocab_size", c.vocab_size},
      {"fusion", metalearn::fusion_json(c.fusion)},
      {"meta", metalearn::meta_config_json(c.meta)},
      {"finetune",
       json{{"epochs", f.epochs},
            {"rates", json{{"encoder", f.rates.encoder}, {"attention", f.rates.attention}, {"head", f.rates.head}}},
            {"min_lr", f.min_lr},
            {"batch_size", f.batch_size},
            {"distance", metalearn::to_string(f.distance)}}},
      {"head_rate_by_k", [&] {
         json m = json::array();
         for (const auto& [k, r] : c.head_rate_by_k) m.push_back(json{{"k", k}, {"rate", r}});
         return m;
       }()},
      {"mlm", json{{"epochs", c.mlm.epochs},
                   {"mask_rate", c.mlm.mask_rate},
                   {"batch_size", c.mlm.batch_size},
                   {"lr", c.mlm.lr},
                   {"seed", c.mlm.seed}}},
      {"neutral_labels", c.neutral_labels},
      {"binary_epochs", c.binary_epochs}};
}

namespace {

corpus::Dataset binary_corpus(const std::vector<const corpus::Dataset*>& domains,
                              const std::set<std::string>& neutral) {
  std::optional<corpus::DomainManifest> manifest;
  std::vector<corpus::Example> examples;
  for (const auto* d : domains) {
    std::set<std::string> present;
    for (const auto& l : d->manifest().labels) {
      if (neutral.count(l.name)) present.insert(l.name);
    }
    if (present.empty()) continue;
    const corpus::Dataset collapsed = corpus::collapse_binary(*d, present);
    if (!manifest) {
      manifest = collapsed.manifest();
      manifest->domain_id = "binary";
      manifest->source_meta.clear();
    }
    for (auto ex : collapsed.examples()) {
      ex.domain_id = "binary";
      examples.push_back(std::move(ex));
    }
  }
  if (!manifest) {
    throw std::invalid_argument("binary recipe: no training domain has a label listed as neutral");
  }
  return corpus::Dataset(*manifest, std::move(examples));
}

}  // namespace

fusion::Model prepare_model(const Recipe& recipe, const PipelineConfig& cfg,
                            const std::vector<const corpus::Dataset*>& train_domains,
                            const corpus::Dataset& test_domain, const corpus::Dataset& test_train,
                            const metalearn::LearnerState* checkpoint, std::ostream* meta_log) {
  if (recipe.meta && checkpoint) {
    if (checkpoint->model.fusion.kind != recipe.fusion) {
      throw std::invalid_argument("recipe '" + recipe.name + "' needs fusion " +
                                  fusion::to_string(recipe.fusion) + " but the checkpoint uses " +
                                  fusion::to_string(checkpoint->model.fusion.kind));
    }
    return checkpoint->model.clone();
  }
  if ((recipe.meta || recipe.binary) && train_domains.empty()) {
    throw std::invalid_argument("recipe '" + recipe.name + "' needs training domains");
  }
  std::vector<const corpus::Dataset*> vocab_sources = train_domains;
  vocab_sources.push_back(&test_domain);
  fusion::FusionStrategy strategy = cfg.fusion;
  strategy.kind = recipe.fusion;
  fusion::Model model = fusion::Model::create(cfg.encoder, strategy,
                                              fusion::build_model_vocab(vocab_sources, cfg.vocab_size));
  if (recipe.meta) {
    metalearn::LearnerState state = metalearn::LearnerState::fresh(std::move(model), cfg.meta);
    metalearn::meta_train(*recipe.meta, train_domains, state, meta_log);
    model = std::move(state.model);
  }
  if (recipe.mlm) encoder::mlm_pretrain(model.params, model.encoder, model.vocab, test_train, cfg.mlm);
  if (recipe.binary) {
    metalearn::FinetuneOptions opts = cfg.finetune;
    opts.head = HeadKind::linear;
    opts.epochs = cfg.binary_epochs;
    model = metalearn::supervised_finetune(model, binary_corpus(train_domains, cfg.neutral_labels), opts)
                .model;
  }
  return model;
}

CellFn finetune_cell(const Recipe& recipe, const fusion::Model& base,
                     const metalearn::FinetuneOptions& options,
                     const std::map<std::size_t, double>& head_rate_by_k) {
  return [&recipe, &base, options, head_rate_by_k](const CellContext& cell) {
    metalearn::FinetuneOptions opts = options;
    opts.head = recipe.head;
    opts.seed = cell.seed;
    if (auto it = head_rate_by_k.find(cell.k); it != head_rate_by_k.end()) opts.rates.head = it->second;
    const auto clf = metalearn::supervised_finetune(base, cell.kshot, opts);
    return clf.predict(cell.holdout.examples());
  };
}

EvaluationReport evaluate_recipe(const EvaluateRequest& req) {
  if (!req.recipe) throw std::invalid_argument("evaluate: no recipe");
  ProtocolSpec spec;
  spec.test_domain = req.test_domain;
  spec.k_values = req.k_values;
  spec.seeds = req.seeds;
  spec.holdout_fraction = req.holdout_fraction;
  spec.holdout_seed = req.holdout_seed;
  spec.recipe = req.recipe->name;
  spec.validate();
  PipelineConfig cfg = req.config;
  const bool from_checkpoint = req.checkpoint != nullptr && req.recipe->meta.has_value();
  if (from_checkpoint) {
    cfg.encoder = req.checkpoint->model.encoder;
    cfg.fusion = req.checkpoint->model.fusion;
    cfg.meta = req.checkpoint->config;
  }
  spec.config = json{{"recipe", req.recipe->name},
                     {"pipeline", pipeline_config_json(cfg)},
                     {"k_values", req.k_values},
                     {"seeds", req.seeds},
                     {"holdout_fraction", req.holdout_fraction},
                     {"holdout_seed", req.holdout_seed},
                     {"from_checkpoint", from_checkpoint}};

  const corpus::Split split = corpus::holdout_split(req.test_domain, req.holdout_fraction, req.holdout_seed);
  const fusion::Model base =
      prepare_model(*req.recipe, cfg, req.train_domains, req.test_domain, split.first, req.checkpoint);
  return run_protocol(spec, finetune_cell(*req.recipe, base, cfg.finetune, cfg.head_rate_by_k), req.jobs);
}

}  // namespace protofuse::evaluate

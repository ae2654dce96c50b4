// protofuse command-line driver: ingest, meta-train, evaluate, report.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "protofuse/corpus/dataset.hpp"
#include "protofuse/corpus/io.hpp"
#include "protofuse/corpus/text.hpp"
#include "protofuse/evaluate/recipes.hpp"
#include "protofuse/evaluate/report.hpp"
#include "protofuse/metalearn/checkpoint.hpp"
#include "protofuse/metalearn/meta_train.hpp"

namespace fs = std::filesystem;
using namespace protofuse;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

// Raised for failures that should map to the runtime exit code even when the
// underlying exception is a validation error (e.g. meta-training).
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 1;
};

struct ModelFlags {
  std::optional<std::size_t> d_model, layers, heads, max_len, vocab_size;
  std::optional<double> dropout;
  std::optional<std::string> fusion;
  std::string joint_variant = "literal";
  std::size_t joint_heads = 3;
  std::optional<std::size_t> epochs, tasks, inner_steps;
  std::vector<std::size_t> k_choices;
  std::optional<double> inner_lr, outer_lr, mldg_beta, rate_e, rate_a, rate_c;
  std::string distance = "euclidean";
};

struct IngestFlags {
  std::string manifest, records, name;
  bool binary = false;
  std::vector<std::string> neutral;
};

struct MetaFlags {
  std::vector<std::string> domains, extra_vocab;
  std::string algo = "protonet";
};

struct EvalFlags {
  std::string test, recipe, checkpoint;
  std::vector<std::string> domains;
  std::vector<std::size_t> k{16, 32, 64, 128, 256};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double holdout = 0.2;
  std::optional<std::uint64_t> holdout_seed;
  std::optional<std::size_t> ft_epochs, ft_batch, mlm_epochs, binary_epochs;
  std::optional<double> ft_e, ft_a, ft_c, ft_min_lr, mlm_lr, mlm_mask;
  std::vector<std::string> neutral;
};

struct ReportFlags {
  std::vector<std::string> inputs;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--encoder.d-model", m.d_model, "Hidden width (default 48)");
  cmd->add_option("--encoder.layers", m.layers, "Transformer blocks (default 2)");
  cmd->add_option("--encoder.heads", m.heads, "Self-attention heads (default 4)");
  cmd->add_option("--encoder.max-len", m.max_len, "Padded sequence length (default 64)");
  cmd->add_option("--encoder.dropout", m.dropout, "Dropout rate (default 0.1)");
  cmd->add_option("--vocab-size", m.vocab_size, "Corpus tokens kept in the vocabulary (default 8000)");
  cmd->add_option("--fusion", m.fusion, "Label fusion: none|token|label|full|joint (default none / recipe's)")
      ->check(CLI::IsMember({"none", "token", "label", "full", "joint"}));
  cmd->add_option("--joint-variant", m.joint_variant, "Joint attention values: literal|standard")
      ->check(CLI::IsMember({"literal", "standard"}))
      ->capture_default_str();
  cmd->add_option("--joint-heads", m.joint_heads, "Joint attention heads")->capture_default_str();
  cmd->add_option("--epochs", m.epochs, "Meta epochs (default 5)");
  cmd->add_option("--tasks", m.tasks, "Tasks per meta epoch (default 300)");
  cmd->add_option("--k-choices", m.k_choices, "Episode K values (default 16,32,64,128)")->delimiter(',');
  cmd->add_option("--inner-lr", m.inner_lr, "Inner / virtual step rate alpha (default 1e-3)");
  cmd->add_option("--outer-lr", m.outer_lr, "Outer rate gamma when no component rates are set (default 1e-4)");
  cmd->add_option("--mldg-beta", m.mldg_beta, "Weight beta of the meta-test loss (default 1)");
  cmd->add_option("--inner-steps", m.inner_steps, "ProtoMAML inner steps / MLDG head-fit steps (default 5)");
  cmd->add_option("--distance", m.distance, "Prototype distance: euclidean|squared_euclidean")
      ->check(CLI::IsMember({"euclidean", "squared_euclidean"}))
      ->capture_default_str();
  cmd->add_option("--rate.encoder", m.rate_e, "Meta rate of encoder parameters (recipe default)");
  cmd->add_option("--rate.attention", m.rate_a, "Meta rate of joint attention parameters (recipe default)");
  cmd->add_option("--rate.head", m.rate_c, "Meta rate of head parameters (recipe default)");
}

void apply_model_flags(const ModelFlags& m, const Globals& g, evaluate::PipelineConfig& c) {
  if (m.d_model) c.encoder.d_model = *m.d_model;
  if (m.layers) c.encoder.n_layers = *m.layers;
  if (m.heads) c.encoder.n_heads = *m.heads;
  if (m.max_len) c.encoder.max_len = *m.max_len;
  if (m.dropout) c.encoder.dropout = *m.dropout;
  if (m.vocab_size) c.vocab_size = *m.vocab_size;
  c.encoder.seed = g.seed;
  c.fusion.variant = fusion::joint_variant_from_string(m.joint_variant);
  c.fusion.joint_heads = m.joint_heads;
  if (m.epochs) c.meta.meta_epochs = *m.epochs;
  if (m.tasks) c.meta.tasks_per_epoch = *m.tasks;
  if (!m.k_choices.empty()) c.meta.k_choices = m.k_choices;
  if (m.inner_lr) c.meta.inner_lr = *m.inner_lr;
  if (m.outer_lr) c.meta.outer_lr = *m.outer_lr;
  if (m.mldg_beta) c.meta.mldg_beta = *m.mldg_beta;
  if (m.inner_steps) c.meta.inner_steps = *m.inner_steps;
  c.meta.distance = metalearn::distance_from_string(m.distance);
  c.finetune.distance = c.meta.distance;
  if (m.rate_e || m.rate_a || m.rate_c) {
    ag::ComponentRates r = c.meta.effective_rates();
    if (m.rate_e) r.encoder = *m.rate_e;
    if (m.rate_a) r.attention = *m.rate_a;
    if (m.rate_c) r.head = *m.rate_c;
    c.meta.rates = r;
  }
  c.meta.seed = g.seed;
  c.mlm.seed = g.seed;
}

// Flat "key = value" file; '#' starts a comment. Keys are long flag names.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = corpus::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    std::string key = corpus::trim(line.substr(0, eq));
    std::string value = corpus::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw std::invalid_argument(path + ":" + std::to_string(n) + ": empty key");
    if (!seen.insert(key).second) {
      throw std::invalid_argument(path + ":" + std::to_string(n) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

std::string env_out() {
  const char* v = std::getenv("PROTOFUSE_OUT");
  return v && *v ? v : "out";
}

std::vector<corpus::Dataset> load_all(const std::vector<std::string>& paths) {
  std::vector<corpus::Dataset> out;
  for (const auto& p : paths) out.push_back(corpus::load_dataset(p));
  return out;
}

std::vector<const corpus::Dataset*> pointers(const std::vector<corpus::Dataset>& ds) {
  std::vector<const corpus::Dataset*> out;
  for (const auto& d : ds) out.push_back(&d);
  return out;
}

std::string class_summary(const corpus::Dataset& d) {
  std::ostringstream os;
  os << d.domain_id() << ": " << d.size() << " examples (";
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    os << (c ? ", " : "") << d.manifest().label(c).name << "=" << counts[c];
  }
  os << ")";
  return os.str();
}

int run_ingest(const Globals& g, const IngestFlags& f) {
  corpus::Dataset d = corpus::load_domain(f.manifest, f.records);
  if (f.binary) {
    d = corpus::collapse_binary(d, std::set<std::string>(f.neutral.begin(), f.neutral.end()));
  } else if (!f.neutral.empty()) {
    throw std::invalid_argument("--neutral only applies together with --binary");
  }
  fs::create_directories(g.out);
  const fs::path path = fs::path(g.out) / ((f.name.empty() ? d.domain_id() : f.name) + ".json");
  corpus::save_dataset(d, path);
  std::cout << class_summary(d) << "\n" << "wrote " << path.string() << "\n";
  return kOk;
}

std::string defaults_recipe_for(metalearn::Algorithm a, fusion::FusionKind k) {
  switch (a) {
    case metalearn::Algorithm::protomaml: return "protomaml";
    case metalearn::Algorithm::mldg: return "mldg";
    case metalearn::Algorithm::protonet: break;
  }
  return k == fusion::FusionKind::joint ? "je_protonet" : "protonet";
}

int run_meta_train(const Globals& g, const ModelFlags& m, const MetaFlags& f) {
  const auto algo = metalearn::algorithm_from_string(f.algo);
  const auto kind = fusion::fusion_kind_from_string(m.fusion.value_or("none"));
  evaluate::PipelineConfig cfg = evaluate::recipe_defaults(evaluate::find_recipe(defaults_recipe_for(algo, kind)));
  apply_model_flags(m, g, cfg);
  cfg.fusion.kind = kind;
  cfg.encoder.validate();
  cfg.fusion.validate(cfg.encoder.d_model);
  cfg.meta.validate();
  if (f.domains.empty()) throw std::invalid_argument("meta-train needs --domains");
  const auto domains = load_all(f.domains);
  const auto extra = load_all(f.extra_vocab);
  auto vocab_sources = pointers(domains);
  for (const auto& d : extra) vocab_sources.push_back(&d);

  fs::create_directories(g.out);
  const fs::path log_path = fs::path(g.out) / "meta_log.jsonl";
  const fs::path ckpt_path = fs::path(g.out) / "checkpoint.json";
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());

  metalearn::MetaReport report;
  metalearn::LearnerState state = metalearn::LearnerState::fresh(
      fusion::Model::create(cfg.encoder, cfg.fusion, fusion::build_model_vocab(vocab_sources, cfg.vocab_size)),
      cfg.meta);
  try {
    report = metalearn::meta_train(algo, pointers(domains), state, &log);
  } catch (const std::exception& e) {
    throw RuntimeFailure(std::string("meta-training failed: ") + e.what());
  }
  metalearn::save_checkpoint(state, ckpt_path);
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e << " mean loss " << report.epoch_loss[e] << " accuracy "
              << report.epoch_accuracy[e] << "\n";
  }
  std::cout << "episodes " << report.episodes << ", skipped " << report.skipped << "\n"
            << "wrote " << ckpt_path.string() << " and " << log_path.string() << "\n";
  return kOk;
}

int run_evaluate(const Globals& g, const ModelFlags& m, const EvalFlags& f) {
  const evaluate::Recipe& recipe = evaluate::find_recipe(f.recipe);
  if (m.fusion && fusion::fusion_kind_from_string(*m.fusion) != recipe.fusion) {
    throw std::invalid_argument("recipe '" + recipe.name + "' uses fusion " + fusion::to_string(recipe.fusion) +
                                ", not " + *m.fusion);
  }
  evaluate::PipelineConfig cfg = evaluate::recipe_defaults(recipe);
  apply_model_flags(m, g, cfg);
  cfg.fusion.kind = recipe.fusion;
  if (f.ft_epochs) cfg.finetune.epochs = *f.ft_epochs;
  if (f.ft_batch) cfg.finetune.batch_size = *f.ft_batch;
  if (f.ft_e) cfg.finetune.rates.encoder = *f.ft_e;
  if (f.ft_a) cfg.finetune.rates.attention = *f.ft_a;
  if (f.ft_c) {
    cfg.finetune.rates.head = *f.ft_c;
    cfg.head_rate_by_k.clear();
  }
  if (f.ft_min_lr) cfg.finetune.min_lr = *f.ft_min_lr;
  if (f.mlm_epochs) cfg.mlm.epochs = *f.mlm_epochs;
  if (f.mlm_lr) cfg.mlm.lr = *f.mlm_lr;
  if (f.mlm_mask) cfg.mlm.mask_rate = *f.mlm_mask;
  if (f.binary_epochs) cfg.binary_epochs = *f.binary_epochs;
  cfg.neutral_labels = std::set<std::string>(f.neutral.begin(), f.neutral.end());
  cfg.encoder.validate();
  cfg.meta.validate();

  const auto domains = load_all(f.domains);
  std::optional<metalearn::LearnerState> checkpoint;
  if (!f.checkpoint.empty()) checkpoint = metalearn::load_checkpoint(f.checkpoint);

  evaluate::EvaluateRequest req;
  req.recipe = &recipe;
  req.config = cfg;
  req.train_domains = pointers(domains);
  req.test_domain = corpus::load_dataset(f.test);
  req.k_values = f.k;
  req.seeds = f.seeds;
  req.holdout_fraction = f.holdout;
  req.holdout_seed = f.holdout_seed.value_or(g.seed);
  req.checkpoint = checkpoint ? &*checkpoint : nullptr;
  req.jobs = g.jobs;

  evaluate::EvaluationReport report;
  try {
    report = evaluate::evaluate_recipe(req);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    throw RuntimeFailure(std::string("evaluation failed: ") + e.what());
  }
  const auto files = evaluate::emit_report(report, g.out);
  for (const auto& s : report.summary) {
    std::cout << "K=" << s.k << " macro-F1 ";
    if (s.mean) {
      std::cout << *s.mean << " +- " << *s.std;
    } else {
      std::cout << "missing";
    }
    std::cout << " (" << s.n << " seeds)\n";
  }
  std::size_t missing = 0;
  for (const auto& c : report.cells) {
    if (!c.f1) {
      ++missing;
      std::cerr << "cell k=" << c.k << " seed=" << c.seed << " failed: " << c.error << "\n";
    }
  }
  std::cout << "wrote " << files.json.string() << ", " << files.csv.string() << ", " << files.plot.string()
            << "\n";
  return missing ? kRuntime : kOk;
}

int run_report(const Globals& g, const ReportFlags& f) {
  if (f.inputs.empty()) throw std::invalid_argument("report needs --input");
  for (const auto& path : f.inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
    const auto report = evaluate::report_from_json(j);
    const auto files = evaluate::emit_report(report, g.out);
    std::cout << report.domain_id << " / " << report.recipe << "\n";
    for (const auto& s : report.summary) {
      std::cout << "  K=" << s.k << "  " << (s.mean ? std::to_string(*s.mean) : std::string("missing")) << "  sigma "
                << (s.std ? std::to_string(*s.std) : std::string("-")) << "\n";
    }
    std::cout << "  wrote " << files.csv.string() << ", " << files.plot.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protofuse: few-shot text classification with meta-learning and label fusion"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.out = env_out();
  app.add_option("--config", g.config, "Flat 'key = value' file; keys are long flag names");
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--out", g.out, "Output directory (default $PROTOFUSE_OUT or ./out)");
  app.add_option("--jobs", g.jobs, "Parallel (k, seed) cells during evaluate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  IngestFlags ingest;
  auto* cmd_ingest = app.add_subcommand("ingest", "Validate and preprocess a domain into a dataset file");
  cmd_ingest->add_option("--manifest", ingest.manifest, "Domain manifest JSON")->required();
  cmd_ingest->add_option("--records", ingest.records, "Line-delimited {text, label, id?} records")->required();
  cmd_ingest->add_option("--name", ingest.name, "Output file stem (default: domain id)");
  cmd_ingest->add_flag("--binary", ingest.binary, "Collapse labels to Offensive / Not Offensive");
  cmd_ingest->add_option("--neutral", ingest.neutral, "Labels mapped to Not Offensive")->delimiter(',');

  ModelFlags meta_model;
  MetaFlags meta;
  auto* cmd_meta = app.add_subcommand("meta-train", "Meta-train an encoder on training domains");
  cmd_meta->add_option("--domains", meta.domains, "Training dataset files")->delimiter(',');
  cmd_meta->add_option("--vocab-extra", meta.extra_vocab, "Extra dataset files whose tokens join the vocabulary")
      ->delimiter(',');
  cmd_meta->add_option("--algo", meta.algo, "protonet|protomaml|mldg")
      ->check(CLI::IsMember({"protonet", "protomaml", "mldg"}))
      ->capture_default_str();
  add_model_flags(cmd_meta, meta_model);

  ModelFlags eval_model;
  EvalFlags eval;
  auto* cmd_eval = app.add_subcommand("evaluate", "K-shot fine-tune and score a recipe on a test domain");
  cmd_eval->add_option("--test", eval.test, "Test domain dataset file")->required();
  cmd_eval->add_option("--recipe", eval.recipe, "Model recipe")->required();
  cmd_eval->add_option("--domains", eval.domains, "Training dataset files (meta and binary recipes)")
      ->delimiter(',');
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Meta-trained checkpoint (otherwise trained inline)");
  cmd_eval->add_option("--k", eval.k, "K values")->delimiter(',')->capture_default_str();
  cmd_eval->add_option("--seeds", eval.seeds, "Fine-tuning seeds")->delimiter(',')->capture_default_str();
  cmd_eval->add_option("--holdout", eval.holdout, "Held-out fraction of the test domain")->capture_default_str();
  cmd_eval->add_option("--holdout-seed", eval.holdout_seed, "Seed of the holdout split (default --seed)");
  cmd_eval->add_option("--ft.epochs", eval.ft_epochs, "Fine-tune epochs (recipe default)");
  cmd_eval->add_option("--ft.batch-size", eval.ft_batch, "Fine-tune batch size (default 16)");
  cmd_eval->add_option("--ft.rate.encoder", eval.ft_e, "Fine-tune encoder rate (recipe default)");
  cmd_eval->add_option("--ft.rate.attention", eval.ft_a, "Fine-tune joint attention rate (recipe default)");
  cmd_eval->add_option("--ft.rate.head", eval.ft_c, "Fine-tune head rate for every K (recipe default)");
  cmd_eval->add_option("--ft.min-lr", eval.ft_min_lr, "Cosine schedule floor (default 1e-5)");
  cmd_eval->add_option("--mlm.epochs", eval.mlm_epochs, "Masked-LM epochs of the retrained recipe (default 5)");
  cmd_eval->add_option("--mlm.lr", eval.mlm_lr, "Masked-LM rate (default 2e-5)");
  cmd_eval->add_option("--mlm.mask-rate", eval.mlm_mask, "Masked-LM masking rate (default 0.15)");
  cmd_eval->add_option("--neutral", eval.neutral, "Neutral labels for the binary recipe")->delimiter(',');
  cmd_eval->add_option("--binary-epochs", eval.binary_epochs, "Binary pretraining epochs (default 2)");
  add_model_flags(cmd_eval, eval_model);

  ReportFlags rep;
  auto* cmd_report = app.add_subcommand("report", "Re-render CSV and plot files from report JSON");
  cmd_report->add_option("--input", rep.inputs, "Report JSON files")->delimiter(',')->required();

  // Splice config-file entries in as flags unless the command line sets them.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path.empty()) {
      CLI::App* sub = nullptr;
      for (const auto& a : args) {
        for (auto* s : {cmd_ingest, cmd_meta, cmd_eval, cmd_report}) {
          if (!sub && a == s->get_name()) sub = s;
        }
      }
      for (const auto& [key, value] : read_config(config_path)) {
        const std::string flag = "--" + key;
        if (key == "config") throw std::invalid_argument("config files cannot name another config file");
        const CLI::Option* opt = sub ? sub->get_option_no_throw(flag) : nullptr;
        if (!opt) opt = app.get_option_no_throw(flag);
        if (!opt) throw std::invalid_argument("unknown config key '" + key + "'");
        if (given_on_command_line(args, flag)) continue;
        if (opt->get_expected_min() == 0) {
          if (value == "true" || value == "1" || value == "yes") args.push_back(flag);
        } else {
          args.push_back(flag);
          args.push_back(value);
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (cmd_ingest->parsed()) return run_ingest(g, ingest);
    if (cmd_meta->parsed()) return run_meta_train(g, meta_model, meta);
    if (cmd_eval->parsed()) return run_evaluate(g, eval_model, eval);
    if (cmd_report->parsed()) return run_report(g, rep);
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

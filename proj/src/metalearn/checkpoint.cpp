#include "protofuse/metalearn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace protofuse::metalearn {

using nlohmann::json;
using ag::Matrix;

namespace {

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw std::invalid_argument("checkpoint: tensor size does not match its shape");
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

json encoder_config_json(const encoder::EncoderConfig& c) {
  return json{{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
              {"max_len", c.max_len}, {"dropout", c.dropout},   {"seed", c.seed}};
}

encoder::EncoderConfig encoder_config_from_json(const json& j) {
  encoder::EncoderConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

json fusion_json(const fusion::FusionStrategy& f) {
  return json{{"kind", fusion::to_string(f.kind)},
              {"joint_heads", f.joint_heads},
              {"joint_variant", fusion::to_string(f.variant)}};
}

fusion::FusionStrategy fusion_from_json(const json& j) {
  fusion::FusionStrategy f;
  f.kind = fusion::fusion_kind_from_string(j.at("kind").get<std::string>());
  f.joint_heads = j.at("joint_heads").get<std::size_t>();
  f.variant = fusion::joint_variant_from_string(j.at("joint_variant").get<std::string>());
  return f;
}

json meta_config_json(const MetaConfig& c) {
  json j{{"meta_epochs", c.meta_epochs},
         {"tasks_per_epoch", c.tasks_per_epoch},
         {"k_choices", c.k_choices},
         {"inner_lr", c.inner_lr},
         {"outer_lr", c.outer_lr},
         {"mldg_beta", c.mldg_beta},
         {"inner_steps", c.inner_steps},
         {"distance", to_string(c.distance)},
         {"seed", c.seed}};
  if (c.rates) {
    j["rates"] = json{{"encoder", c.rates->encoder},
                      {"attention", c.rates->attention},
                      {"head", c.rates->head}};
  } else {
    j["rates"] = nullptr;
  }
  return j;
}

MetaConfig meta_config_from_json(const json& j) {
  MetaConfig c;
  c.meta_epochs = j.at("meta_epochs").get<std::size_t>();
  c.tasks_per_epoch = j.at("tasks_per_epoch").get<std::size_t>();
  c.k_choices = j.at("k_choices").get<std::vector<std::size_t>>();
  c.inner_lr = j.at("inner_lr").get<double>();
  c.outer_lr = j.at("outer_lr").get<double>();
  c.mldg_beta = j.at("mldg_beta").get<double>();
  c.inner_steps = j.at("inner_steps").get<std::size_t>();
  c.distance = distance_from_string(j.at("distance").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("rates") && !j.at("rates").is_null()) {
    const auto& r = j.at("rates");
    c.rates = ag::ComponentRates{r.at("encoder").get<double>(), r.at("attention").get<double>(),
                                 r.at("head").get<double>()};
  }
  return c;
}

json checkpoint_json(const LearnerState& state) {
  json params = json::array();
  for (const auto& [name, var] : state.model.params.entries()) {
    json p = matrix_json(var.value());
    p["name"] = name;
    params.push_back(std::move(p));
  }
  json slots = json::array();
  for (const auto& [name, slot] : state.optimizer.slots()) {
    slots.push_back(json{{"name", name}, {"step", slot.step}, {"m", matrix_json(slot.m)},
                         {"v", matrix_json(slot.v)}});
  }
  const auto& oc = state.optimizer.config();
  return json{{"format", "protofuse-checkpoint"},
              {"version", kCheckpointVersion},
              {"algorithm", state.algorithm},
              {"encoder", encoder_config_json(state.model.encoder)},
              {"fusion", fusion_json(state.model.fusion)},
              {"meta", meta_config_json(state.config)},
              {"vocab", state.model.vocab.tokens()},
              {"params", std::move(params)},
              {"optimizer",
               json{{"beta1", oc.beta1},
                    {"beta2", oc.beta2},
                    {"eps", oc.eps},
                    {"weight_decay", oc.weight_decay},
                    {"slots", std::move(slots)}}},
              {"rng", state.rng.save()}};
}

LearnerState checkpoint_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "protofuse-checkpoint") {
      throw std::invalid_argument("checkpoint: unrecognized format");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
    }
    fusion::Model model{encoder_config_from_json(j.at("encoder")), fusion_from_json(j.at("fusion")),
                        encoder::Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>()),
                        {}};
    for (const auto& p : j.at("params")) {
      model.params.add(p.at("name").get<std::string>(), matrix_from_json(p));
    }
    const auto& o = j.at("optimizer");
    ag::AdamW optimizer(ag::AdamWConfig{o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                                        o.at("eps").get<double>(),
                                        o.at("weight_decay").get<double>()});
    for (const auto& s : o.at("slots")) {
      auto& slot = optimizer.slots()[s.at("name").get<std::string>()];
      slot.step = s.at("step").get<long>();
      slot.m = matrix_from_json(s.at("m"));
      slot.v = matrix_from_json(s.at("v"));
    }
    Rng rng;
    rng.load(j.at("rng").get<std::string>());
    return LearnerState{std::move(model), std::move(optimizer), std::move(rng),
                        meta_config_from_json(j.at("meta")), j.at("algorithm").get<std::string>()};
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: malformed document: ") + e.what());
  }
}

void save_checkpoint(const LearnerState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(state).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LearnerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace protofuse::metalearn

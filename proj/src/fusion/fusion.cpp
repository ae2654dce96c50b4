#include "protofuse/fusion/fusion.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"
#include "protofuse/corpus/text.hpp"

namespace protofuse::fusion {

using ag::Matrix;
using ag::Var;
using encoder::TokenId;
using encoder::TokenSequence;
using encoder::Vocab;

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::none: return "none";
    case FusionKind::token: return "token";
    case FusionKind::label: return "label";
    case FusionKind::full: return "full";
    case FusionKind::joint: return "joint";
  }
  return "none";
}

std::string to_string(JointVariant variant) {
  return variant == JointVariant::literal ? "literal" : "standard";
}

FusionKind fusion_kind_from_string(std::string_view s) {
  for (auto k : {FusionKind::none, FusionKind::token, FusionKind::label, FusionKind::full,
                 FusionKind::joint}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown fusion '" + std::string(s) +
                              "' (expected none|token|label|full|joint)");
}

JointVariant joint_variant_from_string(std::string_view s) {
  if (s == "literal") return JointVariant::literal;
  if (s == "standard") return JointVariant::standard;
  throw std::invalid_argument("unknown joint variant '" + std::string(s) +
                              "' (expected literal|standard)");
}

void FusionStrategy::validate(std::size_t d_model) const {
  if (kind != FusionKind::joint) return;
  if (joint_heads == 0 || d_model % joint_heads != 0) {
    throw std::invalid_argument("joint fusion: d_model " + std::to_string(d_model) +
                                " not divisible by joint_heads " + std::to_string(joint_heads));
  }
}

std::string label_definition_text(const corpus::LabelDef& label) {
  return label.name + " : " + label.definition;
}

namespace {

void check_membership(const corpus::LabelDef& label, const corpus::DomainManifest& manifest) {
  auto idx = manifest.find(label.name);
  if (!idx || manifest.label(*idx).definition != label.definition) {
    throw std::invalid_argument("label '" + label.name + "' does not belong to domain '" +
                                manifest.domain_id + "'");
  }
}

std::vector<TokenId> ids_of(std::string_view raw, const Vocab& vocab) {
  return encoder::map_tokens(corpus::preprocess_text(raw), vocab);
}

// Name and definition are normalized separately so the ':' separator is
// always a token of its own.
std::vector<TokenId> definition_ids(const corpus::LabelDef& label, const Vocab& vocab) {
  auto ids = ids_of(label.name, vocab);
  ids.push_back(vocab.id(":"));
  auto def = ids_of(label.definition, vocab);
  ids.insert(ids.end(), def.begin(), def.end());
  return ids;
}

}  // namespace

TokenSequence fuse_input(std::string_view text, const corpus::LabelDef* label,
                         const corpus::DomainManifest& manifest, const FusionStrategy& strategy,
                         const Vocab& vocab, std::size_t max_len) {
  auto body = encoder::map_tokens(text, vocab);
  if (label == nullptr || strategy.kind == FusionKind::none || strategy.kind == FusionKind::joint) {
    return encoder::frame_segments({body}, max_len);
  }
  check_membership(*label, manifest);
  switch (strategy.kind) {
    case FusionKind::token: {
      auto id = vocab.label_token(label->name);
      if (!id) throw std::invalid_argument("label token for '" + label->name + "' not registered");
      return encoder::frame_segments({body, {*id}}, max_len);
    }
    case FusionKind::label: {
      auto name = ids_of(label->name, vocab);
      body.insert(body.end(), name.begin(), name.end());
      return encoder::frame_segments({body}, max_len);
    }
    case FusionKind::full:
      return encoder::frame_segments({body, definition_ids(*label, vocab)}, max_len);
    default:
      break;
  }
  return encoder::frame_segments({body}, max_len);
}

TokenSequence definition_input(const corpus::LabelDef* label, const Vocab& vocab,
                               std::size_t max_len) {
  if (label == nullptr) return encoder::frame_segments({{}}, max_len);
  return encoder::frame_segments({definition_ids(*label, vocab)}, max_len);
}

void init_joint_params(ag::ParamStore& params, std::size_t d, Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* name : {"joint.wq", "joint.wk", "joint.wv", "joint.wo"}) {
    Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
    params.add(name, std::move(m));
  }
}

Var joint_attention(const ag::ParamStore& p, const encoder::BatchStates& text,
                    const encoder::BatchStates& def, std::size_t heads, JointVariant variant,
                    bool cls_only) {
  if (text.batch != def.batch || text.seq_len != def.seq_len) {
    throw std::invalid_argument("joint_embed: text and definition states differ in shape (" +
                                std::to_string(text.batch) + "x" + std::to_string(text.seq_len) +
                                " vs " + std::to_string(def.batch) + "x" +
                                std::to_string(def.seq_len) + ")");
  }
  const Var query_src = cls_only ? encoder::cls_rows(text) : text.states;
  const Var q = ag::matmul(query_src, p.at("joint.wq"));
  const Var k = ag::matmul(def.states, p.at("joint.wk"));
  const Var v = ag::matmul(variant == JointVariant::literal ? text.states : def.states,
                           p.at("joint.wv"));
  const ag::AttentionShape shape{text.batch, cls_only ? 1 : text.seq_len, def.seq_len, heads};
  return ag::matmul(ag::attention(q, k, v, shape, def.mask), p.at("joint.wo"));
}

namespace {

encoder::BatchStates as_batch(const encoder::HiddenStates& h) {
  encoder::BatchStates b;
  b.states = ag::constant(h.states);
  b.batch = 1;
  b.seq_len = static_cast<std::size_t>(h.states.rows());
  for (bool m : h.mask) b.mask.push_back(m ? 1 : 0);
  return b;
}

void check_pair(const encoder::HiddenStates& t, const encoder::HiddenStates& d) {
  if (t.states.rows() != d.states.rows() || t.states.cols() != d.states.cols()) {
    throw std::invalid_argument("joint_embed: mismatched hidden state lengths");
  }
  bool any = false;
  for (bool m : d.mask) any = any || m;
  if (!any) throw std::invalid_argument("joint_embed: definition has no valid key position");
}

}  // namespace

encoder::HiddenStates joint_embed(const encoder::HiddenStates& h_text,
                                  const encoder::HiddenStates& h_def, const ag::ParamStore& params,
                                  std::size_t heads, JointVariant variant) {
  check_pair(h_text, h_def);
  const Var out = joint_attention(params, as_batch(h_text), as_batch(h_def), heads, variant, false);
  encoder::HiddenStates hs;
  hs.states = out.value();
  hs.cls = hs.states.row(0);
  hs.mask = h_text.mask;
  return hs;
}

Matrix joint_attention_weights(const encoder::HiddenStates& h_text,
                               const encoder::HiddenStates& h_def, const ag::ParamStore& params,
                               std::size_t heads, std::size_t head) {
  check_pair(h_text, h_def);
  const Matrix q = h_text.states * params.at("joint.wq").value();
  const Matrix k = h_def.states * params.at("joint.wk").value();
  const auto len = static_cast<std::size_t>(h_text.states.rows());
  std::vector<std::uint8_t> mask;
  for (bool m : h_def.mask) mask.push_back(m ? 1 : 0);
  return ag::attention_weights(q, k, {1, len, len, heads}, mask, 0, head);
}

Model Model::create(const encoder::EncoderConfig& cfg, const FusionStrategy& fusion,
                    encoder::Vocab vocab) {
  cfg.validate();
  fusion.validate(cfg.d_model);
  Model m{cfg, fusion, std::move(vocab), {}};
  Rng rng(cfg.seed);
  encoder::init_encoder_params(m.params, cfg, m.vocab.size(), rng);
  if (fusion.kind == FusionKind::joint) init_joint_params(m.params, cfg.d_model, rng);
  return m;
}

void Model::prepare_domain(const corpus::DomainManifest& manifest) {
  if (fusion.kind != FusionKind::token) return;
  for (const auto& label : manifest.labels) encoder::add_label_token(label.name, vocab, params);
}

Model Model::clone() const { return Model{encoder, fusion, vocab, params.clone()}; }

encoder::Vocab build_model_vocab(const std::vector<const corpus::Dataset*>& domains,
                                 std::size_t max_size) {
  std::vector<std::string> corpus;
  for (const auto* d : domains) {
    for (const auto& ex : d->examples()) corpus.push_back(ex.text);
    for (const auto& label : d->manifest().labels) {
      corpus.push_back(corpus::preprocess_text(label.name) + " : " +
                       corpus::preprocess_text(label.definition));
    }
  }
  return encoder::Vocab::build(corpus, max_size);
}

Var represent(const Model& model, const corpus::DomainManifest& manifest,
              std::span<const corpus::Example> examples,
              std::span<const std::optional<std::size_t>> gold, const RepresentOptions& opts) {
  if (examples.size() != gold.size()) throw std::invalid_argument("represent: gold size mismatch");
  if (examples.empty()) throw std::invalid_argument("represent: empty batch");
  const auto& cfg = model.encoder;
  auto label_of = [&](std::size_t i) -> const corpus::LabelDef* {
    if (!gold[i]) return nullptr;
    if (*gold[i] >= manifest.n_classes()) throw std::invalid_argument("represent: gold label out of range");
    return &manifest.labels[*gold[i]];
  };
  encoder::ForwardOptions fwd{opts.train, opts.rng, 0};

  std::vector<TokenSequence> text_seqs;
  text_seqs.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    text_seqs.push_back(fuse_input(examples[i].text, label_of(i), manifest, model.fusion,
                                   model.vocab, cfg.max_len));
  }
  if (model.fusion.kind != FusionKind::joint) {
    fwd.seq_len = encoder::longest(text_seqs);
    return encoder::cls_rows(encoder::encode_batch(model.params, cfg, text_seqs, fwd));
  }

  // One definition sequence per distinct label (plus blank), shared by rows.
  std::map<long, std::size_t> slot;  // gold index or -1 -> unique position
  std::vector<TokenSequence> def_seqs;
  std::vector<std::size_t> owner(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const long key = gold[i] ? static_cast<long>(*gold[i]) : -1;
    auto [it, fresh] = slot.emplace(key, def_seqs.size());
    if (fresh) def_seqs.push_back(definition_input(label_of(i), model.vocab, cfg.max_len));
    owner[i] = it->second;
  }
  fwd.seq_len = std::max(encoder::longest(text_seqs), encoder::longest(def_seqs));
  const auto text = encoder::encode_batch(model.params, cfg, text_seqs, fwd);
  const auto uniq = encoder::encode_batch(model.params, cfg, def_seqs, fwd);

  const std::size_t L = fwd.seq_len;
  encoder::BatchStates def;
  def.batch = examples.size();
  def.seq_len = L;
  std::vector<Eigen::Index> rows(examples.size() * L);
  def.mask.resize(examples.size() * L);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      rows[i * L + j] = static_cast<Eigen::Index>(owner[i] * L + j);
      def.mask[i * L + j] = uniq.mask[owner[i] * L + j];
    }
  }
  def.states = ag::gather_rows(uniq.states, rows);
  return joint_attention(model.params, text, def, model.fusion.joint_heads, model.fusion.variant,
                         true);
}

Var represent_unlabeled(const Model& model, const corpus::DomainManifest& manifest,
                        std::span<const corpus::Example> examples, const RepresentOptions& opts) {
  std::vector<std::optional<std::size_t>> none(examples.size());
  return represent(model, manifest, examples, none, opts);
}

Matrix represent_values(const Model& model, const corpus::DomainManifest& manifest,
                        std::span<const corpus::Example> examples, bool with_gold,
                        std::size_t chunk) {
  Matrix out(static_cast<Eigen::Index>(examples.size()),
             static_cast<Eigen::Index>(model.encoder.d_model));
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t n = std::min(chunk, examples.size() - start);
    const auto part = examples.subspan(start, n);
    std::vector<std::optional<std::size_t>> gold(n);
    if (with_gold) {
      for (std::size_t i = 0; i < n; ++i) gold[i] = part[i].label_index;
    }
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        represent(model, manifest, part, gold).value();
  }
  return out;
}

}  // namespace protofuse::fusion

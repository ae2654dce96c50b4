#include "protofuse/encoder/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"
#include "protofuse/corpus/text.hpp"

namespace protofuse::encoder {

using ag::Matrix;
using ag::Var;

void EncoderConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("encoder: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (max_len < 8) throw std::invalid_argument("encoder: max_len must be >= 8");
  if (n_layers == 0) throw std::invalid_argument("encoder: n_layers must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder: dropout in [0, 1)");
}

namespace {

constexpr double kInitStd = 0.02;

Matrix normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, kInitStd);
  return m;
}
Matrix zeros(std::size_t rows, std::size_t cols) {
  return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
Matrix ones(std::size_t cols) { return Matrix::Ones(1, static_cast<Eigen::Index>(cols)); }

std::string layer_key(std::size_t l, const char* leaf) {
  return "encoder.layer" + std::to_string(l) + "." + leaf;
}

}  // namespace

void init_encoder_params(ag::ParamStore& p, const EncoderConfig& cfg, std::size_t vocab_size,
                         Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model, f = cfg.ffn_dim();
  p.add("encoder.tok_emb", normal(vocab_size, d, rng));
  p.add("encoder.pos_emb", normal(cfg.max_len, d, rng));
  p.add("encoder.emb_ln.g", ones(d));
  p.add("encoder.emb_ln.b", zeros(1, d));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      p.add(layer_key(l, w), normal(d, d, rng));
    }
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      p.add(layer_key(l, b), zeros(1, d));
    }
    p.add(layer_key(l, "ln1.g"), ones(d));
    p.add(layer_key(l, "ln1.b"), zeros(1, d));
    p.add(layer_key(l, "ffn.w1"), normal(d, f, rng));
    p.add(layer_key(l, "ffn.b1"), zeros(1, f));
    p.add(layer_key(l, "ffn.w2"), normal(f, d, rng));
    p.add(layer_key(l, "ffn.b2"), zeros(1, d));
    p.add(layer_key(l, "ln2.g"), ones(d));
    p.add(layer_key(l, "ln2.b"), zeros(1, d));
  }
  // Masked-LM head, decoder tied to tok_emb.
  p.add("encoder.mlm.dense.w", normal(d, d, rng));
  p.add("encoder.mlm.dense.b", zeros(1, d));
  p.add("encoder.mlm.ln.g", ones(d));
  p.add("encoder.mlm.ln.b", zeros(1, d));
  p.add("encoder.mlm.bias", zeros(1, vocab_size));
}

std::size_t longest(std::span<const TokenSequence> seqs) {
  std::size_t L = 2;
  for (const auto& s : seqs) L = std::max(L, s.length);
  return L;
}

BatchStates encode_batch(const ag::ParamStore& p, const EncoderConfig& cfg,
                         std::span<const TokenSequence> seqs, const ForwardOptions& opts) {
  if (seqs.empty()) throw std::invalid_argument("encode_batch: empty batch");
  const double drop = opts.train ? cfg.dropout : 0.0;
  if (drop > 0.0 && opts.rng == nullptr) throw std::invalid_argument("encode_batch: dropout needs an rng");

  const std::size_t L = opts.seq_len == 0 ? cfg.max_len : opts.seq_len;
  if (L > cfg.max_len || L < longest(seqs)) {
    throw std::invalid_argument("encode_batch: seq_len " + std::to_string(L) +
                                " outside [longest valid prefix, max_len]");
  }
  const std::size_t B = seqs.size();
  std::vector<Eigen::Index> tok(B * L), pos(B * L);
  std::vector<std::uint8_t> mask(B * L, 0);
  const auto vocab_rows = p.at("encoder.tok_emb").rows();
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = seqs[b];
    if (s.ids.size() != cfg.max_len || s.length == 0 || s.length > cfg.max_len) {
      throw std::invalid_argument("encode: sequence length " + std::to_string(s.ids.size()) +
                                  " does not match max_len " + std::to_string(cfg.max_len));
    }
    for (std::size_t i = 0; i < L; ++i) {
      const TokenId id = s.ids[i];
      if (id < 0 || id >= vocab_rows) {
        throw std::invalid_argument("encode: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(vocab_rows));
      }
      tok[b * L + i] = id;
      pos[b * L + i] = static_cast<Eigen::Index>(i);
      mask[b * L + i] = i < s.length ? 1 : 0;
    }
  }

  Rng* rng = opts.rng;
  auto maybe_drop = [&](const Var& x) { return drop > 0.0 ? ag::dropout(x, drop, *rng) : x; };

  Var x = ag::add(ag::gather_rows(p.at("encoder.tok_emb"), tok),
                  ag::gather_rows(p.at("encoder.pos_emb"), pos));
  x = maybe_drop(ag::layer_norm(x, p.at("encoder.emb_ln.g"), p.at("encoder.emb_ln.b")));
  const ag::AttentionShape shape{B, L, L, cfg.n_heads};
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    auto P = [&](const char* leaf) -> const Var& { return p.at(layer_key(l, leaf)); };
    Var q = ag::linear(x, P("attn.wq"), P("attn.bq"));
    Var k = ag::linear(x, P("attn.wk"), P("attn.bk"));
    Var v = ag::linear(x, P("attn.wv"), P("attn.bv"));
    Var a = ag::linear(ag::attention(q, k, v, shape, mask), P("attn.wo"), P("attn.bo"));
    x = ag::layer_norm(ag::add(x, maybe_drop(a)), P("ln1.g"), P("ln1.b"));
    Var h = ag::gelu(ag::linear(x, P("ffn.w1"), P("ffn.b1")));
    Var f = ag::linear(h, P("ffn.w2"), P("ffn.b2"));
    x = ag::layer_norm(ag::add(x, maybe_drop(f)), P("ln2.g"), P("ln2.b"));
  }
  return {x, B, L, std::move(mask)};
}

Var cls_rows(const BatchStates& s) {
  std::vector<Eigen::Index> rows(s.batch);
  for (std::size_t b = 0; b < s.batch; ++b) rows[b] = static_cast<Eigen::Index>(b * s.seq_len);
  return ag::gather_rows(s.states, rows);
}

HiddenStates encode(const TokenSequence& seq, const ag::ParamStore& params,
                    const EncoderConfig& cfg) {
  auto out = encode_batch(params, cfg, std::span(&seq, 1));
  HiddenStates hs;
  hs.states = out.states.value();
  hs.cls = hs.states.row(0);
  hs.mask.resize(cfg.max_len);
  for (std::size_t i = 0; i < cfg.max_len; ++i) hs.mask[i] = out.mask[i] != 0;
  return hs;
}

TokenId add_label_token(const std::string& label, Vocab& vocab, ag::ParamStore& params) {
  if (corpus::trim(label).empty()) throw std::invalid_argument("add_label_token: empty label");
  if (auto existing = vocab.label_token(label)) return *existing;

  auto& table = params.at("encoder.tok_emb");
  if (static_cast<std::size_t>(table.rows()) != vocab.size()) {
    throw std::logic_error("add_label_token: embedding table out of sync with vocab");
  }
  auto parts = map_tokens(corpus::preprocess_text(label), vocab);
  if (parts.empty()) parts.push_back(Vocab::kUnk);
  ag::RowVector mean = ag::RowVector::Zero(table.cols());
  for (auto id : parts) mean += table.value().row(id);
  mean /= static_cast<double>(parts.size());

  const auto [id, added] = vocab.add_label(label);
  table.zero_grad();
  Matrix& t = table.mutable_value();
  t.conservativeResize(t.rows() + 1, Eigen::NoChange);
  t.row(id) = mean;
  if (params.contains("encoder.mlm.bias")) {
    auto& bias = params.at("encoder.mlm.bias");
    bias.zero_grad();
    Matrix& bv = bias.mutable_value();
    bv.conservativeResize(Eigen::NoChange, bv.cols() + 1);
    bv(0, bv.cols() - 1) = 0.0;
  }
  return id;
}

}  // namespace protofuse::encoder

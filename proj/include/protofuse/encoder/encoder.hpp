#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protofuse/autograd/tensor.hpp"
#include "protofuse/encoder/vocab.hpp"
#include "protofuse/rng.hpp"

namespace protofuse::encoder {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_len = 64;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  std::size_t ffn_dim() const { return 4 * d_model; }
  /// Throws std::invalid_argument when d_model % n_heads != 0 or max_len < 8.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Post-LN transformer encoder in the RoBERTa mould: token plus learned
/// absolute position embeddings, embedding LayerNorm, then n_layers blocks of
/// self-attention and a GELU feed-forward, each followed by residual + LN.
/// Parameters live in a ParamStore under the "encoder." prefix.
void init_encoder_params(ag::ParamStore& params, const EncoderConfig& cfg, std::size_t vocab_size,
                         Rng& rng);

struct ForwardOptions {
  bool train = false;  // enables dropout
  Rng* rng = nullptr;  // required when train && dropout > 0
  /// Positions computed per sequence; 0 means max_len. Anything at least as
  /// long as the longest valid prefix leaves valid positions unchanged; the
  /// remaining pad rows are simply not computed.
  std::size_t seq_len = 0;
};

/// Longest valid prefix in the batch (at least 2).
std::size_t longest(std::span<const TokenSequence> seqs);

/// Batched forward pass. Returns (batch * L) x d_model rows where L is
/// opts.seq_len, or max_len when that is 0.
struct BatchStates {
  ag::Var states;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint8_t> mask;  // batch * seq_len validity
};

BatchStates encode_batch(const ag::ParamStore& params, const EncoderConfig& cfg,
                         std::span<const TokenSequence> seqs, const ForwardOptions& opts = {});

/// Rows 0, L, 2L, ...: the [CLS] vector of every sequence.
ag::Var cls_rows(const BatchStates& states);

/// Per-token states of one sequence plus its [CLS] vector.
struct HiddenStates {
  ag::Matrix states;        // max_len x d_model
  ag::RowVector cls;        // == states.row(0)
  std::vector<bool> mask;   // valid (non-pad) positions
};

/// Inference-mode encoding of a single max_len sequence. Throws on a length
/// mismatch or an id outside the embedding table.
HiddenStates encode(const TokenSequence& seq, const ag::ParamStore& params,
                    const EncoderConfig& cfg);

/// Appends a label token whose embedding is the mean of the label's
/// constituent token embeddings; identical labels share one id. Existing
/// embedding rows are left untouched.
TokenId add_label_token(const std::string& label, Vocab& vocab, ag::ParamStore& params);

}  // namespace protofuse::encoder

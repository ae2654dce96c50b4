#pragma once

#include <cstdint>
#include <vector>

#include "protofuse/autograd/optim.hpp"
#include "protofuse/corpus/dataset.hpp"
#include "protofuse/encoder/encoder.hpp"

namespace protofuse::encoder {

/// Sequences with some body positions replaced by [MASK] and the original
/// ids remembered as targets.
struct MaskedBatch {
  std::vector<TokenSequence> inputs;
  std::vector<std::size_t> rows;      // flattened (sequence * max_len + position)
  std::vector<std::size_t> targets;   // original ids at `rows`
};

/// Number of positions masked in a body of `maskable` tokens:
/// max(1, floor(rate * maskable)), or 0 for an empty body.
std::size_t mask_count(std::size_t maskable, double rate);

/// Masks every sequence independently. Throws when rate <= 0 or when no
/// sequence has a maskable position.
MaskedBatch mask_batch(const std::vector<TokenSequence>& seqs, double rate, Rng& rng);

struct MlmResult {
  ag::Var loss;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Cross-entropy over masked positions only, decoder tied to tok_emb.
MlmResult mlm_loss(const ag::ParamStore& params, const EncoderConfig& cfg, const MaskedBatch& batch,
                   const ForwardOptions& opts = {});

struct MlmOptions {
  std::size_t epochs = 5;
  double mask_rate = 0.15;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct MlmReport {
  std::vector<double> epoch_loss;  // mean masked-token loss per epoch
  double final_epoch_loss = 0.0;
};

/// Self-supervised masked-language-model training of the encoder
/// parameters on the dataset's texts. AdamW, fresh moments.
MlmReport mlm_pretrain(ag::ParamStore& params, const EncoderConfig& cfg, const Vocab& vocab,
                       const corpus::Dataset& data, const MlmOptions& opts);

}  // namespace protofuse::encoder

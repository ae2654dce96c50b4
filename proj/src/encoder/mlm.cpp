#include "protofuse/encoder/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"

namespace protofuse::encoder {

std::size_t mask_count(std::size_t maskable, double rate) {
  if (maskable == 0) return 0;
  const auto n = static_cast<std::size_t>(std::floor(rate * static_cast<double>(maskable)));
  return std::min(maskable, std::max<std::size_t>(1, n));
}

MaskedBatch mask_batch(const std::vector<TokenSequence>& seqs, double rate, Rng& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("mlm: mask rate must lie in (0, 1]; at least one maskable position is required");
  }
  MaskedBatch out;
  out.inputs = seqs;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    auto& seq = out.inputs[s];
    std::vector<std::size_t> body;
    for (std::size_t i = 0; i < seq.length; ++i) {
      const auto id = seq.ids[i];
      if (id != Vocab::kCls && id != Vocab::kSep && id != Vocab::kPad) body.push_back(i);
    }
    rng.shuffle(body);
    body.resize(mask_count(body.size(), rate));
    std::sort(body.begin(), body.end());
    for (auto i : body) {
      out.rows.push_back(s * seq.ids.size() + i);
      out.targets.push_back(static_cast<std::size_t>(seq.ids[i]));
      seq.ids[i] = Vocab::kMask;
    }
  }
  if (out.rows.empty()) throw std::invalid_argument("mlm: batch has no maskable position");
  return out;
}

MlmResult mlm_loss(const ag::ParamStore& p, const EncoderConfig& cfg, const MaskedBatch& batch,
                   const ForwardOptions& opts) {
  ForwardOptions full = opts;
  full.seq_len = 0;  // masked rows are addressed at max_len stride
  auto enc = encode_batch(p, cfg, batch.inputs, full);
  std::vector<Eigen::Index> rows(batch.rows.begin(), batch.rows.end());
  ag::Var h = ag::gather_rows(enc.states, rows);
  h = ag::gelu(ag::linear(h, p.at("encoder.mlm.dense.w"), p.at("encoder.mlm.dense.b")));
  h = ag::layer_norm(h, p.at("encoder.mlm.ln.g"), p.at("encoder.mlm.ln.b"));
  ag::Var logits = ag::add_row(ag::matmul_nt(h, p.at("encoder.tok_emb")), p.at("encoder.mlm.bias"));

  MlmResult r;
  r.loss = ag::cross_entropy(logits, batch.targets);
  r.total = batch.targets.size();
  const auto& L = logits.value();
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    Eigen::Index arg = 0;
    L.row(i).maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == batch.targets[static_cast<std::size_t>(i)]) ++r.correct;
  }
  return r;
}

MlmReport mlm_pretrain(ag::ParamStore& params, const EncoderConfig& cfg, const Vocab& vocab,
                       const corpus::Dataset& data, const MlmOptions& opts) {
  if (data.empty()) throw std::invalid_argument("mlm_pretrain: empty dataset");
  std::vector<TokenSequence> seqs;
  for (const auto& ex : data.examples()) {
    auto seq = tokenize(ex.text, vocab, cfg.max_len);
    if (seq.length > 2) seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) throw std::invalid_argument("mlm_pretrain: every text is empty");

  Rng rng(opts.seed);
  ag::AdamW optim;
  const auto lr = [&](const std::string&) { return opts.lr; };
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  MlmReport report;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<TokenSequence> chunk;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        chunk.push_back(seqs[order[i]]);
      }
      auto masked = mask_batch(chunk, opts.mask_rate, rng);
      params.zero_grad();
      auto r = mlm_loss(params, cfg, masked, {.train = true, .rng = &rng});
      r.loss.backward();
      optim.step(params, lr);
      total += r.loss.item();
      ++batches;
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  params.zero_grad();
  if (!report.epoch_loss.empty()) report.final_epoch_loss = report.epoch_loss.back();
  return report;
}

}  // namespace protofuse::encoder

#include "protofuse/metalearn/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"
#include "protofuse/metalearn/episode.hpp"
#include "protofuse/metalearn/meta_train.hpp"

namespace protofuse::metalearn {

using ag::Matrix;
using ag::Var;

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::prototype: return "prototype";
    case HeadKind::linear: return "linear";
    case HeadKind::feed_forward: return "feed_forward";
    case HeadKind::mldg: return "mldg";
    case HeadKind::protomaml: return "protomaml";
  }
  return "linear";
}

HeadKind head_kind_from_string(std::string_view s) {
  for (auto k : {HeadKind::prototype, HeadKind::linear, HeadKind::feed_forward, HeadKind::mldg,
                 HeadKind::protomaml}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown head '" + std::string(s) +
                              "' (expected prototype|linear|feed_forward|mldg|protomaml)");
}

namespace {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

void install_head(fusion::Model& model, HeadKind head, const corpus::Dataset& kshot, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(model.encoder.d_model);
  const auto c = static_cast<Eigen::Index>(kshot.n_classes());
  for (const char* prefix : {"head.linear.", "head.ffn.", "head.mldg.out.", "head.protomaml."}) {
    model.params.erase_prefix(prefix);
  }
  switch (head) {
    case HeadKind::prototype:
      break;
    case HeadKind::linear:
      model.params.add("head.linear.w", normal_matrix(d, c, 0.02, rng));
      model.params.add("head.linear.b", Matrix::Zero(1, c));
      break;
    case HeadKind::feed_forward:
      model.params.add("head.ffn.w1", normal_matrix(d, d, 0.02, rng));
      model.params.add("head.ffn.b1", Matrix::Zero(1, d));
      model.params.add("head.ffn.w2", normal_matrix(d, c, 0.02, rng));
      model.params.add("head.ffn.b2", Matrix::Zero(1, c));
      break;
    case HeadKind::mldg: {
      ensure_mldg_hidden(model, rng);
      const MldgOutput out = mldg_head_build(kshot.n_classes(), model.encoder.d_model);
      model.params.add("head.mldg.out.w", out.weight.transpose());
      model.params.add("head.mldg.out.b", Matrix(out.bias));
      break;
    }
    case HeadKind::protomaml: {
      const Matrix sv = fusion::represent_values(model, kshot.manifest(), kshot.examples(), true);
      std::vector<std::size_t> classes;
      for (const auto& ex : kshot.examples()) classes.push_back(ex.label_index);
      const LinearHead init =
          protomaml_head_init(compute_prototypes(sv, classes, kshot.n_classes()));
      model.params.add("head.protomaml.w", init.weight.transpose());
      model.params.add("head.protomaml.b", Matrix(init.bias));
      break;
    }
  }
}

std::size_t min_class_count(const corpus::Dataset& d) {
  const auto counts = d.class_counts();
  return *std::min_element(counts.begin(), counts.end());
}

}  // namespace

Var head_logits(const fusion::Model& model, HeadKind head, const Var& reps) {
  const auto& p = model.params;
  switch (head) {
    case HeadKind::linear:
      return ag::linear(reps, p.at("head.linear.w"), p.at("head.linear.b"));
    case HeadKind::feed_forward: {
      const Var h = ag::tanh(ag::linear(reps, p.at("head.ffn.w1"), p.at("head.ffn.b1")));
      return ag::linear(h, p.at("head.ffn.w2"), p.at("head.ffn.b2"));
    }
    case HeadKind::mldg: {
      const Var h = ag::linear(reps, p.at("head.mldg.hidden.w"), p.at("head.mldg.hidden.b"));
      return ag::linear(h, p.at("head.mldg.out.w"), p.at("head.mldg.out.b"));
    }
    case HeadKind::protomaml:
      return ag::linear(reps, p.at("head.protomaml.w"), p.at("head.protomaml.b"));
    case HeadKind::prototype:
      break;
  }
  throw std::invalid_argument("head_logits: the prototype head has no logits layer");
}

Classifier supervised_finetune(const fusion::Model& model, const corpus::Dataset& kshot,
                               const FinetuneOptions& options) {
  if (kshot.empty()) throw std::invalid_argument("finetune: empty K-shot set");
  if (options.batch_size == 0) throw std::invalid_argument("finetune: batch size must be positive");
  Classifier out{model.clone(), options.head, options.distance, kshot.manifest(), std::nullopt, {}};
  fusion::Model& m = out.model;
  m.prepare_domain(kshot.manifest());
  Rng rng(Rng::mix(options.seed ^ 0xf17e));
  Rng dropout(Rng::mix(options.seed ^ 0xd40f));
  install_head(m, options.head, kshot, rng);

  ag::AdamW optimizer;
  const fusion::RepresentOptions train_opts{true, &dropout};
  const auto& ex = kshot.examples();

  if (options.head == HeadKind::prototype) {
    const std::size_t k = min_class_count(kshot);
    const std::size_t shots = std::max<std::size_t>(1, std::min<std::size_t>(k / 2, 8));
    const std::size_t per_epoch = std::max<std::size_t>(1, k / (2 * shots));
    const std::size_t total = k >= 2 ? options.epochs * per_epoch : 0;
    for (std::size_t t = 0; t < total; ++t) {
      const Episode ep = make_episode(kshot, shots, rng);
      m.params.zero_grad();
      const EpisodeLoss l = proto_episode_loss(ep, m, options.distance, train_opts);
      l.loss.backward();
      const double head_rate = ag::cosine_annealing(options.rates.head, options.min_lr, t, total);
      out.trace.lr.push_back(head_rate);
      out.trace.loss.push_back(l.loss.item());
      optimizer.step(m.params, [&](const std::string& name) {
        return ag::cosine_annealing(options.rates.rate_for(name), options.min_lr, t, total);
      });
    }
    m.params.zero_grad();
    const Matrix sv = fusion::represent_values(m, kshot.manifest(), ex, true);
    std::vector<std::size_t> classes;
    for (const auto& e : ex) classes.push_back(e.label_index);
    out.prototypes = compute_prototypes(sv, classes, kshot.n_classes());
    return out;
  }

  const std::size_t per_epoch = (ex.size() + options.batch_size - 1) / options.batch_size;
  const std::size_t total = options.epochs * per_epoch;
  std::vector<std::size_t> order(ex.size());
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size, ++t) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      std::vector<corpus::Example> batch;
      std::vector<std::optional<std::size_t>> gold;
      std::vector<std::size_t> targets;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& e = ex[order[start + i]];
        batch.push_back(e);
        gold.emplace_back(e.label_index);
        targets.push_back(e.label_index);
      }
      m.params.zero_grad();
      const Var reps = fusion::represent(m, kshot.manifest(), batch, gold, train_opts);
      const Var loss = ag::cross_entropy(head_logits(m, options.head, reps), targets);
      loss.backward();
      out.trace.lr.push_back(ag::cosine_annealing(options.rates.head, options.min_lr, t, total));
      out.trace.loss.push_back(loss.item());
      optimizer.step(m.params, [&](const std::string& name) {
        return ag::cosine_annealing(options.rates.rate_for(name), options.min_lr, t, total);
      });
    }
  }
  m.params.zero_grad();
  return out;
}

Matrix Classifier::scores(std::span<const corpus::Example> examples) const {
  if (examples.empty()) return Matrix(0, static_cast<Eigen::Index>(manifest.n_classes()));
  const Matrix reps = fusion::represent_values(model, manifest, examples, false);
  if (head == HeadKind::prototype) {
    if (!prototypes) throw std::logic_error("classifier: prototypes were never built");
    Matrix out(reps.rows(), static_cast<Eigen::Index>(prototypes->n_classes()));
    for (Eigen::Index i = 0; i < reps.rows(); ++i) {
      const auto d = distances(reps.row(i), *prototypes, distance);
      for (std::size_t c = 0; c < d.size(); ++c) out(i, static_cast<Eigen::Index>(c)) = -d[c];
    }
    return out;
  }
  return head_logits(model, head, ag::constant(reps)).value();
}

std::vector<std::size_t> Classifier::predict(std::span<const corpus::Example> examples) const {
  const Matrix s = scores(examples);
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::vector<double> row(s.row(i).data(), s.row(i).data() + s.cols());
    out.push_back(argmax(row));
  }
  return out;
}

}  // namespace protofuse::metalearn

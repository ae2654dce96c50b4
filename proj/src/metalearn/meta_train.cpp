#include "protofuse/metalearn/meta_train.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <json.hpp>
#include <ostream>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"
#include "protofuse/autograd/optim.hpp"

namespace protofuse::metalearn {

namespace {

using ag::Matrix;
using ag::Var;

std::vector<std::size_t> classes_of(const std::vector<corpus::Example>& xs) {
  std::vector<std::size_t> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.label_index);
  return out;
}

std::vector<std::optional<std::size_t>> gold_of(const std::vector<corpus::Example>& xs) {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.emplace_back(x.label_index);
  return out;
}

double accuracy_of(const Matrix& logits, std::span<const std::size_t> targets) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    std::vector<double> v(row.data(), row.data() + row.size());
    if (argmax(v) == targets[static_cast<std::size_t>(i)]) ++hits;
  }
  return logits.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(logits.rows());
}

using GradMap = std::map<std::string, Matrix>;

GradMap take_grads(const ag::ParamStore& params) {
  GradMap out;
  for (const auto& [name, var] : params.entries()) {
    if (var.has_grad()) out.emplace(name, var.node()->grad);
  }
  return out;
}

}  // namespace

EpisodeLoss proto_episode_loss(const Episode& ep, const fusion::Model& model, Distance distance,
                               const fusion::RepresentOptions& opts) {
  validate_episode(ep);
  const auto support_classes = classes_of(ep.support);
  const auto query_classes = classes_of(ep.query);
  const auto gold = gold_of(ep.support);
  const Var s = fusion::represent(model, ep.manifest, ep.support, gold, opts);
  const Var q = fusion::represent_unlabeled(model, ep.manifest, ep.query, opts);
  const Var protos = prototype_matrix(s, support_classes, ep.n_way);
  const Var logits = distance_logits(q, protos, distance);
  EpisodeLoss out;
  out.loss = ag::cross_entropy(logits, query_classes);
  out.accuracy = accuracy_of(logits.value(), query_classes);
  return out;
}

StepResult fo_protomaml_step(const Episode& ep, fusion::Model& model, const MetaConfig& config,
                             const fusion::RepresentOptions& opts) {
  validate_episode(ep);
  StepResult result{0, 0, false, ep.k_shot, ep.domain_id()};
  const auto support_classes = classes_of(ep.support);
  const auto query_classes = classes_of(ep.query);
  const auto gold = gold_of(ep.support);

  const Matrix sv = fusion::represent_values(model, ep.manifest, ep.support, true);
  const LinearHead init = protomaml_head_init(compute_prototypes(sv, support_classes, ep.n_way));

  fusion::Model adapted = model.clone();
  adapted.params.add("head.protomaml.w", init.weight);
  adapted.params.add("head.protomaml.b", Matrix(init.bias));
  auto logits_of = [&](const Var& x) {
    return ag::add_row(ag::matmul_nt(x, adapted.params.at("head.protomaml.w")),
                       adapted.params.at("head.protomaml.b"));
  };
  const double alpha = config.inner_lr;
  for (std::size_t s = 0; s < config.inner_steps; ++s) {
    adapted.params.zero_grad();
    const Var reps = fusion::represent(adapted, ep.manifest, ep.support, gold, opts);
    const Var loss = ag::cross_entropy(logits_of(reps), support_classes);
    if (!std::isfinite(loss.item())) {
      model.params.zero_grad();
      result.skipped = true;
      result.loss = loss.item();
      return result;
    }
    loss.backward();
    ag::sgd_step(adapted.params, [alpha](const std::string&) { return alpha; });
  }

  adapted.params.zero_grad();
  const Var q = fusion::represent_unlabeled(adapted, ep.manifest, ep.query, opts);
  const Var logits = logits_of(q);
  const Var loss = ag::cross_entropy(logits, query_classes);
  result.loss = loss.item();
  result.accuracy = accuracy_of(logits.value(), query_classes);
  if (!std::isfinite(result.loss)) {
    model.params.zero_grad();
    result.skipped = true;
    return result;
  }
  loss.backward();

  model.params.zero_grad();
  for (auto& [name, var] : model.params.entries()) {
    if (!adapted.params.contains(name)) continue;
    const Var& a = adapted.params.at(name);
    if (a.has_grad()) var.node()->grad = a.node()->grad;
  }
  return result;
}

void ensure_mldg_hidden(fusion::Model& model, Rng& rng) {
  if (model.params.contains("head.mldg.hidden.w")) return;
  const auto d = static_cast<Eigen::Index>(model.encoder.d_model);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix w(d, d);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, sd);
  model.params.add("head.mldg.hidden.w", std::move(w));
  model.params.add("head.mldg.hidden.b", Matrix::Zero(1, d));
}

MldgOutput mldg_head_build(std::size_t n_classes, std::size_t d_model) {
  if (n_classes < 2) throw std::invalid_argument("mldg head: at least two classes required");
  return {Matrix::Zero(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(d_model)),
          ag::RowVector::Zero(static_cast<Eigen::Index>(n_classes))};
}

EpisodeLoss mldg_task_loss(const Episode& ep, const fusion::Model& model, const MetaConfig& config,
                           const fusion::RepresentOptions& opts) {
  validate_episode(ep);
  if (!model.params.contains("head.mldg.hidden.w")) {
    throw std::invalid_argument("mldg: hidden layer missing from the model");
  }
  const Var& hw = model.params.at("head.mldg.hidden.w");
  const Var& hb = model.params.at("head.mldg.hidden.b");
  const auto support_classes = classes_of(ep.support);
  const auto query_classes = classes_of(ep.query);

  // Fit the per-task output layer on fixed support features.
  const Matrix sv = fusion::represent_values(model, ep.manifest, ep.support, true);
  const Matrix hs = (sv * hw.value()).rowwise() + ag::RowVector(hb.value().row(0));
  MldgOutput out = mldg_head_build(ep.n_way, model.encoder.d_model);
  const double smooth = 0.5 * (hs.rowwise().squaredNorm().maxCoeff() + 1.0);
  const double step = 1.0 / smooth;
  const auto n = static_cast<double>(hs.rows());
  Matrix y = Matrix::Zero(hs.rows(), static_cast<Eigen::Index>(ep.n_way));
  for (std::size_t i = 0; i < support_classes.size(); ++i) {
    y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(support_classes[i])) = 1.0;
  }
  for (std::size_t s = 0; s < std::max<std::size_t>(1, config.inner_steps); ++s) {
    const Matrix logits = (hs * out.weight.transpose()).rowwise() + out.bias;
    const Matrix g = (ag::softmax_rows(logits) - y) / n;
    out.weight -= step * (g.transpose() * hs);
    out.bias -= step * g.colwise().sum();
  }

  const Var q = fusion::represent_unlabeled(model, ep.manifest, ep.query, opts);
  const Var hq = ag::linear(q, hw, hb);
  const Var logits = ag::add_row(ag::matmul_nt(hq, ag::constant(out.weight)),
                                 ag::constant(Matrix(out.bias)));
  EpisodeLoss result;
  result.loss = ag::cross_entropy(logits, query_classes);
  result.accuracy = accuracy_of(logits.value(), query_classes);
  return result;
}

StepResult mldg_step(EpisodeSampler& sampler, fusion::Model& model, const MetaConfig& config,
                     Rng& dropout_rng) {
  const std::size_t n_domains = sampler.domain_count();
  if (n_domains < 2) throw std::invalid_argument("mldg: at least two training domains required");
  Rng& rng = sampler.rng();

  std::vector<std::size_t> ks;
  for (auto k : sampler.k_choices()) {
    std::size_t eligible = 0;
    for (std::size_t d = 0; d < n_domains; ++d) eligible += sampler.eligible(d, k) ? 1 : 0;
    if (eligible >= 2) ks.push_back(k);
  }
  if (ks.empty()) {
    throw std::invalid_argument("mldg: no K lets two domains furnish 2K examples per class");
  }
  const std::size_t k = ks[rng.index(ks.size())];
  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < n_domains; ++d) {
    if (sampler.eligible(d, k)) pool.push_back(d);
  }
  const std::size_t test_pos = rng.index(pool.size());
  const std::size_t test_domain = pool[test_pos];
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(test_pos));
  const std::size_t train_domain = pool[rng.index(pool.size())];

  const Episode train_ep = sampler.next_from(train_domain, k);
  const Episode test_ep = sampler.next_from(test_domain, k);
  const fusion::RepresentOptions opts{true, &dropout_rng};

  model.params.zero_grad();
  const EpisodeLoss f = mldg_task_loss(train_ep, model, config, opts);
  f.loss.backward();
  const GradMap grad_f = take_grads(model.params);

  fusion::Model virt = model.clone();
  for (auto& [name, var] : virt.params.entries()) {
    auto it = grad_f.find(name);
    if (it != grad_f.end()) var.mutable_value() -= config.inner_lr * it->second;
  }
  const EpisodeLoss g = mldg_task_loss(test_ep, virt, config, opts);
  g.loss.backward();

  StepResult result;
  result.loss = f.loss.item() + config.mldg_beta * g.loss.item();
  result.accuracy = 0.5 * (f.accuracy + g.accuracy);
  result.k = k;
  result.domain_id = test_ep.domain_id();
  if (!std::isfinite(result.loss)) {
    model.params.zero_grad();
    result.skipped = true;
    return result;
  }
  for (auto& [name, var] : model.params.entries()) {
    const Var& vg = virt.params.at(name);
    auto it = grad_f.find(name);
    if (it == grad_f.end() && !vg.has_grad()) continue;
    Matrix total = it != grad_f.end() ? it->second : Matrix::Zero(var.rows(), var.cols());
    if (vg.has_grad()) total += config.mldg_beta * vg.node()->grad;
    var.node()->grad = std::move(total);
  }
  return result;
}

MetaReport meta_train(Algorithm algorithm, const std::vector<const corpus::Dataset*>& domains,
                      LearnerState& state, std::ostream* log) {
  const MetaConfig& cfg = state.config;
  cfg.validate();
  if (domains.empty()) throw std::invalid_argument("meta_train: no training domains");
  if (algorithm == Algorithm::mldg && domains.size() < 2) {
    throw std::invalid_argument("meta_train: mldg needs at least two training domains");
  }
  auto& model = state.model;
  for (const auto* d : domains) model.prepare_domain(d->manifest());
  if (algorithm == Algorithm::mldg) ensure_mldg_hidden(model, state.rng);
  state.algorithm = to_string(algorithm);

  EpisodeSampler sampler(domains, cfg.k_choices, Rng::mix(cfg.seed + 0x9e37));
  const fusion::RepresentOptions opts{true, &state.rng};
  const ag::ComponentRates rates = cfg.effective_rates();
  const ag::RateFn rate_fn = [&rates](const std::string& name) { return rates.rate_for(name); };

  MetaReport report;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.meta_epochs; ++epoch) {
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t task = 0; task < cfg.tasks_per_epoch; ++task) {
      StepResult r;
      switch (algorithm) {
        case Algorithm::protonet: {
          const Episode ep = sampler.next();
          model.params.zero_grad();
          const EpisodeLoss l = proto_episode_loss(ep, model, cfg.distance, opts);
          r = {l.loss.item(), l.accuracy, !std::isfinite(l.loss.item()), ep.k_shot, ep.domain_id()};
          if (!r.skipped) l.loss.backward();
          break;
        }
        case Algorithm::protomaml: {
          const Episode ep = sampler.next();
          r = fo_protomaml_step(ep, model, cfg, opts);
          break;
        }
        case Algorithm::mldg:
          r = mldg_step(sampler, model, cfg, state.rng);
          break;
      }
      if (r.skipped) {
        ++report.skipped;
      } else {
        state.optimizer.step(model.params, rate_fn);
        loss_sum += r.loss;
        acc_sum += r.accuracy;
        ++counted;
      }
      model.params.zero_grad();
      report.task_loss.push_back(r.loss);
      if (log) {
        nlohmann::json line{{"epoch", epoch},
                            {"task", task},
                            {"loss", std::isfinite(r.loss) ? nlohmann::json(r.loss) : nlohmann::json()},
                            {"k", r.k},
                            {"domain_id", r.domain_id}};
        *log << line.dump() << '\n';
      }
    }
    const double mean = counted ? loss_sum / static_cast<double>(counted)
                                : std::numeric_limits<double>::quiet_NaN();
    report.epoch_loss.push_back(mean);
    report.epoch_accuracy.push_back(counted ? acc_sum / static_cast<double>(counted) : 0.0);
    if (std::isfinite(mean) && mean < best) {
      best = mean;
      report.best_epoch = epoch;
      report.best_params = model.params.clone();
    }
  }
  report.episodes = sampler.calls();
  return report;
}

}  // namespace protofuse::metalearn

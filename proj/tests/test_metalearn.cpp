#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "protofuse/autograd/ops.hpp"
#include "protofuse/metalearn/episode.hpp"
#include "protofuse/metalearn/meta_train.hpp"
#include "protofuse/metalearn/proto.hpp"
#include "synthetic.hpp"

using namespace protofuse;
namespace pt = protofuse::testing;
using namespace protofuse::metalearn;

namespace {

pt::SyntheticCorpus small_corpus(std::uint64_t seed = 7) {
  pt::SyntheticOptions o;
  o.train_examples_per_class = 40;
  o.test_examples_per_class = 40;
  o.seed = seed;
  return pt::make_synthetic(o);
}

fusion::Model small_model(const pt::SyntheticCorpus& c, fusion::FusionKind kind = fusion::FusionKind::none,
                          std::size_t d = 12, std::size_t max_len = 16) {
  encoder::EncoderConfig cfg;
  cfg.d_model = d;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_len = max_len;
  cfg.dropout = 0.0;
  cfg.seed = 5;
  fusion::FusionStrategy fs;
  fs.kind = kind;
  auto domains = c.train_ptrs();
  domains.push_back(&c.test);
  return fusion::Model::create(cfg, fs, fusion::build_model_vocab(domains, 2000));
}

ag::Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

double sq_dist(const ag::RowVector& a, const ag::RowVector& b) { return (a - b).squaredNorm(); }

}  // namespace

TEST(Prototypes, MeanPerClass) {
  ag::Matrix v(3, 2);
  v << 1, 0, 3, 0, 5, 7;
  const std::vector<std::size_t> cls{0, 0, 1};
  const auto p = compute_prototypes(v, cls, 2);
  EXPECT_EQ(p.vectors.row(0), (ag::RowVector(2) << 2, 0).finished());
  EXPECT_EQ(p.vectors.row(1), v.row(2));
  ag::Matrix perm(3, 2);
  perm << 5, 7, 3, 0, 1, 0;
  const std::vector<std::size_t> pcls{1, 0, 0};
  EXPECT_EQ(compute_prototypes(perm, pcls, 2).vectors, p.vectors);
  EXPECT_THROW(compute_prototypes(v, cls, 3), std::invalid_argument);
}

TEST(Prototypes, DifferentiableMatchesValues) {
  Rng rng(1);
  const ag::Matrix v = random_matrix(9, 4, rng);
  const std::vector<std::size_t> cls{0, 1, 2, 0, 1, 2, 2, 2, 0};
  const auto a = compute_prototypes(v, cls, 3).vectors;
  const auto b = prototype_matrix(ag::constant(v), cls, 3).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ProtoClassify, WorkedExampleAndSymmetry) {
  Prototypes p;
  p.vectors = ag::Matrix(2, 2);
  p.vectors << 0, 0, 2, 0;
  ag::RowVector q(2);
  q << 0.5, 0;
  const auto r = proto_classify(q, p, Distance::euclidean);
  EXPECT_NEAR(r.probs[0], 0.7311, 1e-4);
  EXPECT_NEAR(r.probs[1], 0.2689, 1e-4);
  EXPECT_EQ(r.predicted, 0u);

  q << 1, 0;
  const auto tie = proto_classify(q, p, Distance::euclidean);
  EXPECT_NEAR(tie.probs[0], 0.5, 1e-15);
  EXPECT_EQ(tie.predicted, 0u);

  q << 2, 0;
  EXPECT_EQ(proto_classify(q, p, Distance::squared_euclidean).predicted, 1u);
  q << std::nan(""), 0;
  EXPECT_THROW(proto_classify(q, p, Distance::euclidean), std::invalid_argument);
}

TEST(ProtoClassify, ShiftInvarianceOfDistribution) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const ag::Matrix p = random_matrix(4, 3, rng);
    const ag::RowVector q = random_matrix(1, 3, rng);
    std::vector<double> d(4);
    for (int c = 0; c < 4; ++c) d[c] = std::sqrt(sq_dist(q, p.row(c)));
    const double shift = rng.normal() * 10;
    double z0 = 0, z1 = 0;
    for (double x : d) {
      z0 += std::exp(-x);
      z1 += std::exp(-(x + shift));
    }
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(std::exp(-d[c]) / z0, std::exp(-(d[c] + shift)) / z1, 1e-9);
  }
}

TEST(ProtomamlHead, FormulaAndEquivalence) {
  Prototypes p;
  p.vectors = ag::Matrix(2, 2);
  p.vectors << 1, 0, 0, 0;
  const auto h = protomaml_head_init(p);
  EXPECT_EQ(h.weight.row(0), (ag::RowVector(2) << 2, 0).finished());
  EXPECT_EQ(h.bias(0), -1.0);
  EXPECT_EQ(h.weight.row(1), ag::RowVector::Zero(2));
  EXPECT_EQ(h.bias(1), 0.0);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Prototypes pr;
    pr.vectors = random_matrix(5, 8, rng);
    const auto head = protomaml_head_init(pr);
    for (int i = 0; i < 100; ++i) {
      const ag::RowVector x = random_matrix(1, 8, rng);
      const ag::Matrix logits = x * head.weight.transpose() + head.bias;
      const auto lin = ag::softmax_rows(logits);
      const auto ref = proto_classify(x, pr, Distance::squared_euclidean);
      for (int c = 0; c < 5; ++c) EXPECT_NEAR(lin(0, c), ref.probs[c], 1e-6);
    }
  }
}

TEST(EpisodeLossOracle, HandComputedOneDimensional) {
  // Support: class 0 at {0, 2}, class 1 at {5}. Queries 1 (class 0), 4 (class 1).
  ag::Matrix s(3, 1), q(2, 1);
  s << 0, 2, 5;
  q << 1, 4;
  const std::vector<std::size_t> scls{0, 0, 1}, qcls{0, 1};
  const auto protos = prototype_matrix(ag::constant(s), scls, 2);
  const auto loss = ag::cross_entropy(distance_logits(ag::constant(q), protos, Distance::euclidean), qcls);
  // Prototypes 1 and 5. Query 1: d = (0, 4). Query 4: d = (3, 1).
  const double nll0 = -std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(-4.0)));
  const double nll1 = -std::log(std::exp(-1.0) / (std::exp(-3.0) + std::exp(-1.0)));
  EXPECT_NEAR(loss.item(), (nll0 + nll1) / 2, 1e-12);
}

TEST(EpisodeLoss, ComposesRepresentations) {
  const auto c = small_corpus();
  const auto model = small_model(c);
  Rng rng(9);
  const Episode ep = make_episode(c.train[0], 3, rng);
  const auto l = proto_episode_loss(ep, model, Distance::euclidean);
  EXPECT_TRUE(std::isfinite(l.loss.item()));
  EXPECT_GE(l.accuracy, 0.0);
  EXPECT_LE(l.accuracy, 1.0);

  Episode dup = ep;
  dup.query = dup.support;
  EXPECT_THROW(proto_episode_loss(dup, model, Distance::euclidean), std::invalid_argument);
}

TEST(EpisodeLoss, PerfectQueriesBeatUniform) {
  // Queries sitting on well-separated prototypes.
  ag::Matrix s(4, 2), q(2, 2);
  s << 0, 0, 0, 0, 10, 10, 10, 10;
  q << 0, 0, 10, 10;
  const std::vector<std::size_t> scls{0, 0, 1, 1}, qcls{0, 1};
  const auto protos = prototype_matrix(ag::constant(s), scls, 2);
  const auto loss = ag::cross_entropy(distance_logits(ag::constant(q), protos, Distance::euclidean), qcls);
  EXPECT_LT(loss.item(), std::log(2.0));
}

TEST(GradCheck, ProtoEpisodeLoss) {
  const auto c = small_corpus();
  auto model = small_model(c, fusion::FusionKind::full, 8, 12);
  Rng rng(4);
  const Episode ep = make_episode(c.train[1], 2, rng);
  model.prepare_domain(ep.manifest);
  auto loss = [&](const ag::ParamStore& p) {
    fusion::Model view{model.encoder, model.fusion, model.vocab, p};
    return proto_episode_loss(ep, view, Distance::euclidean).loss;
  };
  const auto r = pt::grad_check(model.params, loss, 120, 8);
  EXPECT_GE(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(Episode, InvariantsOverManyDraws) {
  const auto c = small_corpus();
  EpisodeSampler sampler(c.train_ptrs(), {4, 8, 16}, 42);
  std::set<std::size_t> ks;
  for (int i = 0; i < 1000; ++i) {
    const Episode ep = sampler.next();
    ASSERT_NO_THROW(validate_episode(ep));
    std::set<std::uint64_t> support;
    std::vector<std::size_t> sc(ep.n_way), qc(ep.n_way);
    for (const auto& e : ep.support) {
      support.insert(e.uid);
      ++sc[e.label_index];
      ASSERT_EQ(e.domain_id, ep.domain_id());
    }
    for (const auto& e : ep.query) {
      ASSERT_EQ(support.count(e.uid), 0u);
      ++qc[e.label_index];
      ASSERT_EQ(e.domain_id, ep.domain_id());
    }
    for (std::size_t k = 0; k < ep.n_way; ++k) {
      ASSERT_EQ(sc[k], ep.k_shot);
      ASSERT_EQ(qc[k], ep.k_shot);
    }
    ks.insert(ep.k_shot);
  }
  EXPECT_EQ(ks, (std::set<std::size_t>{4, 8, 16}));
  EXPECT_EQ(sampler.calls(), 1000u);
}

TEST(Episode, SizesEligibilityDeterminism) {
  std::vector<corpus::Example> ex;
  corpus::DomainManifest m{"d", {{"a", ""}, {"b", ""}, {"c", ""}}, {}};
  std::uint64_t uid = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int i = 0; i < 40; ++i) ex.push_back({"x", c, "d", uid++, {}});
  }
  const corpus::Dataset full(m, ex);
  Rng rng(1);
  const Episode ep = make_episode(full, 16, rng);
  EXPECT_EQ(ep.support.size(), 48u);
  EXPECT_EQ(ep.query.size(), 48u);
  EXPECT_EQ(ep.n_way, 3u);

  ex.pop_back();
  for (int i = 0; i < 8; ++i) ex.pop_back();  // class c now has 31
  const corpus::Dataset short_c(m, ex);
  EpisodeSampler s({&full, &short_c}, {16}, 3);
  EXPECT_TRUE(s.eligible(0, 16));
  EXPECT_FALSE(s.eligible(1, 16));
  for (int i = 0; i < 50; ++i) EXPECT_EQ(s.next().domain_id(), "d");

  const auto c = small_corpus();
  EpisodeSampler a(c.train_ptrs(), {4, 8}, 5), b(c.train_ptrs(), {4, 8}, 5);
  for (int i = 0; i < 1000; ++i) {
    const auto ea = a.next(), eb = b.next();
    ASSERT_EQ(ea.support, eb.support);
    ASSERT_EQ(ea.query, eb.query);
  }
  EXPECT_THROW(EpisodeSampler(c.train_ptrs(), {100}, 1).next(), std::invalid_argument);
}

TEST(FoProtomaml, ZeroInnerStepsEqualsProtoNetLoss) {
  const auto c = small_corpus();
  auto model = small_model(c);
  EpisodeSampler sampler(c.train_ptrs(), {3, 5}, 11);
  MetaConfig cfg;
  cfg.inner_steps = 0;
  for (int i = 0; i < 10; ++i) {
    const Episode ep = sampler.next();
    const double ref = proto_episode_loss(ep, model, Distance::squared_euclidean).loss.item();
    model.params.zero_grad();
    const auto step = fo_protomaml_step(ep, model, cfg);
    EXPECT_NEAR(step.loss, ref, 1e-6);
  }
}

TEST(FoProtomaml, ZeroRateMatchesZeroSteps) {
  const auto c = small_corpus();
  auto model = small_model(c);
  Rng rng(12);
  const Episode ep = make_episode(c.train[2], 3, rng);
  MetaConfig zero_steps;
  zero_steps.inner_steps = 0;
  MetaConfig zero_rate;
  zero_rate.inner_steps = 3;
  zero_rate.inner_lr = 0.0;
  model.params.zero_grad();
  const auto a = fo_protomaml_step(ep, model, zero_steps);
  std::vector<ag::Matrix> ga;
  for (const auto& [n, v] : model.params.entries()) ga.push_back(v.grad());
  model.params.zero_grad();
  const auto b = fo_protomaml_step(ep, model, zero_rate);
  EXPECT_DOUBLE_EQ(a.loss, b.loss);
  std::size_t i = 0;
  for (const auto& [n, v] : model.params.entries()) {
    EXPECT_LT((v.grad() - ga[i++]).cwiseAbs().maxCoeff(), 1e-12) << n;
  }
}

TEST(FoProtomaml, InnerStepsReduceSupportLossDirection) {
  const auto c = small_corpus();
  auto model = small_model(c);
  Rng rng(13);
  const Episode ep = make_episode(c.train[0], 4, rng);
  MetaConfig cfg;
  cfg.inner_steps = 5;
  cfg.inner_lr = 1e-2;
  model.params.zero_grad();
  const auto r = fo_protomaml_step(ep, model, cfg);
  EXPECT_FALSE(r.skipped);
  EXPECT_TRUE(std::isfinite(r.loss));
  bool any = false;
  for (const auto& [n, v] : model.params.entries()) any = any || (v.has_grad() && v.grad().cwiseAbs().maxCoeff() > 0);
  EXPECT_TRUE(any);
  for (const auto& [n, v] : model.params.entries()) EXPECT_EQ(n.rfind("head.protomaml", 0), std::string::npos);
}

TEST(FoMaml, QuadraticSurrogate) {
  const double theta = 3.0, t = 1.0, alpha = 0.1;
  auto g = [&](double x) { return 2 * (x - t); };
  const double delta = g(theta);
  EXPECT_NEAR(fo_maml_gradient(theta, g, g, alpha, 1), 2 * (theta - alpha * delta - t), 1e-15);
  EXPECT_NEAR(fo_maml_gradient(theta, g, g, 0.0, 4), g(theta), 1e-15);
}

TEST(Mldg, ScalarOracle) {
  auto gf = [](double x) { return 2 * x; };
  auto gg = [](double x) { return 2 * (x - 1); };
  EXPECT_NEAR(mldg_update(1.0, gf, gg, 0.1, 1.0, 0.1), 0.84, 1e-10);
  EXPECT_NEAR(mldg_update(1.0, gf, gg, 0.1, 0.0, 0.1), 1.0 - 0.1 * 2.0, 1e-15);
  EXPECT_EQ(mldg_update(1.0, gf, gg, 0.1, 1.0, 0.0), 1.0);
}

TEST(Mldg, HeadBuildIsFreshZeros) {
  const auto a = mldg_head_build(3, 12);
  EXPECT_EQ(a.weight.rows(), 3);
  EXPECT_EQ(a.weight.cols(), 12);
  EXPECT_TRUE(a.weight.isZero(0.0));
  EXPECT_TRUE(a.bias.isZero(0.0));
  const ag::RowVector h = ag::RowVector::Random(12);
  const ag::Matrix logits = h * a.weight.transpose() + a.bias;
  const auto p = ag::softmax_rows(logits);
  for (int ccls = 0; ccls < 3; ++ccls) EXPECT_DOUBLE_EQ(p(0, ccls), 1.0 / 3);
  EXPECT_TRUE(mldg_head_build(3, 12).weight.isZero(0.0));
  EXPECT_THROW(mldg_head_build(1, 12), std::invalid_argument);
}

TEST(Mldg, StepNeedsTwoDomains) {
  const auto c = small_corpus();
  auto model = small_model(c);
  Rng rng(1);
  ensure_mldg_hidden(model, rng);
  MetaConfig cfg;
  cfg.k_choices = {4};
  EpisodeSampler one({&c.train[0]}, {4}, 1);
  EXPECT_THROW(mldg_step(one, model, cfg, rng), std::invalid_argument);
  EpisodeSampler two(c.train_ptrs(), {4}, 1);
  model.params.zero_grad();
  const auto r = mldg_step(two, model, cfg, rng);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(model.params.at("head.mldg.hidden.w").has_grad());
}

TEST(Mldg, TaskLossIsFinite) {
  const auto c = small_corpus();
  auto model = small_model(c);
  Rng rng(1);
  ensure_mldg_hidden(model, rng);
  const Episode ep = make_episode(c.train[0], 4, rng);
  MetaConfig cfg;
  cfg.inner_steps = 0;
  const auto l = mldg_task_loss(ep, model, cfg);
  EXPECT_TRUE(std::isfinite(l.loss.item()));
  EXPECT_GE(l.accuracy, 0.0);
  EXPECT_LE(l.accuracy, 1.0);
  EXPECT_THROW(mldg_task_loss(ep, small_model(c), cfg), std::invalid_argument);
}

TEST(MetaTrain, AccountingAndDeterminism) {
  const auto c = small_corpus();
  for (auto algo : {Algorithm::protonet, Algorithm::protomaml, Algorithm::mldg}) {
    MetaConfig cfg;
    cfg.meta_epochs = 1;
    cfg.tasks_per_epoch = 1;
    cfg.k_choices = {3};
    cfg.inner_steps = 1;
    cfg.seed = 4;
    auto s = LearnerState::fresh(small_model(c), cfg);
    const auto rep = meta_train(algo, c.train_ptrs(), s);
    EXPECT_EQ(rep.task_loss.size(), 1u) << to_string(algo);
    EXPECT_EQ(rep.episodes, algo == Algorithm::mldg ? 2u : 1u) << to_string(algo);
  }

  MetaConfig cfg;
  cfg.meta_epochs = 2;
  cfg.tasks_per_epoch = 4;
  cfg.k_choices = {3, 5};
  cfg.seed = 8;
  auto a = LearnerState::fresh(small_model(c), cfg);
  auto b = LearnerState::fresh(small_model(c), cfg);
  std::ostringstream la, lb;
  const auto ra = meta_train(Algorithm::protonet, c.train_ptrs(), a, &la);
  const auto rb = meta_train(Algorithm::protonet, c.train_ptrs(), b, &lb);
  EXPECT_EQ(ra.task_loss, rb.task_loss);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_TRUE(a.model.params.bitwise_equal(b.model.params));
  EXPECT_EQ(ra.epoch_loss.size(), 2u);
  const auto first_line = la.str().substr(0, la.str().find('\n'));
  for (const char* key : {"\"epoch\"", "\"task\"", "\"loss\"", "\"k\"", "\"domain_id\""}) {
    EXPECT_NE(first_line.find(key), std::string::npos) << key;
  }

  auto single = LearnerState::fresh(small_model(c), cfg);
  EXPECT_THROW(meta_train(Algorithm::mldg, {&c.train[0]}, single), std::invalid_argument);
}

TEST(MetaTrain, LearnsSeparableDomains) {
  pt::SyntheticOptions o;
  o.train_examples_per_class = 40;
  o.text_len = 8;
  const auto c = pt::make_synthetic(o);
  auto model = small_model(c, fusion::FusionKind::none, 16, 12);
  MetaConfig cfg;
  cfg.meta_epochs = 6;
  cfg.tasks_per_epoch = 50;
  cfg.k_choices = {4};
  cfg.rates = ag::ComponentRates{3e-3, 3e-3, 3e-3};
  cfg.seed = 1;
  auto s = LearnerState::fresh(std::move(model), cfg);
  const auto rep = meta_train(Algorithm::protonet, c.train_ptrs(), s);
  EXPECT_LT(rep.epoch_loss.back(), rep.epoch_loss.front());

  EpisodeSampler held(c.train_ptrs(), {4}, 999);
  double acc = 0;
  for (int i = 0; i < 20; ++i) acc += proto_episode_loss(held.next(), s.model, cfg.distance).accuracy;
  EXPECT_GT(acc / 20, 0.9);
  EXPECT_GT(rep.epoch_accuracy.back(), 0.9);
}

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "protofuse/autograd/ops.hpp"
#include "protofuse/corpus/text.hpp"
#include "protofuse/encoder/encoder.hpp"
#include "protofuse/evaluate/metrics.hpp"
#include "protofuse/evaluate/protocol.hpp"
#include "protofuse/evaluate/recipes.hpp"
#include "protofuse/evaluate/report.hpp"
#include "protofuse/metalearn/meta_train.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace protofuse;
namespace pt = protofuse::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

ag::Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Scalar softmax over exp(-d_c), shifted by the smallest distance.
std::vector<double> eq2_oracle(const std::vector<double>& d) {
  const double lo = *std::min_element(d.begin(), d.end());
  std::vector<double> p(d.size());
  double z = 0;
  for (std::size_t c = 0; c < d.size(); ++c) z += p[c] = std::exp(-(d[c] - lo));
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> scalar_distances(const ag::RowVector& q, const ag::Matrix& protos, bool squared) {
  std::vector<double> d(static_cast<std::size_t>(protos.rows()));
  for (Eigen::Index c = 0; c < protos.rows(); ++c) {
    double s = 0;
    for (Eigen::Index j = 0; j < protos.cols(); ++j) s += (q(j) - protos(c, j)) * (q(j) - protos(c, j));
    d[c] = squared ? s : std::sqrt(s);
  }
  return d;
}

Outcome prototype_oracle() {
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_classes = 1 + rng.index(6);
    const std::size_t shots = 1 + rng.index(32);
    const std::size_t d = 1 + rng.index(64);
    std::vector<std::size_t> classes;
    for (std::size_t c = 0; c < n_classes; ++c) classes.insert(classes.end(), shots, c);
    rng.shuffle(classes);
    const ag::Matrix v = random_matrix(classes.size(), d, rng);
    const auto protos = metalearn::compute_prototypes(v, classes, n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (std::size_t j = 0; j < d; ++j) {
        double sum = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < classes.size(); ++i) {
          if (classes[i] == c) {
            sum += v(i, j);
            ++count;
          }
        }
        worst = std::max(worst, std::abs(protos.vectors(c, j) - sum / count));
      }
    }
  }
  return {worst < 1e-9, "max abs error " + fmt(worst)};
}

Outcome classify_oracle() {
  Rng rng(202);
  double worst = 0;
  std::size_t argmax_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_classes = 1 + rng.index(6);
    const std::size_t d = 1 + rng.index(64);
    const bool squared = rng.uniform() < 0.5;
    metalearn::Prototypes protos{random_matrix(n_classes, d, rng)};
    const ag::RowVector q = random_matrix(1, d, rng);
    const auto got = metalearn::proto_classify(
        q, protos, squared ? metalearn::Distance::squared_euclidean : metalearn::Distance::euclidean);
    const auto dist = scalar_distances(q, protos.vectors, squared);
    const auto ref = eq2_oracle(dist);
    for (std::size_t c = 0; c < n_classes; ++c) worst = std::max(worst, std::abs(got.probs[c] - ref[c]));
    const auto nearest = static_cast<std::size_t>(std::min_element(dist.begin(), dist.end()) - dist.begin());
    const auto top = static_cast<std::size_t>(std::max_element(got.probs.begin(), got.probs.end()) - got.probs.begin());
    if (got.predicted != nearest || top != nearest) ++argmax_mismatch;
  }
  return {worst < 1e-9 && argmax_mismatch == 0,
          "max abs prob error " + fmt(worst) + ", argmax mismatches " + std::to_string(argmax_mismatch)};
}

Outcome protomaml_equivalence() {
  Rng rng(303);
  double worst = 0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n_classes = 2 + rng.index(5);
    const std::size_t d = 1 + rng.index(16);
    metalearn::Prototypes protos{random_matrix(n_classes, d, rng)};
    const auto head = metalearn::protomaml_head_init(protos);
    for (int i = 0; i < 100; ++i) {
      const ag::RowVector x = random_matrix(1, d, rng);
      std::vector<double> logits(n_classes);
      for (std::size_t c = 0; c < n_classes; ++c) logits[c] = x.dot(head.weight.row(c)) + head.bias(c);
      const double hi = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double& l : logits) z += l = std::exp(l - hi);
      const auto ref = eq2_oracle(scalar_distances(x, protos.vectors, true));
      for (std::size_t c = 0; c < n_classes; ++c) worst = std::max(worst, std::abs(logits[c] / z - ref[c]));
    }
  }
  return {worst < 1e-6, "max abs diff " + fmt(worst)};
}

fusion::Model small_model(const pt::SyntheticCorpus& c, fusion::FusionKind kind, std::size_t d, std::size_t len) {
  encoder::EncoderConfig cfg;
  cfg.d_model = d;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_len = len;
  cfg.dropout = 0.0;
  cfg.seed = 5;
  fusion::FusionStrategy fs;
  fs.kind = kind;
  auto domains = c.train_ptrs();
  domains.push_back(&c.test);
  return fusion::Model::create(cfg, fs, fusion::build_model_vocab(domains, 2000));
}

pt::SyntheticCorpus small_corpus() {
  pt::SyntheticOptions o;
  o.train_examples_per_class = 40;
  o.test_examples_per_class = 40;
  return pt::make_synthetic(o);
}

Outcome fo_protomaml_reduction() {
  const auto c = small_corpus();
  auto model = small_model(c, fusion::FusionKind::none, 12, 16);
  metalearn::EpisodeSampler sampler(c.train_ptrs(), {2, 4, 6}, 404);
  metalearn::MetaConfig cfg;
  cfg.inner_steps = 0;
  cfg.distance = metalearn::Distance::squared_euclidean;
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto ep = sampler.next();
    const double ref = metalearn::proto_episode_loss(ep, model, cfg.distance).loss.item();
    model.params.zero_grad();
    const auto step = metalearn::fo_protomaml_step(ep, model, cfg);
    worst = std::max(worst, std::abs(step.loss - ref));
  }
  return {worst < 1e-6, "max abs loss diff " + fmt(worst)};
}

Outcome mldg_scalar() {
  const double theta = metalearn::mldg_update(
      1.0, [](double x) { return 2 * x; }, [](double x) { return 2 * (x - 1); }, 0.1, 1.0, 0.1);
  // theta' = 1 - 0.1 * 2 = 0.8; theta_new = 1 - 0.1 * (2 + 2 * (0.8 - 1)).
  const double closed_form = 1.0 - 0.1 * (2.0 + 2.0 * ((1.0 - 0.1 * 2.0) - 1.0));
  return {std::abs(theta - 0.84) < 1e-10 && std::abs(theta - closed_form) < 1e-12, "theta_new " + fmt(theta, 12)};
}

Outcome gradient_checks() {
  std::ostringstream detail;
  bool pass = true;
  auto record = [&](const std::string& name, const pt::GradCheckResult& r) {
    pass = pass && r.checked >= 100 && r.max_rel_error < 1e-3;
    detail << name << " " << r.checked << " coords rel " << fmt(r.max_rel_error, 3) << "; ";
  };

  {
    encoder::EncoderConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.max_len = 10;
    cfg.dropout = 0.0;
    const auto vocab = encoder::Vocab::build({"the cat sat on the mat", "hate speech is bad"}, 100);
    ag::ParamStore params;
    Rng rng(9);
    encoder::init_encoder_params(params, cfg, vocab.size(), rng);
    const std::vector<encoder::TokenSequence> seqs{encoder::tokenize("the cat sat on the mat", vocab, 10),
                                                   encoder::tokenize("hate speech", vocab, 10)};
    record("encoder", pt::grad_check(
                          params,
                          [&](const ag::ParamStore& p) {
                            return ag::sum(encoder::cls_rows(encoder::encode_batch(p, cfg, seqs)));
                          },
                          120, 17));
  }

  const auto c = small_corpus();
  {
    auto model = small_model(c, fusion::FusionKind::full, 8, 12);
    Rng rng(4);
    const auto ep = metalearn::make_episode(c.train[1], 2, rng);
    model.prepare_domain(ep.manifest);
    record("episode loss", pt::grad_check(
                               model.params,
                               [&](const ag::ParamStore& p) {
                                 fusion::Model view{model.encoder, model.fusion, model.vocab, p};
                                 return metalearn::proto_episode_loss(ep, view, metalearn::Distance::euclidean).loss;
                               },
                               120, 8));
  }

  for (auto variant : {fusion::JointVariant::literal, fusion::JointVariant::standard}) {
    auto model = small_model(c, fusion::FusionKind::joint, 12, 12);
    model.fusion.variant = variant;
    const auto& d = c.train[0];
    model.prepare_domain(d.manifest());
    const std::vector<corpus::Example> ex(d.examples().begin(), d.examples().begin() + 4);
    const std::vector<std::optional<std::size_t>> gold{ex[0].label_index, std::nullopt, ex[2].label_index,
                                                       std::nullopt};
    record("joint " + fusion::to_string(variant),
           pt::grad_check(
               model.params,
               [&](const ag::ParamStore& p) {
                 fusion::Model view{model.encoder, model.fusion, model.vocab, p};
                 return ag::sum(ag::tanh(fusion::represent(view, d.manifest(), ex, gold)));
               },
               120, 21, "joint."));
  }
  std::string text = detail.str();
  text.resize(text.size() - 2);
  return {pass, text};
}

Outcome macro_f1_oracle() {
  Rng rng(707);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_classes = 1 + rng.index(6);
    const std::size_t n = 1 + rng.index(50);
    std::vector<std::size_t> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.index(n_classes);
      gold[i] = rng.uniform() < 0.5 ? pred[i] : rng.index(n_classes);
    }
    // Exact fraction sum_c 2TP / (2TP + FP + FN), divided by n_classes.
    long long num = 0, den = 1;
    for (std::size_t c = 0; c < n_classes; ++c) {
      long long tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += pred[i] == c && gold[i] == c;
        fp += pred[i] == c && gold[i] != c;
        fn += pred[i] != c && gold[i] == c;
      }
      if (tp == 0) continue;
      const long long a = 2 * tp, b = 2 * tp + fp + fn;
      num = num * b + a * den;
      den *= b;
      const long long g = std::gcd(num, den);
      num /= g;
      den /= g;
    }
    den *= static_cast<long long>(n_classes);
    const double got = evaluate::macro_f1(pred, gold, n_classes);
    if (std::abs(got - static_cast<double>(num) / static_cast<double>(den)) > 1e-12 || got < 0 || got > 1) {
      ++mismatches;
    }
  }
  const std::vector<std::size_t> gold{0, 1, 1, 1}, pred{0, 0, 1, 1};
  const double worked = evaluate::macro_f1(pred, gold, 2);
  return {mismatches == 0 && std::abs(worked - 0.7333333333) < 1e-6,
          "oracle mismatches " + std::to_string(mismatches) + ", worked example " + fmt(worked, 6)};
}

Outcome episode_invariants() {
  const auto c = small_corpus();
  metalearn::EpisodeSampler sampler(c.train_ptrs(), {2, 4, 8, 16}, 808);
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto ep = sampler.next();
    std::set<std::uint64_t> support;
    std::vector<std::size_t> sc(ep.n_way), qc(ep.n_way);
    for (const auto& e : ep.support) {
      support.insert(e.uid);
      if (e.label_index < ep.n_way) ++sc[e.label_index];
      violations += e.domain_id != ep.domain_id();
    }
    violations += support.size() != ep.support.size();
    for (const auto& e : ep.query) {
      violations += support.count(e.uid);
      if (e.label_index < ep.n_way) ++qc[e.label_index];
      violations += e.domain_id != ep.domain_id();
    }
    for (std::size_t k = 0; k < ep.n_way; ++k) violations += (sc[k] != ep.k_shot) + (qc[k] != ep.k_shot);
    violations += ep.support.size() + ep.query.size() != 2 * ep.n_way * ep.k_shot;
  }
  return {violations == 0, "violations " + std::to_string(violations)};
}

Outcome preprocessing_goldens() {
  std::size_t failures = 0;
  const std::vector<std::pair<std::string, std::string>> goldens{
      {"Check http://a.b NOW", "check <url> now"},
      {"@john hi", "<user> hi"},
      {"b b b ", "b"},
      {"#HateSpeech2020", "hate speech 2020"},
      {"see www.x.org and https://y.z/q", "see <url> and <url>"},
      {"", ""}};
  for (const auto& [raw, want] : goldens) failures += corpus::preprocess_text(raw) != want;
  Rng rng(909);
  std::size_t not_idempotent = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto once = corpus::preprocess_text(pt::random_raw_text(rng));
    not_idempotent += corpus::preprocess_text(once) != once;
  }
  return {failures == 0 && not_idempotent == 0,
          "golden failures " + std::to_string(failures) + ", non-idempotent " + std::to_string(not_idempotent)};
}

// Synthetic transfer experiment.

struct TransferSetup {
  encoder::EncoderConfig encoder;
  metalearn::MetaConfig meta;
  metalearn::FinetuneOptions finetune;
};

TransferSetup transfer_setup() {
  TransferSetup s;
  s.encoder.d_model = 48;
  s.encoder.n_layers = 2;
  s.encoder.n_heads = 4;
  s.encoder.max_len = 24;
  s.encoder.dropout = 0.0;
  s.encoder.seed = 1;
  s.meta.meta_epochs = 10;
  s.meta.tasks_per_epoch = 100;
  s.meta.k_choices = {4, 8};
  s.meta.rates = ag::ComponentRates{1e-3, 1e-3, 1e-3};
  s.meta.seed = 3;
  s.finetune.epochs = 3;
  s.finetune.rates = {1e-3, 1e-3, 1e-3};
  return s;
}

std::vector<double> mean_f1_by_k(const evaluate::Recipe& recipe, const fusion::Model& base,
                                 const corpus::Dataset& test, const std::vector<std::size_t>& ks,
                                 const metalearn::FinetuneOptions& ft) {
  evaluate::ProtocolSpec spec{test};
  spec.k_values = ks;
  spec.recipe = recipe.name;
  const auto report = evaluate::run_protocol(spec, evaluate::finetune_cell(recipe, base, ft));
  std::vector<double> means;
  for (const auto& row : report.summary) means.push_back(row.mean.value_or(std::nan("")));
  return means;
}

double average(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

Outcome synthetic_transfer() {
  const auto setup = transfer_setup();
  const std::vector<std::uint64_t> generator_seeds{7, 8, 9};
  const std::vector<std::size_t> trend_ks{16, 32, 64, 128};
  const auto& protonet = evaluate::find_recipe("protonet");
  const auto& je_protonet = evaluate::find_recipe("je_protonet");
  const auto& untrained = evaluate::find_recipe("untrained");
  const auto& je_cls = evaluate::find_recipe("je_protonet_cls");
  evaluate::Recipe random_proto = protonet;
  random_proto.name = "random_prototype";
  metalearn::FinetuneOptions no_training = setup.finetune;
  no_training.epochs = 0;

  std::vector<double> proto16, random16, literal16, standard16;
  std::vector<std::vector<double>> untrained_trend(trend_ks.size()), cls_trend(trend_ks.size());
  std::ostringstream log;
  for (auto gen_seed : generator_seeds) {
    pt::SyntheticOptions so;
    so.seed = gen_seed;
    const auto c = pt::make_synthetic(so);
    auto domains = c.train_ptrs();
    domains.push_back(&c.test);
    const auto vocab = fusion::build_model_vocab(domains, 5000);

    auto meta_trained = [&](fusion::FusionKind kind, fusion::JointVariant variant) {
      fusion::FusionStrategy fs;
      fs.kind = kind;
      fs.variant = variant;
      auto state = metalearn::LearnerState::fresh(fusion::Model::create(setup.encoder, fs, vocab), setup.meta);
      metalearn::meta_train(metalearn::Algorithm::protonet, c.train_ptrs(), state);
      return state.model;
    };
    const auto fresh = fusion::Model::create(setup.encoder, {}, vocab);
    const auto none = meta_trained(fusion::FusionKind::none, fusion::JointVariant::literal);
    const auto literal = meta_trained(fusion::FusionKind::joint, fusion::JointVariant::literal);
    const auto standard = meta_trained(fusion::FusionKind::joint, fusion::JointVariant::standard);

    proto16.push_back(mean_f1_by_k(protonet, none, c.test, {16}, setup.finetune)[0]);
    random16.push_back(mean_f1_by_k(random_proto, fresh, c.test, {16}, no_training)[0]);
    literal16.push_back(mean_f1_by_k(je_protonet, literal, c.test, {16}, setup.finetune)[0]);
    standard16.push_back(mean_f1_by_k(je_protonet, standard, c.test, {16}, setup.finetune)[0]);
    const auto u = mean_f1_by_k(untrained, fresh, c.test, trend_ks, setup.finetune);
    const auto f = mean_f1_by_k(je_cls, literal, c.test, trend_ks, setup.finetune);
    for (std::size_t i = 0; i < trend_ks.size(); ++i) {
      untrained_trend[i].push_back(u[i]);
      cls_trend[i].push_back(f[i]);
    }
    log << "    generator seed " << gen_seed << ": protonet " << fmt(proto16.back()) << ", random prototypes "
        << fmt(random16.back()) << ", je literal " << fmt(literal16.back()) << ", je standard "
        << fmt(standard16.back()) << "\n";
  }

  const double p = average(proto16), r = average(random16);
  const double lit = average(literal16), std_ = average(standard16);
  const bool a = p >= 0.85 && r <= 0.60;

  auto monotone = [&](const std::vector<std::vector<double>>& trend, std::string& shown) {
    std::vector<double> means;
    for (const auto& v : trend) means.push_back(average(v));
    std::size_t inversions = 0;
    bool small = true;
    for (std::size_t i = 1; i < means.size(); ++i) {
      if (means[i] < means[i - 1]) {
        ++inversions;
        small = small && means[i - 1] - means[i] <= 0.02;
      }
    }
    for (std::size_t i = 0; i < means.size(); ++i) shown += (i ? " " : "") + fmt(means[i]);
    return inversions == 0 || (inversions == 1 && small);
  };
  std::string u_shown, f_shown;
  const bool b_untrained = monotone(untrained_trend, u_shown);
  const bool b_cls = monotone(cls_trend, f_shown);
  const bool b = b_untrained && b_cls;
  const double best_je = std::max(lit, std_);
  const bool cc = best_je - p >= 0.05;

  std::ostringstream detail;
  detail << "(a) " << (a ? "pass" : "FAIL") << " protonet K=16 " << fmt(p) << " (>= 0.85), random prototypes "
         << fmt(r) << " (<= 0.60); (b) " << (b ? "pass" : "FAIL") << " untrained K=16..128 [" << u_shown
         << "], je_protonet_cls [" << f_shown << "]; (c) " << (cc ? "pass" : "FAIL") << " je literal " << fmt(lit)
         << ", je standard " << fmt(std_) << " vs none " << fmt(p) << " (needs +0.05)\n"
         << log.str();
  std::string text = detail.str();
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return {a && b && cc, text};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

Outcome evaluate_determinism() {
  pt::TempDir dir("acceptance_cli");
  pt::SyntheticOptions so;
  so.train_domains = 2;
  so.train_examples_per_class = 20;
  so.test_examples_per_class = 330;
  const auto c = pt::make_synthetic(so);
  const std::string cli = PROTOFUSE_CLI;
  const std::string quiet = " >/dev/null 2>&1";
  std::string domains;
  for (const auto* d : c.train_ptrs()) {
    const auto [m, r] = pt::write_domain_files(*d, dir / "raw");
    if (run_command(cli + " --out " + (dir / "data").string() + " ingest --manifest " + m.string() +
                    " --records " + r.string() + quiet) != 0) {
      return {false, "ingest failed"};
    }
    domains += (domains.empty() ? "" : ",") + (dir / "data" / (d->domain_id() + ".json")).string();
  }
  const auto [m, r] = pt::write_domain_files(c.test, dir / "raw");
  if (run_command(cli + " --out " + (dir / "data").string() + " ingest --manifest " + m.string() + " --records " +
                  r.string() + quiet) != 0) {
    return {false, "ingest failed"};
  }
  const std::string test = (dir / "data" / (c.test.domain_id() + ".json")).string();
  const std::string args = " --seed 11 evaluate --recipe protonet --test " + test + " --domains " + domains +
                           " --encoder.d-model 16 --encoder.layers 1 --encoder.heads 2 --encoder.max-len 16"
                           " --epochs 1 --tasks 10 --k-choices 4 --ft.epochs 1";
  std::vector<std::string> reports;
  for (const char* run : {"run_a", "run_b"}) {
    if (run_command(cli + " --out " + (dir / run).string() + args + quiet) != 0) return {false, "evaluate failed"};
    reports.push_back(slurp(dir / run / (c.test.domain_id() + "_protonet.json")));
  }
  const auto cells = nlohmann::json::parse(reports[0]).at("cells").size();
  return {!reports[0].empty() && reports[0] == reports[1] && cells == 25,
          std::to_string(reports[0].size()) + " bytes, " + std::to_string(cells) + " cells, " +
              (reports[0] == reports[1] ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"prototype mean oracle", prototype_oracle},
      {"prototype softmax oracle", classify_oracle},
      {"protomaml head equivalence", protomaml_equivalence},
      {"first-order protomaml reduction", fo_protomaml_reduction},
      {"mldg scalar oracle", mldg_scalar},
      {"gradient checks", gradient_checks},
      {"macro-f1 oracle", macro_f1_oracle},
      {"episode sampler invariants", episode_invariants},
      {"preprocessing goldens and idempotence", preprocessing_goldens},
      {"synthetic transfer experiment", synthetic_transfer},
      {"evaluate determinism", evaluate_determinism}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << "criterion " << std::setw(2) << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << " (" << fmt(secs, 3) << " s): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

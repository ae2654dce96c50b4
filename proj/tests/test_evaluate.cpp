#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "protofuse/evaluate/metrics.hpp"
#include "protofuse/evaluate/protocol.hpp"
#include "protofuse/evaluate/recipes.hpp"
#include "protofuse/evaluate/report.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace protofuse;
using namespace protofuse::evaluate;
namespace pt = protofuse::testing;

namespace {

// Exact rational oracle: per-class F1 = 2TP / (2TP + FP + FN) (0 when the
// denominator is 0), summed and averaged as an exact fraction.
struct Fraction {
  long long num = 0;
  long long den = 1;
  Fraction operator+(const Fraction& o) const {
    Fraction r{num * o.den + o.num * den, den * o.den};
    const long long g = std::gcd(r.num, r.den);
    return {r.num / g, r.den / g};
  }
};

Fraction macro_f1_oracle(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                         std::size_t n_classes) {
  Fraction sum;
  for (std::size_t c = 0; c < n_classes; ++c) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && gold[i] == c) ++tp;
      if (pred[i] == c && gold[i] != c) ++fp;
      if (pred[i] != c && gold[i] == c) ++fn;
    }
    if (tp > 0) sum = sum + Fraction{2 * tp, 2 * tp + fp + fn};
  }
  return Fraction{0, 1} + Fraction{sum.num, sum.den * static_cast<long long>(n_classes)};
}

corpus::Dataset balanced_domain(std::size_t n_classes, std::size_t per_class, const std::string& id = "dom") {
  corpus::DomainManifest m;
  m.domain_id = id;
  for (std::size_t c = 0; c < n_classes; ++c) m.labels.push_back({"c" + std::to_string(c), ""});
  std::vector<corpus::Example> ex;
  std::uint64_t uid = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) ex.push_back({"t" + std::to_string(uid), c, id, uid++, {}});
  }
  return corpus::Dataset(m, ex);
}

std::vector<std::size_t> golds_of(const corpus::Dataset& d) {
  std::vector<std::size_t> g;
  for (const auto& e : d.examples()) g.push_back(e.label_index);
  return g;
}

ProtocolSpec spec_for(const corpus::Dataset& d) {
  ProtocolSpec s{d};
  s.holdout_seed = 4;
  s.recipe = "dummy";
  return s;
}

}  // namespace

TEST(MacroF1, WorkedExamples) {
  const std::vector<std::size_t> gold{0, 1, 1, 1}, pred{0, 0, 1, 1};
  EXPECT_NEAR(macro_f1(pred, gold, 2), 0.7333333, 1e-6);
  EXPECT_DOUBLE_EQ(macro_f1(gold, gold, 2), 1.0);
  const std::vector<std::size_t> g2{0, 1}, swapped{1, 0};
  EXPECT_DOUBLE_EQ(macro_f1(swapped, g2, 2), 0.0);
  const std::vector<std::size_t> g3{0, 0, 1, 1}, constant{0, 0, 0, 0};
  EXPECT_NEAR(macro_f1(constant, g3, 2), 1.0 / 3.0, 1e-6);
  // An absent class still counts in the mean.
  EXPECT_DOUBLE_EQ(macro_f1(gold, gold, 4), 0.5);
}

TEST(MacroF1, Errors) {
  const std::vector<std::size_t> a{0, 1}, b{0}, bad{0, 5};
  EXPECT_THROW(macro_f1(a, b, 2), std::invalid_argument);
  EXPECT_THROW(macro_f1(bad, a, 2), std::invalid_argument);
}

TEST(MacroF1, MatchesRationalOracle) {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_classes = 1 + rng.index(6);
    const std::size_t n = 1 + rng.index(50);
    std::vector<std::size_t> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.index(n_classes);
      gold[i] = rng.uniform() < 0.5 ? pred[i] : rng.index(n_classes);
    }
    const Fraction f = macro_f1_oracle(pred, gold, n_classes);
    const double got = macro_f1(pred, gold, n_classes);
    ASSERT_GE(got, 0.0);
    ASSERT_LE(got, 1.0);
    ASSERT_NEAR(got, static_cast<double>(f.num) / static_cast<double>(f.den), 1e-12) << trial;

    std::vector<std::size_t> perm(n_classes);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::size_t> pp(n), pg(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = perm[pred[i]];
      pg[i] = perm[gold[i]];
    }
    ASSERT_NEAR(macro_f1(pp, pg, n_classes), got, 1e-12);
  }
}

TEST(MeanStd, Population) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto ms = population_mean_std(v);
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_DOUBLE_EQ(ms.std, std::sqrt(1.25));
  const std::vector<double> one{0.7};
  EXPECT_DOUBLE_EQ(population_mean_std(one).std, 0.0);
}

TEST(Protocol, CellAccountingAndDisjointness) {
  const auto d = balanced_domain(2, 400);
  const auto spec = spec_for(d);
  std::mutex mu;
  std::set<std::pair<std::size_t, std::uint64_t>> seen;
  std::set<std::uint64_t> holdout_uids;
  const CellFn fn = [&](const CellContext& c) {
    std::lock_guard lock(mu);
    seen.insert({c.k, c.seed});
    EXPECT_EQ(c.kshot.size(), 2 * c.k);
    EXPECT_EQ(c.kshot.class_counts(), (std::vector<std::size_t>{c.k, c.k}));
    EXPECT_EQ(c.holdout.size(), 160u);
    EXPECT_EQ(c.train.size(), 640u);
    std::set<std::uint64_t> h;
    for (const auto& e : c.holdout.examples()) h.insert(e.uid);
    if (holdout_uids.empty()) holdout_uids = h;
    EXPECT_EQ(h, holdout_uids);
    for (const auto& e : c.kshot.examples()) EXPECT_EQ(h.count(e.uid), 0u);
    return golds_of(c.holdout);
  };
  const auto report = run_protocol(spec, fn);
  EXPECT_EQ(seen.size(), 25u);
  ASSERT_EQ(report.cells.size(), 25u);
  EXPECT_EQ(report.cells[0].k, 16u);
  EXPECT_EQ(report.cells[4].seed, 5u);
  EXPECT_EQ(report.cells[5].k, 32u);
  ASSERT_EQ(report.summary.size(), 5u);
  for (const auto& row : report.summary) {
    EXPECT_EQ(row.n, 5u);
    EXPECT_DOUBLE_EQ(*row.mean, 1.0);
    EXPECT_DOUBLE_EQ(*row.std, 0.0);
  }
}

TEST(Protocol, ConstantDummyScoresOneThird) {
  const auto d = balanced_domain(2, 400);
  const auto report = run_protocol(spec_for(d), [](const CellContext& c) {
    return std::vector<std::size_t>(c.holdout.size(), 0);
  });
  for (const auto& cell : report.cells) EXPECT_NEAR(*cell.f1, 1.0 / 3.0, 1e-6);
}

TEST(Protocol, FailedCellsStayMissing) {
  const auto d = balanced_domain(2, 400);
  const auto report = run_protocol(spec_for(d), [](const CellContext& c) {
    if (c.k == 32 && c.seed == 2) throw std::runtime_error("boom");
    return golds_of(c.holdout);
  });
  const auto& bad = report.cells[6];
  EXPECT_EQ(bad.k, 32u);
  EXPECT_EQ(bad.seed, 2u);
  EXPECT_FALSE(bad.f1.has_value());
  EXPECT_NE(bad.error.find("boom"), std::string::npos);
  EXPECT_EQ(report.summary[1].n, 4u);

  const auto csv = report_csv(report);
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 26u);
  EXPECT_EQ(lines[0], "k,seed,macro_f1");
  EXPECT_EQ(lines[7], "32,2,");
  const auto j = report_json(report);
  EXPECT_TRUE(j["cells"][6]["f1"].is_null());
  EXPECT_TRUE(j["cells"][6]["missing"].get<bool>());
}

TEST(Protocol, DeterministicAcrossJobs) {
  const auto d = balanced_domain(3, 400);
  const CellFn fn = [](const CellContext& c) {
    std::vector<std::size_t> p;
    for (std::size_t i = 0; i < c.holdout.size(); ++i) {
      p.push_back((c.kshot.examples()[i % c.kshot.size()].uid + c.seed) % 3);
    }
    return p;
  };
  const auto a = report_json(run_protocol(spec_for(d), fn, 1)).dump();
  const auto b = report_json(run_protocol(spec_for(d), fn, 1)).dump();
  const auto c = report_json(run_protocol(spec_for(d), fn, 3)).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Protocol, SpecValidation) {
  auto s = spec_for(balanced_domain(2, 10));
  s.k_values = {32, 16};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.k_values = {};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.k_values = {2};
  s.seeds = {1, 1};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Protocol, SelectCandidatePicksBestEarliest) {
  const auto d = balanced_domain(2, 200);
  std::vector<std::size_t> calls;
  const auto sel = select_candidate(4, d, 16, 3,
                                    [&](std::size_t i, const corpus::Dataset& kshot, const corpus::Dataset& val) {
                                      calls.push_back(i);
                                      EXPECT_EQ(kshot.size(), 32u);
                                      EXPECT_EQ(val.size(), 128u);
                                      std::set<std::uint64_t> k;
                                      for (const auto& e : kshot.examples()) k.insert(e.uid);
                                      for (const auto& e : val.examples()) EXPECT_EQ(k.count(e.uid), 0u);
                                      if (i == 0) return std::vector<std::size_t>(val.size(), 0);
                                      return golds_of(val);
                                    });
  EXPECT_EQ(calls, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(sel.index, 1u);
  EXPECT_EQ(sel.scores.size(), 4u);
  const std::vector<std::string> names{"a", "b"};
  const auto& best = select_hyperparams(names, d, 16, 3,
                                        [](const std::string& n, const corpus::Dataset&, const corpus::Dataset& val) {
                                          return n == "b" ? golds_of(val) : std::vector<std::size_t>(val.size(), 1);
                                        });
  EXPECT_EQ(best, "b");
}

TEST(Report, FilesAndRoundTrip) {
  const auto d = balanced_domain(2, 400, "synth");
  auto spec = spec_for(d);
  spec.config = {{"lr", 0.001}};
  auto report = run_protocol(spec, [](const CellContext& c) { return golds_of(c.holdout); });
  report.config = spec.config;
  pt::TempDir dir("report");
  const auto files = emit_report(report, dir / "nested");
  EXPECT_EQ(files.json.filename(), "synth_dummy.json");
  EXPECT_EQ(files.csv.filename(), "synth_dummy.csv");
  EXPECT_EQ(files.plot.filename(), "synth_dummy.svg");
  std::ifstream csv(files.csv);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 26u);
  std::ifstream svg(files.plot);
  const std::string svg_text((std::istreambuf_iterator<char>(svg)), {});
  EXPECT_NE(svg_text.find("<svg"), std::string::npos);

  const auto j = report_json(report);
  EXPECT_EQ(j.at("config_hash"), config_hash(report.config));
  EXPECT_EQ(config_hash(report.config).size(), 16u);
  EXPECT_NE(config_hash(report.config), config_hash({{"lr", 0.002}}));
  EXPECT_EQ(report_json(report_from_json(j)).dump(), j.dump());

  EvaluationReport empty;
  empty.recipe = "x";
  empty.domain_id = "y";
  EXPECT_THROW(emit_report(empty, dir.path()), std::invalid_argument);
}

TEST(Recipes, NamesAndDefaults) {
  EXPECT_THROW(find_recipe("bert"), std::invalid_argument);
  std::set<std::string> names;
  for (const auto& r : recipes()) names.insert(r.name);
  for (const char* n : {"protonet", "je_protonet", "je_protonet_cls", "protomaml", "mldg", "untrained", "retrained",
                        "binary", "je_protonet_untrained", "protonet_token", "protonet_label", "protonet_full"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
  EXPECT_EQ(find_recipe("je_protonet").fusion, fusion::FusionKind::joint);
  EXPECT_EQ(find_recipe("je_protonet_cls").head, metalearn::HeadKind::feed_forward);
  EXPECT_TRUE(find_recipe("retrained").mlm);
  EXPECT_TRUE(find_recipe("binary").binary);
  EXPECT_FALSE(find_recipe("untrained").meta.has_value());
}

TEST(Recipes, EndToEndOnSyntheticCorpus) {
  pt::SyntheticOptions so;
  so.train_examples_per_class = 30;
  so.test_examples_per_class = 40;
  const auto c = pt::make_synthetic(so);
  EvaluateRequest req;
  req.recipe = &find_recipe("protonet");
  req.config = recipe_defaults(*req.recipe);
  req.config.encoder.d_model = 12;
  req.config.encoder.n_layers = 1;
  req.config.encoder.n_heads = 2;
  req.config.encoder.max_len = 16;
  req.config.meta.meta_epochs = 1;
  req.config.meta.tasks_per_epoch = 4;
  req.config.meta.k_choices = {4};
  req.config.finetune.epochs = 1;
  req.train_domains = c.train_ptrs();
  req.test_domain = c.test;
  req.k_values = {4, 8};
  req.seeds = {1, 2};
  const auto a = evaluate_recipe(req);
  ASSERT_EQ(a.cells.size(), 4u);
  for (const auto& cell : a.cells) {
    ASSERT_TRUE(cell.f1.has_value()) << cell.error;
    EXPECT_GE(*cell.f1, 0.0);
  }
  EXPECT_EQ(a.recipe, "protonet");
  EXPECT_EQ(a.domain_id, c.test.manifest().domain_id);
  req.jobs = 2;
  EXPECT_EQ(report_json(evaluate_recipe(req)).dump(), report_json(a).dump());
}

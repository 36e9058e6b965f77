#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "malcall/dataset.hpp"
#include "malcall/metrics.hpp"
#include "malcall/models.hpp"
#include "malcall/synthgen.hpp"
#include "support.hpp"

using namespace malcall;

namespace {

Dataset matrix(std::size_t cols, const std::vector<std::vector<double>>& rows, const std::vector<int>& y) {
  Dataset d;
  d.cols = cols;
  for (std::size_t i = 0; i < rows.size(); ++i) d.add(rows[i], y[i] != 0, PhoneId::from_words(0, i));
  return d;
}

Dataset random_dataset(std::size_t n, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.cols = cols;
  std::vector<double> v(cols);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      v[c] = rng.normal();
      z += (c % 2 ? -1.0 : 1.0) * v[c];
    }
    d.add(v, rng.bernoulli(sigmoid(2.0 * z)), PhoneId::from_words(0, i));
  }
  return d;
}

const Dataset& generated() {
  static const Dataset d = [] {
    const auto g = generate_log(test::tiny_config(77));
    return build_dataset(extract_all(g.log, g.labels), FeatureSelector::all(), Sampling::balanced(1));
  }();
  return d;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Logistic, GradientMatchesFiniteDifference) {
  const auto d = random_dataset(60, 5, 1);
  const MatrixView x{d.x.data(), d.rows(), d.cols};
  Rng rng(2);
  std::vector<double> theta(6), grad(6);
  for (int probe = 0; probe < 20; ++probe) {
    for (auto& t : theta) t = rng.normal();
    logistic_objective(theta, x, d.y, 0.01, grad);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double h = 1e-6;
      auto tp = theta, tm = theta;
      tp[k] += h;
      tm[k] -= h;
      const double fd = (logistic_objective(tp, x, d.y, 0.01) - logistic_objective(tm, x, d.y, 0.01)) / (2 * h);
      ASSERT_LT(rel_err(grad[k], fd), 1e-5) << "probe " << probe << " param " << k;
    }
  }
}

TEST(Logistic, LearnsLinearSignal) {
  const auto d = random_dataset(400, 4, 3);
  const auto m = train_logistic(d);
  std::vector<double> s;
  for (std::size_t i = 0; i < d.rows(); ++i) s.push_back(m.margin(d.row(i)));
  EXPECT_GT(auc_score(s, d.y), 0.85);
  EXPECT_GT(m.w[0], 0.0);
  EXPECT_LT(m.w[1], 0.0);
}

TEST(Logistic, NeedsBothClasses) {
  const auto d = matrix(1, {{0}, {1}}, {1, 1});
  EXPECT_THROW(train_logistic(d), ContractError);
}

TEST(Svm, ImprovesOnZeroVector) {
  const auto d = random_dataset(300, 4, 4);
  SvmConfig cfg;
  cfg.standardize = false;
  const auto m = train_linear_svm(d, cfg);
  const MatrixView x{d.x.data(), d.rows(), d.cols};
  std::vector<double> theta(m.w), zero(d.cols + 1, 0.0);
  theta.push_back(m.b);
  EXPECT_LT(svm_objective(theta, x, d.y, cfg.l2), svm_objective(zero, x, d.y, cfg.l2));
}

TEST(Mlp, GradientMatchesFiniteDifference) {
  const auto d = random_dataset(40, 4, 5);
  const MatrixView x{d.x.data(), d.rows(), d.cols};
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(6);
  for (int probe = 0; probe < 20; ++probe) {
    auto p = init_mlp(d.cols, 6, rng);
    for (auto& t : p.theta) t += 0.1 * rng.normal();  // nonzero biases too
    std::vector<double> grad(p.theta.size());
    mlp_objective(p, x, d.y, rows, 0.01, grad);
    const std::size_t k = rng.below(p.theta.size());
    const double h = 1e-6;
    auto pp = p, pm = p;
    pp.theta[k] += h;
    pm.theta[k] -= h;
    const double fd = (mlp_objective(pp, x, d.y, rows, 0.01) - mlp_objective(pm, x, d.y, rows, 0.01)) / (2 * h);
    ASSERT_LT(rel_err(grad[k], fd), 1e-4) << "probe " << probe << " param " << k;
  }
}

TEST(Mlp, ProbabilitiesSumToOneAndSeedMatters) {
  const auto d = random_dataset(200, 3, 7);
  MlpConfig cfg;
  cfg.epochs = 10;
  const auto a = train_mlp(d, cfg);
  const auto b = train_mlp(d, cfg);
  cfg.seed = 1;
  const auto c = train_mlp(d, cfg);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_NE(a.to_json(), c.to_json());
  for (std::size_t i = 0; i < 20; ++i) {
    const auto p = a.probabilities(d.row(i));
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    EXPECT_EQ(a.score(d.row(i)), p[1]);
  }
}

// Four points, one split: g = p - y with p = 0.5, h = 1/4.
TEST(Gbt, HandComputedFirstTree) {
  const auto d = matrix(1, {{0}, {1}, {2}, {3}}, {0, 0, 1, 1});
  GbtConfig cfg;
  cfg.rounds = 1;
  cfg.max_depth = 1;
  cfg.eta = 1.0;
  cfg.lambda = 1.0;
  const auto m = train_gbt(d, cfg);
  ASSERT_EQ(m.trees.size(), 1u);
  const auto& t = m.trees[0];
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(t.nodes[0].threshold, 1.5);
  EXPECT_EQ(m.base, 0.0);
  // leaf = -G / (H + lambda) = -(1) / (0.5 + 1)
  EXPECT_NEAR(t.predict(d.row(0)), -2.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.predict(d.row(3)), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.score(d.row(3)), sigmoid(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(m.train_loss[0], std::log(2.0), 1e-12);
  EXPECT_NEAR(m.train_loss[1], softplus(-2.0 / 3.0), 1e-12);
}

TEST(Gbt, BaseIsPriorLogOddsAndLossFalls) {
  const auto& d = generated();
  GbtConfig cfg;
  cfg.rounds = 20;
  const auto m = train_gbt(d, cfg);
  const double prior = static_cast<double>(d.positives()) / static_cast<double>(d.rows());
  EXPECT_NEAR(m.base, std::log(prior / (1 - prior)), 1e-12);
  ASSERT_EQ(m.train_loss.size(), 21u);
  for (std::size_t r = 1; r < m.train_loss.size(); ++r) EXPECT_LE(m.train_loss[r], m.train_loss[r - 1] + 1e-12);
}

TEST(Tree, TiesBreakToLowestFeature) {
  // Columns 0 and 1 are identical; both split the labels perfectly.
  const auto d = matrix(2, {{0, 0}, {1, 1}, {2, 2}, {3, 3}}, {0, 0, 1, 1});
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 1;
  cfg.bootstrap = false;
  cfg.max_features = 2;
  const auto f = train_random_forest(d, cfg);
  EXPECT_EQ(f.trees[0].nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(f.trees[0].nodes[0].threshold, 1.5);
  EXPECT_EQ(f.trees[0].predict(d.row(0)), 0.0);
  EXPECT_EQ(f.trees[0].predict(d.row(3)), 1.0);
}

TEST(Tree, PureNodeIsNotSplit) {
  const auto d = matrix(1, {{0}, {1}, {2}}, {1, 1, 1});
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  const auto f = train_random_forest(d, cfg);
  EXPECT_EQ(f.trees[0].nodes.size(), 1u);
  EXPECT_EQ(f.trees[0].depth(), 0);
}

TEST(Forest, ScoreIsMeanOfTrees) {
  const auto& d = generated();
  ForestConfig cfg;
  cfg.n_trees = 15;
  cfg.seed = 4;
  const auto f = train_random_forest(d, cfg);
  ASSERT_EQ(f.trees.size(), 15u);
  for (std::size_t i = 0; i < d.rows(); i += 7) {
    const auto ts = f.tree_scores(d.row(i));
    const double mean = std::accumulate(ts.begin(), ts.end(), 0.0) / 15.0;
    ASSERT_NEAR(f.score(d.row(i)), mean, 1e-12);
    ASSERT_GE(f.score(d.row(i)), 0.0);
    ASSERT_LE(f.score(d.row(i)), 1.0);
  }
  for (const auto& t : f.trees) EXPECT_LE(t.depth(), 3);
  cfg.seed = 5;
  EXPECT_NE(train_random_forest(d, cfg).to_json(), f.to_json());
}

TEST(Model, SerializationRoundTrip) {
  const auto& d = generated();
  for (const char* kind : {"logistic", "svm", "mlp", "forest", "gbt"}) {
    auto cfg = model_config_from_json(kind);
    cfg.mlp.epochs = 3;
    cfg.forest.n_trees = 5;
    cfg.gbt.rounds = 5;
    const auto m = train_model(d, cfg, 9);
    const auto bytes = serialize_model(m);
    const auto back = deserialize_model(bytes);
    EXPECT_EQ(serialize_model(back), bytes) << kind;
    EXPECT_EQ(back.fingerprint(), m.fingerprint());
    for (std::size_t i = 0; i < d.rows(); i += 11) ASSERT_EQ(back.score(d.row(i)), m.score(d.row(i))) << kind;
  }
}

TEST(Model, RejectsDamagedPayloads) {
  const auto& d = generated();
  const auto m = train_model(d, model_config_from_json("logistic"));
  const auto bytes = serialize_model(m);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() / 2)), CorruptPayload);
  auto j = nlohmann::json::parse(bytes);
  j["version"] = 2;
  EXPECT_THROW(deserialize_model(j.dump()), VersionMismatch);
  j = nlohmann::json::parse(bytes);
  j["schema_fingerprint"] = 12345;
  EXPECT_THROW(deserialize_model(j.dump()), CorruptPayload);
  j = nlohmann::json::parse(bytes);
  j["params"]["w"].erase(0);
  EXPECT_THROW(deserialize_model(j.dump()), CorruptPayload);
}

TEST(Model, ScoringChecksSchema) {
  const auto& d = generated();
  const auto m = train_model(d, model_config_from_json("logistic"));
  RawFeatures raw;
  EXPECT_NO_THROW(m.predict_score(encode(raw, d.schema)));
  EXPECT_THROW(m.predict_score(encode(raw, FeatureSelector::basic())), SchemaMismatch);
  std::vector<double> short_row(3);
  EXPECT_THROW(m.score(short_row), SchemaMismatch);
}

TEST(Model, UsageHistogramCountsSplits) {
  const auto& d = generated();
  auto cfg = model_config_from_json("forest");
  cfg.forest.n_trees = 20;
  const auto m = train_model(d, cfg, 3);
  const auto u = feature_usage_histogram(m);
  EXPECT_EQ(u.sum(), m.ensemble().internal_count());
  std::size_t by_level = 0;
  for (const auto& lv : u.level)
    for (const auto& [c, n] : lv) by_level += n;
  EXPECT_EQ(by_level, u.sum());
  const auto agg = aggregate_by_feature(u.total, *m.schema());
  const auto rank = rank_features(agg);
  EXPECT_EQ(rank.size(), kNumFeatures);
  auto count = [&](Feature f) {
    auto it = agg.find(static_cast<int>(index_of(f)));
    return it == agg.end() ? std::size_t{0} : it->second;
  };
  for (std::size_t i = 1; i < rank.size(); ++i) EXPECT_GE(count(rank[i - 1]), count(rank[i]));
  EXPECT_THROW(feature_usage_histogram(train_model(d, model_config_from_json("svm"))), ContractError);
  EXPECT_NE(dump_tree(m, 0).find("leaf"), std::string::npos);
}

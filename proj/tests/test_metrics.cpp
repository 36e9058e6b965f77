#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "malcall/metrics.hpp"
#include "malcall/rng.hpp"

using namespace malcall;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      den += 1;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return num / den;
}

}  // namespace

TEST(Auc, MatchesPairwiseCountWithTies) {
  Rng rng(1);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    const double levels = 1 + static_cast<double>(rng.below(10));
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * levels);
      y[i] = rng.bernoulli(0.4);
    }
    y[0] = 1;
    y[1] = 0;
    ASSERT_EQ(auc_score(s, y), pairwise_auc(s, y));
  }
}

TEST(Auc, Extremes) {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_EQ(auc_score(std::vector<double>{1, 2, 3, 4}, y), 1.0);
  EXPECT_EQ(auc_score(std::vector<double>{4, 3, 2, 1}, y), 0.0);
  EXPECT_EQ(auc_score(std::vector<double>{7, 7, 7, 7}, y), 0.5);
  EXPECT_THROW(auc_score(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), ContractError);
  EXPECT_THROW(auc_score(std::vector<double>{NAN, 2}, std::vector<std::uint8_t>{0, 1}), ContractError);
}

TEST(Auc, CurveRunsFromOriginToOne) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.4};
  const std::vector<std::uint8_t> y{0, 0, 1, 1, 1};
  const auto r = roc_auc(s, y);
  EXPECT_EQ(r.curve.front().fpr, 0.0);
  EXPECT_EQ(r.curve.front().tpr, 0.0);
  EXPECT_EQ(r.curve.back().fpr, 1.0);
  EXPECT_EQ(r.curve.back().tpr, 1.0);
  for (std::size_t i = 1; i < r.curve.size(); ++i) {
    EXPECT_GE(r.curve[i].fpr, r.curve[i - 1].fpr);
    EXPECT_GE(r.curve[i].tpr, r.curve[i - 1].tpr);
    EXPECT_LT(r.curve[i].threshold, r.curve[i - 1].threshold);
  }
}

TEST(Threshold, RequiredPasses) {
  EXPECT_EQ(required_passes(100, 0.99), 99u);
  EXPECT_EQ(required_passes(3, 0.5), 2u);
  EXPECT_EQ(required_passes(10, 1.0), 10u);
  EXPECT_EQ(required_passes(10, 1e-9), 1u);
  for (std::size_t n = 1; n < 300; n += 7)
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.99, 0.999}) {
      const auto k = required_passes(n, p);
      ASSERT_GE(static_cast<double>(k) / static_cast<double>(n), p);
      if (k > 0) ASSERT_LT(static_cast<double>(k - 1) / static_cast<double>(n), p);
    }
}

TEST(Threshold, Examples) {
  const std::vector<double> b{1, 2, 3, 4};
  EXPECT_EQ(tau_of_p(b, 0.5), 3.0);
  EXPECT_EQ(pass_rate(b, 3.0), 0.5);
  EXPECT_EQ(tau_of_p(b, 0.75), 4.0);
  EXPECT_EQ(tau_of_p(b, 1.0), kInf);
  // Small p: at least one benign score must pass, so the threshold is the
  // second-smallest distinct score.
  EXPECT_EQ(tau_of_p(b, 1e-9), 2.0);
  const std::vector<double> ties{1, 1, 1, 2};
  EXPECT_EQ(tau_of_p(ties, 0.5), 2.0);
  EXPECT_EQ(pass_rate(ties, 2.0), 0.75);
  EXPECT_THROW(tau_of_p(b, 0.0), ContractError);
  EXPECT_THROW(tau_of_p({}, 0.5), ContractError);
}

TEST(Threshold, IsMinimalAmongCandidates) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> s(1 + rng.below(60));
    for (auto& v : s) v = std::floor(rng.uniform() * 12);
    const double p = 0.05 + 0.95 * rng.uniform();
    const double tau = tau_of_p(s, p);
    ASSERT_GE(pass_rate(s, tau), p);
    for (double c : s)
      if (c < tau) ASSERT_LT(pass_rate(s, c), p);
  }
}

TEST(EarlyDetection, FirstPositive) {
  const std::vector<double> always{0.9, 0.9, 0.9};
  const std::vector<double> never{0.1, 0.1, 0.1};
  const std::vector<double> third{0.1, 0.2, 0.6, 0.1};
  EXPECT_EQ(fp_at(always, 0.5, 10), 1);
  EXPECT_EQ(fp_at(never, 0.5, 10), 11);
  EXPECT_EQ(fp_at(third, 0.5, 10), 3);
  EXPECT_EQ(fp_at(third, 0.5, 2), 3);
  EXPECT_EQ(fp_at(third, 0.6, 10), 3);  // score equal to tau fires
  EXPECT_THROW(fp_at(std::vector<double>{}, 0.5, 10), ContractError);
  EXPECT_THROW(fp_at(always, 0.5, 0), ContractError);
}

TEST(EarlyDetection, LazyScoringStopsAtFirstFire) {
  const std::vector<int> inputs{0, 0, 1, 1, 1};
  int calls = 0;
  auto score = [&](int v) {
    ++calls;
    return static_cast<double>(v);
  };
  EXPECT_EQ(fp_at(std::span<const int>(inputs), score, 0.5, 30), 3);
  EXPECT_EQ(calls, 3);
  calls = 0;
  EXPECT_EQ(fp_at(std::span<const int>(inputs), score, 0.5, 2), 3);
  EXPECT_EQ(calls, 2);
}

TEST(EarlyDetection, AfpMrAndReduction) {
  const std::vector<std::vector<double>> nums{{0.9}, {0.1, 0.9}, {0.1, 0.1, 0.1}};
  EXPECT_DOUBLE_EQ(afp(nums, 0.5, 10), (1.0 + 2.0 + 11.0) / 3.0);
  EXPECT_DOUBLE_EQ(mr_at(nums, 0.5, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(mr_at(nums, 0.5, 2), 2.0 / 3.0);
  const std::vector<std::vector<double>> silent{{0.0}, {0.0, 0.0}};
  for (int M : {1, 10, 30}) {
    EXPECT_DOUBLE_EQ(afp(silent, 0.5, M), M + 1.0);
    EXPECT_DOUBLE_EQ(reduction_rate(M + 1.0, M), 0.0);
    EXPECT_DOUBLE_EQ(reduction_rate(1.0, M), 1.0);
  }
  EXPECT_NEAR(reduction_rate(3.90, 30), 0.9033, 5e-5);
  EXPECT_THROW(reduction_rate(0.5, 10), ContractError);
  EXPECT_THROW(reduction_rate(12.0, 10), ContractError);
}

TEST(EarlyDetection, MrIsMonotoneInN) {
  Rng rng(3);
  std::vector<std::vector<double>> nums(40);
  for (auto& n : nums) {
    n.resize(1 + rng.below(40));
    for (auto& v : n) v = rng.uniform();
  }
  double prev = 0;
  for (int n = 1; n <= 30; ++n) {
    const double m = mr_at(nums, 0.9, n);
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(Report, AverageAndJson) {
  EvalReport a, b;
  a.auc = 0.9;
  b.auc = 0.7;
  a.tau = 0.5;
  b.tau = kInf;
  a.afp[10] = 2;
  b.afp[10] = 4;
  a.mr = {0.5};
  b.mr = {1.0};
  const std::vector<EvalReport> rs{a, b};
  const auto m = average_reports(rs);
  EXPECT_DOUBLE_EQ(m.auc, 0.8);
  EXPECT_DOUBLE_EQ(m.afp.at(10), 3.0);
  EXPECT_DOUBLE_EQ(m.mr[0], 0.75);
  EXPECT_TRUE(std::isinf(m.tau));
  EXPECT_EQ(to_json(m)["tau"], "inf");
  EXPECT_EQ(to_json(m)["afp"]["10"], 3.0);
}

TEST(Report, EvalConfigValidation) {
  EXPECT_NO_THROW(eval_config_from_json({{"M", {5}}, {"p", 0.9}}));
  EXPECT_THROW(eval_config_from_json({{"M", {0}}}), ConfigError);
  EXPECT_THROW(eval_config_from_json({{"p", 1.5}}), ConfigError);
  EXPECT_THROW(eval_config_from_json({{"calibration_fraction", 1.0}}), ConfigError);
}

#pragma once

// ROC/AUC and the early-detection metrics: tau(p), FP@(M,p), AFP, MR@(n,p)
// and the unblocked-call reduction rate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/error.hpp"

namespace malcall {

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // predict positive iff score >= threshold; +inf for the (0,0) point
};

struct RocResult {
  std::vector<RocPoint> curve;
  double auc;
};

namespace detail {

inline void count_classes(std::span<const std::uint8_t> labels, std::uint64_t& pos, std::uint64_t& neg) {
  pos = static_cast<std::uint64_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  neg = labels.size() - pos;
}

}  // namespace detail

// Mann-Whitney statistic with ties counted 1/2, computed in integers as
// 2U / (2PN) so it agrees exactly with a pairwise count.
inline RocResult roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: scores and labels differ in length");
  std::uint64_t P, N;
  detail::count_classes(labels, P, N);
  if (P == 0 || N == 0) throw ContractError("roc_auc: need at least one example of each class");
  for (double s : scores)
    if (std::isnan(s)) throw ContractError("roc_auc: NaN score");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::uint64_t tp = 0, fp = 0, twice_u = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double s = scores[idx[k]];
    std::uint64_t gp = 0, gn = 0;
    while (k < idx.size() && scores[idx[k]] == s) {
      (labels[idx[k]] ? gp : gn) += 1;
      ++k;
    }
    // Positives in this group beat every negative not yet seen (lower scores)
    // and tie with the group's negatives.
    twice_u += gp * (2 * (N - fp - gn) + gn);
    tp += gp;
    fp += gn;
    r.curve.push_back({static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P), s});
  }
  r.auc = static_cast<double>(twice_u) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
  return r;
}

inline double auc_score(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  return roc_auc(scores, labels).auc;
}

inline void write_roc_csv(std::ostream& out, const RocResult& r) {
  out << "fpr,tpr,threshold\n";
  out.precision(17);
  for (const auto& p : r.curve) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isinf(p.threshold)) out << "inf";
    else out << p.threshold;
    out << '\n';
  }
}

// Smallest k with k/N >= p.
inline std::size_t required_passes(std::size_t n, double p) {
  const double nd = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(p * nd));
  while (k > 0 && static_cast<double>(k - 1) / nd >= p) --k;
  while (k < n && static_cast<double>(k) / nd < p) ++k;
  return k;
}

// Minimal threshold among the distinct benign scores and +inf such that the
// fraction of benign scores strictly below it is at least p.
inline double tau_of_p(std::span<const double> benign_scores, double p) {
  if (benign_scores.empty()) throw ContractError("tau_of_p: no benign scores");
  if (!(p > 0.0 && p <= 1.0)) throw ContractError("tau_of_p: p must lie in (0, 1]");
  std::vector<double> s(benign_scores.begin(), benign_scores.end());
  std::sort(s.begin(), s.end());
  const std::size_t need = required_passes(s.size(), p);
  // For the distinct value starting at position i, exactly i scores lie below it.
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0 && s[i] == s[i - 1]) continue;
    if (i >= need) return s[i];
  }
  return std::numeric_limits<double>::infinity();
}

// Fraction of benign scores that pass (score < tau).
inline double pass_rate(std::span<const double> benign_scores, double tau) {
  const auto n = std::count_if(benign_scores.begin(), benign_scores.end(), [&](double s) { return s < tau; });
  return static_cast<double>(n) / static_cast<double>(benign_scores.size());
}

// First 1-based index whose score fires (>= tau), capped at M+1.
inline int fp_at(std::span<const double> scores, double tau, int M) {
  if (scores.empty()) throw ContractError("fp_at: empty record list");
  if (M < 1) throw ContractError("fp_at: M must be >= 1");
  const std::size_t limit = std::min(scores.size(), static_cast<std::size_t>(M));
  for (std::size_t i = 0; i < limit; ++i)
    if (scores[i] >= tau) return static_cast<int>(i) + 1;
  return M + 1;
}

// Same, scoring inputs lazily with `score` and stopping at the first firing.
template <class Input, class Scorer>
int fp_at(std::span<const Input> inputs, const Scorer& score, double tau, int M) {
  if (inputs.empty()) throw ContractError("fp_at: empty record list");
  if (M < 1) throw ContractError("fp_at: M must be >= 1");
  const std::size_t limit = std::min(inputs.size(), static_cast<std::size_t>(M));
  for (std::size_t i = 0; i < limit; ++i)
    if (score(inputs[i]) >= tau) return static_cast<int>(i) + 1;
  return M + 1;
}

inline double afp(std::span<const std::vector<double>> numbers, double tau, int M) {
  if (numbers.empty()) throw ContractError("afp: no malicious numbers");
  double s = 0.0;
  for (const auto& n : numbers) s += fp_at(n, tau, M);
  return s / static_cast<double>(numbers.size());
}

inline double mr_at(std::span<const std::vector<double>> numbers, double tau, int n) {
  if (numbers.empty()) throw ContractError("mr_at: no malicious numbers");
  if (n < 1) throw ContractError("mr_at: n must be >= 1");
  std::size_t hit = 0;
  for (const auto& x : numbers)
    if (fp_at(x, tau, n) <= n) ++hit;
  return static_cast<double>(hit) / static_cast<double>(numbers.size());
}

inline double reduction_rate(double afp_value, int M) {
  if (M < 1) throw ContractError("reduction_rate: M must be >= 1");
  constexpr double slack = 1e-12;
  if (!(afp_value >= 1.0 - slack && afp_value <= M + 1.0 + slack))
    throw ContractError("reduction_rate: afp " + std::to_string(afp_value) + " outside [1, " + std::to_string(M + 1) + "]");
  return 1.0 - (afp_value - 1.0) / static_cast<double>(M);
}

struct EvalConfig {
  std::vector<int> M{10, 20, 30};
  double p = 0.99;
  int mr_max_n = 30;
  double calibration_fraction = 0.2;

  void validate() const {
    if (M.empty()) throw ConfigError("eval: M list is empty");
    for (int m : M)
      if (m < 1) throw ConfigError("eval: every M must be >= 1");
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("eval: p must lie in (0, 1]");
    if (mr_max_n < 1) throw ConfigError("eval: mr_max_n must be >= 1");
    if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
      throw ConfigError("eval: calibration_fraction must lie in (0, 1)");
  }
};

inline nlohmann::json to_json(const EvalConfig& c) {
  return {{"M", c.M}, {"p", c.p}, {"mr_max_n", c.mr_max_n}, {"calibration_fraction", c.calibration_fraction}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
  EvalConfig c;
  try {
    c.M = j.value("M", c.M);
    c.p = j.value("p", c.p);
    c.mr_max_n = j.value("mr_max_n", c.mr_max_n);
    c.calibration_fraction = j.value("calibration_fraction", c.calibration_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  c.validate();
  return c;
}

struct EvalReport {
  double auc = 0.0;
  double tau = 0.0;
  double calibration_pass_rate = 0.0;
  double eval_pass_rate = 0.0;
  std::map<int, double> afp;        // per M
  std::map<int, double> reduction;  // per M
  std::map<int, double> baseline_afp;
  std::vector<double> mr;  // mr[n-1] for n = 1..mr_max_n
  std::size_t malicious_numbers = 0;
  std::size_t malicious_records = 0;
  std::size_t benign_eval_records = 0;
  std::size_t benign_calibration_records = 0;
};

// JSON cannot carry infinity; an infinite tau is written as the string "inf".
inline nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json afp = nlohmann::json::object(), red = nlohmann::json::object(), base = nlohmann::json::object();
  for (const auto& [m, v] : r.afp) afp[std::to_string(m)] = v;
  for (const auto& [m, v] : r.reduction) red[std::to_string(m)] = v;
  for (const auto& [m, v] : r.baseline_afp) base[std::to_string(m)] = v;
  return {{"auc", r.auc},
          {"tau", threshold_json(r.tau)},
          {"calibration_pass_rate", r.calibration_pass_rate},
          {"eval_pass_rate", r.eval_pass_rate},
          {"afp", afp},
          {"reduction", red},
          {"baseline_afp", base},
          {"mr", r.mr},
          {"counts",
           {{"malicious_numbers", r.malicious_numbers},
            {"malicious_records", r.malicious_records},
            {"benign_eval_records", r.benign_eval_records},
            {"benign_calibration_records", r.benign_calibration_records}}}};
}

// Field-wise arithmetic mean of reports (tau and counts included).
inline EvalReport average_reports(std::span<const EvalReport> rs) {
  if (rs.empty()) throw ContractError("average_reports: nothing to average");
  EvalReport a;
  const double n = static_cast<double>(rs.size());
  a.mr.assign(rs.front().mr.size(), 0.0);
  bool inf_tau = false;
  for (const auto& r : rs) {
    a.auc += r.auc / n;
    if (std::isinf(r.tau)) inf_tau = true;
    else a.tau += r.tau / n;
    a.calibration_pass_rate += r.calibration_pass_rate / n;
    a.eval_pass_rate += r.eval_pass_rate / n;
    for (const auto& [m, v] : r.afp) a.afp[m] += v / n;
    for (const auto& [m, v] : r.reduction) a.reduction[m] += v / n;
    for (const auto& [m, v] : r.baseline_afp) a.baseline_afp[m] += v / n;
    for (std::size_t k = 0; k < a.mr.size() && k < r.mr.size(); ++k) a.mr[k] += r.mr[k] / n;
    a.malicious_numbers += r.malicious_numbers;
    a.malicious_records += r.malicious_records;
    a.benign_eval_records += r.benign_eval_records;
    a.benign_calibration_records += r.benign_calibration_records;
  }
  if (inf_tau) a.tau = std::numeric_limits<double>::infinity();
  const auto k = rs.size();
  a.malicious_numbers /= k;
  a.malicious_records /= k;
  a.benign_eval_records /= k;
  a.benign_calibration_records /= k;
  return a;
}

}  // namespace malcall

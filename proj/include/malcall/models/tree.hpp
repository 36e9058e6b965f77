#pragma once

// Depth-limited decision trees grown level by level with exact greedy splits,
// combined into a random forest (mean of leaf fractions) or gradient-boosted
// trees (sigmoid of summed leaf values).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/models/common.hpp"
#include "malcall/rng.hpp"

namespace malcall {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  // Index of the leaf reached by x. Goes left iff x[feature] < threshold.
  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t n = 0;
    while (!nodes[n].is_leaf())
      n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] < nodes[n].threshold ? nodes[n].left
                                                                                                    : nodes[n].right);
    return n;
  }

  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

  std::size_t internal_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& t) { return !t.is_leaf(); }));
  }
  std::size_t leaf_count() const { return nodes.size() - internal_count(); }

  // Level of every node; the root is level 1.
  std::vector<int> levels() const {
    std::vector<int> lv(nodes.size(), 0);
    if (nodes.empty()) return lv;
    lv[0] = 1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].is_leaf()) continue;
      lv[static_cast<std::size_t>(nodes[i].left)] = lv[i] + 1;
      lv[static_cast<std::size_t>(nodes[i].right)] = lv[i] + 1;
    }
    return lv;
  }

  // Number of internal nodes on the longest root-to-leaf path.
  int depth() const {
    int d = 0;
    const auto lv = levels();
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].is_leaf()) d = std::max(d, lv[i] - 1);
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : nodes) arr.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return arr;
  }

  static Tree from_json(const nlohmann::json& j, std::size_t cols) {
    Tree t;
    for (const auto& e : j) {
      if (!e.is_array() || e.size() != 5) throw CorruptPayload("tree node must be a 5-element array");
      TreeNode n{e[0].get<int>(), e[1].get<double>(), e[2].get<int>(), e[3].get<int>(), e[4].get<double>()};
      t.nodes.push_back(n);
    }
    if (t.nodes.empty()) throw CorruptPayload("tree has no nodes");
    const int count = static_cast<int>(t.nodes.size());
    for (int i = 0; i < count; ++i) {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) continue;
      if (n.feature >= static_cast<int>(cols) || n.left <= i || n.right <= i || n.left >= count || n.right >= count ||
          !std::isfinite(n.threshold))
        throw CorruptPayload("tree node " + std::to_string(i) + " is malformed");
    }
    return t;
  }
};

// Column-wise row orderings, computed once per dataset and shared by all trees.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  explicit SortedColumns(const Dataset& d) : order(d.cols) {
    for (std::size_t c = 0; c < d.cols; ++c) {
      auto& o = order[c];
      o.resize(d.rows());
      std::iota(o.begin(), o.end(), 0u);
      std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
        return d.x[a * d.cols + c] < d.x[b * d.cols + c];
      });
    }
  }
};

// Additive per-row split statistics. Gini: (weight, positive weight).
// Newton: (gradient, hessian).
struct SplitStats {
  double a = 0.0;
  double b = 0.0;
  SplitStats& operator+=(const SplitStats& o) {
    a += o.a;
    b += o.b;
    return *this;
  }
  SplitStats operator-(const SplitStats& o) const { return {a - o.a, b - o.b}; }
};

struct GiniCriterion {
  static double impurity(const SplitStats& s) { return s.a > 0.0 ? 2.0 * s.b * (s.a - s.b) / s.a : 0.0; }
  bool valid(const SplitStats& l, const SplitStats& r) const { return l.a > 0.0 && r.a > 0.0; }
  double gain(const SplitStats& p, const SplitStats& l, const SplitStats& r) const {
    return impurity(p) - impurity(l) - impurity(r);
  }
  double leaf(const SplitStats& s) const { return s.a > 0.0 ? s.b / s.a : 0.0; }
};

struct NewtonCriterion {
  double lambda = 1.0;
  double eta = 0.1;
  double min_child_weight = 1e-6;

  double score(const SplitStats& s) const { return s.a * s.a / (s.b + lambda); }
  bool valid(const SplitStats& l, const SplitStats& r) const {
    return l.b >= min_child_weight && r.b >= min_child_weight;
  }
  double gain(const SplitStats& p, const SplitStats& l, const SplitStats& r) const {
    return 0.5 * (score(l) + score(r) - score(p));
  }
  double leaf(const SplitStats& s) const { return eta * (-s.a / (s.b + lambda)); }
};

// Returns the candidate columns for a new node; empty picker means all columns.
using CandidatePicker = std::function<std::vector<std::uint32_t>()>;

namespace detail {

template <class Criterion>
Tree grow_tree(const Dataset& d, const SortedColumns& sc, std::span<const SplitStats> stats,
               std::span<const std::uint8_t> included, const Criterion& crit, int max_depth,
               const CandidatePicker& pick, double min_gain = 1e-12) {
  const std::size_t n = d.rows(), cols = d.cols;
  Tree t;
  std::vector<int> slot_of_row(n, -1);  // frontier slot of each included row
  SplitStats root;
  for (std::size_t i = 0; i < n; ++i)
    if (included[i]) {
      root += stats[i];
      slot_of_row[i] = 0;
    }
  t.nodes.push_back({});
  std::vector<int> frontier{0};
  std::vector<SplitStats> totals{root};

  struct Best {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
  };

  for (int depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
    const std::size_t slots = frontier.size();
    std::vector<std::vector<char>> cand(slots, std::vector<char>(cols, pick ? 0 : 1));
    std::vector<char> col_used(cols, pick ? 0 : 1);
    if (pick)
      for (std::size_t s = 0; s < slots; ++s)
        for (auto c : pick()) {
          cand[s][c] = 1;
          col_used[c] = 1;
        }
    std::vector<Best> best(slots);
    std::vector<SplitStats> left(slots);
    std::vector<double> prev(slots);
    std::vector<char> has_prev(slots);
    for (std::size_t c = 0; c < cols; ++c) {
      if (!col_used[c]) continue;
      std::fill(left.begin(), left.end(), SplitStats{});
      std::fill(has_prev.begin(), has_prev.end(), 0);
      for (auto i : sc.order[c]) {
        const int s = slot_of_row[i];
        if (s < 0 || !cand[static_cast<std::size_t>(s)][c]) continue;
        const auto su = static_cast<std::size_t>(s);
        const double v = d.x[i * cols + c];
        if (has_prev[su] && v > prev[su]) {
          const SplitStats right = totals[su] - left[su];
          if (crit.valid(left[su], right)) {
            const double g = crit.gain(totals[su], left[su], right);
            if (g > best[su].gain) {
              double thr = 0.5 * (prev[su] + v);
              if (!(thr > prev[su])) thr = v;
              best[su] = {g, static_cast<int>(c), thr};
            }
          }
        }
        left[su] += stats[i];
        prev[su] = v;
        has_prev[su] = 1;
      }
    }

    // Materialize the chosen splits; the next frontier keeps left-before-right order.
    std::vector<int> next_frontier;
    std::vector<SplitStats> next_totals;
    std::vector<int> left_slot(slots, -1);
    for (std::size_t s = 0; s < slots; ++s) {
      auto& node = t.nodes[static_cast<std::size_t>(frontier[s])];
      if (best[s].feature < 0 || !(best[s].gain > min_gain)) {
        node.value = crit.leaf(totals[s]);
        continue;
      }
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.left = static_cast<int>(t.nodes.size());
      node.right = node.left + 1;
      t.nodes.push_back({});
      t.nodes.push_back({});
      left_slot[s] = static_cast<int>(next_frontier.size());
      next_frontier.push_back(node.left);
      next_frontier.push_back(node.right);
      next_totals.push_back({});
      next_totals.push_back({});
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int s = slot_of_row[i];
      if (s < 0) continue;
      const int ls = left_slot[static_cast<std::size_t>(s)];
      if (ls < 0) {
        slot_of_row[i] = -1;
        continue;
      }
      const auto& node = t.nodes[static_cast<std::size_t>(frontier[static_cast<std::size_t>(s)])];
      const int ns = d.x[i * cols + static_cast<std::size_t>(node.feature)] < node.threshold ? ls : ls + 1;
      slot_of_row[i] = ns;
      next_totals[static_cast<std::size_t>(ns)] += stats[i];
    }
    frontier.swap(next_frontier);
    totals.swap(next_totals);
  }
  for (std::size_t s = 0; s < frontier.size(); ++s)
    t.nodes[static_cast<std::size_t>(frontier[s])].value = crit.leaf(totals[s]);
  return t;
}

}  // namespace detail

enum class Combine : std::uint8_t { mean, sigmoid_sum };

struct TreeEnsemble {
  Combine combine = Combine::mean;
  double base = 0.0;  // added to the sum before the sigmoid
  std::vector<Tree> trees;
  std::vector<double> train_loss;  // gbt: mean log-loss after round r (index 0 = before any round)

  double raw_sum(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s;
  }

  double score(std::span<const double> x) const {
    if (combine == Combine::sigmoid_sum) return sigmoid(base + raw_sum(x));
    return trees.empty() ? 0.0 : raw_sum(x) / static_cast<double>(trees.size());
  }

  std::vector<double> tree_scores(std::span<const double> x) const {
    std::vector<double> out;
    out.reserve(trees.size());
    for (const auto& t : trees) out.push_back(t.predict(x));
    return out;
  }

  std::size_t internal_count() const {
    std::size_t s = 0;
    for (const auto& t : trees) s += t.internal_count();
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : trees) ts.push_back(t.to_json());
    return {{"combine", combine == Combine::mean ? "mean" : "sigmoid_sum"},
            {"base", base},
            {"trees", ts},
            {"train_loss", train_loss}};
  }

  static TreeEnsemble from_json(const nlohmann::json& j, std::size_t cols) {
    TreeEnsemble e;
    const auto c = j.at("combine").get<std::string>();
    if (c == "mean") e.combine = Combine::mean;
    else if (c == "sigmoid_sum") e.combine = Combine::sigmoid_sum;
    else throw CorruptPayload("unknown tree combination '" + c + "'");
    e.base = j.at("base").get<double>();
    for (const auto& t : j.at("trees")) e.trees.push_back(Tree::from_json(t, cols));
    e.train_loss = j.value("train_loss", std::vector<double>{});
    return e;
  }
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 3;
  int max_features = 0;  // candidates per split; 0 means floor(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

inline TreeEnsemble train_random_forest(const Dataset& data, const ForestConfig& cfg = {}) {
  if (data.rows() == 0) throw ContractError("train_random_forest: empty dataset");
  if (cfg.n_trees < 1 || cfg.max_depth < 0) throw ConfigError("train_random_forest: n_trees >= 1 and max_depth >= 0");
  const std::size_t n = data.rows(), d = data.cols;
  const SortedColumns sc(data);
  std::size_t k = cfg.max_features > 0 ? static_cast<std::size_t>(cfg.max_features)
                                       : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  k = std::clamp<std::size_t>(k, 1, std::max<std::size_t>(d, 1));
  TreeEnsemble forest;
  forest.combine = Combine::mean;
  std::vector<SplitStats> stats(n);
  std::vector<std::uint8_t> included(n);
  std::vector<std::uint32_t> all_cols(d);
  std::iota(all_cols.begin(), all_cols.end(), 0u);
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, 0x7200000ULL + static_cast<std::uint64_t>(t)));
    std::vector<double> w(n, cfg.bootstrap ? 0.0 : 1.0);
    if (cfg.bootstrap)
      for (std::size_t i = 0; i < n; ++i) w[rng.below(n)] += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      stats[i] = {w[i], data.y[i] ? w[i] : 0.0};
      included[i] = w[i] > 0.0;
    }
    CandidatePicker pick;
    if (k < d)
      pick = [&]() {
        auto cols = all_cols;
        for (std::size_t j = 0; j < k; ++j) std::swap(cols[j], cols[j + rng.below(d - j)]);
        cols.resize(k);
        return cols;
      };
    forest.trees.push_back(detail::grow_tree(data, sc, stats, included, GiniCriterion{}, cfg.max_depth, pick));
  }
  return forest;
}

struct GbtConfig {
  int rounds = 100;
  int max_depth = 3;
  double eta = 0.1;
  double lambda = 1.0;
  double min_child_weight = 1e-6;
};

inline double mean_log_loss(std::span<const double> margin, std::span<const std::uint8_t> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) s += softplus(margin[i]) - (y[i] ? margin[i] : 0.0);
  return s / static_cast<double>(margin.size());
}

inline TreeEnsemble train_gbt(const Dataset& data, const GbtConfig& cfg = {}) {
  require_both_classes(data, "train_gbt");
  if (cfg.rounds < 0 || cfg.max_depth < 0 || cfg.lambda < 0.0 || cfg.eta <= 0.0)
    throw ConfigError("train_gbt: rounds >= 0, max_depth >= 0, lambda >= 0, eta > 0");
  const std::size_t n = data.rows();
  const SortedColumns sc(data);
  const double prior = static_cast<double>(data.positives()) / static_cast<double>(n);
  TreeEnsemble gbt;
  gbt.combine = Combine::sigmoid_sum;
  gbt.base = std::log(prior / (1.0 - prior));
  std::vector<double> margin(n, gbt.base);
  std::vector<SplitStats> stats(n);
  const std::vector<std::uint8_t> included(n, 1);
  const NewtonCriterion crit{cfg.lambda, cfg.eta, cfg.min_child_weight};
  gbt.train_loss.push_back(mean_log_loss(margin, data.y));
  for (int r = 0; r < cfg.rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      stats[i] = {p - (data.y[i] ? 1.0 : 0.0), p * (1.0 - p)};
    }
    Tree t = detail::grow_tree(data, sc, stats, included, crit, cfg.max_depth, {});
    for (std::size_t i = 0; i < n; ++i) margin[i] += t.predict(data.row(i));
    gbt.trees.push_back(std::move(t));
    const double loss = mean_log_loss(margin, data.y);
    if (!std::isfinite(loss)) throw TrainingError("train_gbt: non-finite loss at round " + std::to_string(r));
    gbt.train_loss.push_back(loss);
  }
  return gbt;
}

// Plain-text rendering; `column_name` maps encoded column indices to names.
inline std::string dump_tree_text(const Tree& t, const std::function<std::string(std::size_t)>& column_name) {
  std::ostringstream out;
  out.precision(17);
  const auto lv = t.levels();
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    const auto& n = t.nodes[i];
    out << std::string(static_cast<std::size_t>(lv[i] - 1) * 2, ' ');
    if (n.is_leaf()) {
      out << "leaf " << n.value << '\n';
      return;
    }
    out << "node " << column_name(static_cast<std::size_t>(n.feature)) << " < " << n.threshold << '\n';
    walk(static_cast<std::size_t>(n.left));
    walk(static_cast<std::size_t>(n.right));
  };
  if (!t.nodes.empty()) walk(0);
  return out.str();
}

}  // namespace malcall

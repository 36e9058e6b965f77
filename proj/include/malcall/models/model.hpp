#pragma once

// Uniform wrapper over every model kind: training dispatch, fingerprint-checked
// scoring, serialization, tree dumps and split-usage histograms.

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "malcall/models/common.hpp"
#include "malcall/models/linear.hpp"
#include "malcall/models/mlp.hpp"
#include "malcall/models/tree.hpp"

namespace malcall {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormat = "malcall-model";

struct ModelConfig {
  ModelKind kind = ModelKind::gbt;
  LogisticConfig logistic;
  SvmConfig svm;
  MlpConfig mlp;
  ForestConfig forest;
  GbtConfig gbt;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)}};
  switch (c.kind) {
    case ModelKind::logistic:
      j["l2"] = c.logistic.l2;
      j["initial_step"] = c.logistic.initial_step;
      j["max_epochs"] = c.logistic.max_epochs;
      j["tolerance"] = c.logistic.tolerance;
      j["standardize"] = c.logistic.standardize;
      break;
    case ModelKind::svm:
      j["l2"] = c.svm.l2;
      j["learning_rate"] = c.svm.learning_rate;
      j["epochs"] = c.svm.epochs;
      j["standardize"] = c.svm.standardize;
      break;
    case ModelKind::mlp:
      j["hidden"] = c.mlp.hidden;
      j["epochs"] = c.mlp.epochs;
      j["batch_size"] = c.mlp.batch_size;
      j["learning_rate"] = c.mlp.learning_rate;
      j["l2"] = c.mlp.l2;
      j["standardize"] = c.mlp.standardize;
      break;
    case ModelKind::forest:
      j["n_trees"] = c.forest.n_trees;
      j["max_depth"] = c.forest.max_depth;
      j["max_features"] = c.forest.max_features;
      j["bootstrap"] = c.forest.bootstrap;
      break;
    case ModelKind::gbt:
      j["rounds"] = c.gbt.rounds;
      j["max_depth"] = c.gbt.max_depth;
      j["eta"] = c.gbt.eta;
      j["lambda"] = c.gbt.lambda;
      j["min_child_weight"] = c.gbt.min_child_weight;
      break;
  }
  return j;
}

// Accepts either a bare kind name or an object with "kind" plus overrides.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.is_string()) {
    c.kind = parse_model_kind(j.get<std::string>());
    return c;
  }
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("model config needs a 'kind'");
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  try {
    auto& l = c.logistic;
    l.l2 = j.value("l2", l.l2);
    l.initial_step = j.value("initial_step", l.initial_step);
    l.max_epochs = j.value("max_epochs", l.max_epochs);
    l.tolerance = j.value("tolerance", l.tolerance);
    l.standardize = j.value("standardize", l.standardize);
    auto& s = c.svm;
    s.l2 = j.value("l2", s.l2);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.epochs = j.value("epochs", s.epochs);
    s.standardize = j.value("standardize", s.standardize);
    auto& m = c.mlp;
    m.hidden = j.value("hidden", m.hidden);
    m.epochs = j.value("epochs", m.epochs);
    m.batch_size = j.value("batch_size", m.batch_size);
    m.learning_rate = j.value("learning_rate", m.learning_rate);
    m.l2 = j.value("l2", m.l2);
    m.standardize = j.value("standardize", m.standardize);
    auto& f = c.forest;
    f.n_trees = j.value("n_trees", f.n_trees);
    f.max_depth = j.value("max_depth", f.max_depth);
    f.max_features = j.value("max_features", f.max_features);
    f.bootstrap = j.value("bootstrap", f.bootstrap);
    auto& g = c.gbt;
    g.rounds = j.value("rounds", g.rounds);
    g.max_depth = j.value("max_depth", g.max_depth);
    g.eta = j.value("eta", g.eta);
    g.lambda = j.value("lambda", g.lambda);
    g.min_child_weight = j.value("min_child_weight", g.min_child_weight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

class TrainedModel {
public:
  using Params = std::variant<LinearModel, MlpModel, TreeEnsemble>;

  TrainedModel(ModelKind kind, std::shared_ptr<const Schema> schema, std::size_t cols, Params params)
      : kind_(kind), schema_(std::move(schema)), cols_(cols), params_(std::move(params)) {}

  ModelKind kind() const noexcept { return kind_; }
  std::size_t cols() const noexcept { return cols_; }
  const std::shared_ptr<const Schema>& schema() const noexcept { return schema_; }
  std::uint64_t fingerprint() const noexcept { return schema_ ? schema_->fingerprint() : 0; }
  std::string selector_name() const { return schema_ ? schema_->selector_name() : std::string(); }
  const Params& params() const noexcept { return params_; }

  const TreeEnsemble& ensemble() const {
    if (const auto* e = std::get_if<TreeEnsemble>(&params_)) return *e;
    throw ContractError(std::string("model kind '") + std::string(to_string(kind_)) + "' has no trees");
  }

  // Score of an already-encoded row; only the width is checked.
  double score(std::span<const double> x) const {
    if (x.size() != cols_)
      throw SchemaMismatch("input width " + std::to_string(x.size()) + " != model width " + std::to_string(cols_));
    return std::visit(
        [&](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, LinearModel>) {
            const double z = p.margin(x);
            return kind_ == ModelKind::logistic ? sigmoid(z) : z;
          } else {
            return p.score(x);
          }
        },
        params_);
  }

  double predict_score(const EncodedVector& v) const {
    if (!v.schema || v.schema->fingerprint() != fingerprint())
      throw SchemaMismatch("vector schema fingerprint does not match model '" + selector_name() + "'");
    return score(v.values);
  }

  std::vector<double> score_rows(const Dataset& d) const {
    if (d.schema && schema_ && d.schema->fingerprint() != fingerprint())
      throw SchemaMismatch("dataset schema '" + d.schema->selector_name() + "' does not match model '" +
                           selector_name() + "'");
    std::vector<double> out(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) out[i] = score(d.row(i));
    return out;
  }

private:
  ModelKind kind_;
  std::shared_ptr<const Schema> schema_;
  std::size_t cols_;
  Params params_;
};

inline TrainedModel train_model(const Dataset& data, const ModelConfig& cfg, std::uint64_t seed = 0) {
  switch (cfg.kind) {
    case ModelKind::logistic: return {cfg.kind, data.schema, data.cols, train_logistic(data, cfg.logistic)};
    case ModelKind::svm: return {cfg.kind, data.schema, data.cols, train_linear_svm(data, cfg.svm)};
    case ModelKind::mlp: {
      auto m = cfg.mlp;
      m.seed = seed;
      return {cfg.kind, data.schema, data.cols, train_mlp(data, m)};
    }
    case ModelKind::forest: {
      auto f = cfg.forest;
      f.seed = seed;
      return {cfg.kind, data.schema, data.cols, train_random_forest(data, f)};
    }
    case ModelKind::gbt: return {cfg.kind, data.schema, data.cols, train_gbt(data, cfg.gbt)};
  }
  throw ConfigError("unknown model kind");
}

inline double predict_score(const TrainedModel& m, const EncodedVector& v) { return m.predict_score(v); }

inline std::string serialize_model(const TrainedModel& m) {
  nlohmann::json params = std::visit([](const auto& p) { return p.to_json(); }, m.params());
  nlohmann::json j{{"format", kModelFormat},
                   {"version", kModelFormatVersion},
                   {"kind", to_string(m.kind())},
                   {"schema_fingerprint", m.fingerprint()},
                   {"selector", m.selector_name()},
                   {"cols", m.cols()},
                   {"params", std::move(params)}};
  return j.dump();
}

inline TrainedModel deserialize_model(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptPayload(std::string("model payload is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat) throw CorruptPayload("not a model payload");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw VersionMismatch("model format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kModelFormatVersion) + ")");
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    const auto cols = j.at("cols").get<std::size_t>();
    const auto fp = j.at("schema_fingerprint").get<std::uint64_t>();
    const auto sel = j.at("selector").get<std::string>();
    std::shared_ptr<const Schema> schema;
    if (!sel.empty()) {
      schema = std::make_shared<const Schema>(FeatureSelector::parse(sel));
      if (schema->fingerprint() != fp || schema->width() != cols)
        throw CorruptPayload("schema fingerprint does not match selector '" + sel + "'");
    }
    const auto& p = j.at("params");
    switch (kind) {
      case ModelKind::logistic:
      case ModelKind::svm: {
        auto lm = LinearModel::from_json(p);
        if (lm.w.size() != cols || lm.scaler.mean.size() != cols) throw CorruptPayload("linear model width mismatch");
        return {kind, schema, cols, std::move(lm)};
      }
      case ModelKind::mlp: {
        auto mm = MlpModel::from_json(p);
        if (mm.params.in != cols || mm.scaler.mean.size() != cols) throw CorruptPayload("mlp width mismatch");
        return {kind, schema, cols, std::move(mm)};
      }
      case ModelKind::forest:
      case ModelKind::gbt: return {kind, schema, cols, TreeEnsemble::from_json(p, cols)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptPayload(std::string("model payload: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptPayload(std::string("model payload: ") + e.what());
  }
  throw CorruptPayload("model payload: unknown kind");
}

inline std::string model_column_name(const TrainedModel& m, std::size_t col) {
  return m.schema() ? m.schema()->column_name(col) : "x" + std::to_string(col);
}

inline std::string dump_tree(const TrainedModel& m, std::size_t index) {
  const auto& e = m.ensemble();
  if (index >= e.trees.size())
    throw ContractError("tree index " + std::to_string(index) + " out of range (" + std::to_string(e.trees.size()) + ")");
  return dump_tree_text(e.trees[index], [&](std::size_t c) { return model_column_name(m, c); });
}

// Internal-node counts keyed by encoded column. level[k] holds level k+1
// (the root is level 1).
struct FeatureUsage {
  std::map<int, std::size_t> total;
  std::vector<std::map<int, std::size_t>> level;

  std::size_t sum() const {
    std::size_t s = 0;
    for (const auto& [k, v] : total) s += v;
    return s;
  }
};

inline FeatureUsage feature_usage_histogram(const TrainedModel& m, bool by_level = true) {
  if (!is_tree_kind(m.kind()))
    throw ContractError(std::string("feature usage needs a tree model, got '") + std::string(to_string(m.kind())) + "'");
  FeatureUsage u;
  for (const auto& t : m.ensemble().trees) {
    const auto lv = t.levels();
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.is_leaf()) continue;
      ++u.total[n.feature];
      if (!by_level) continue;
      const auto l = static_cast<std::size_t>(lv[i]);
      if (u.level.size() < l) u.level.resize(l);
      ++u.level[l - 1][n.feature];
    }
  }
  return u;
}

// Folds encoded-column counts onto feature ids (one-hot blocks collapse).
inline std::map<int, std::size_t> aggregate_by_feature(const std::map<int, std::size_t>& by_column, const Schema& schema) {
  std::map<int, std::size_t> out;
  for (const auto& [col, n] : by_column) out[schema.column_feature(static_cast<std::size_t>(col))] += n;
  return out;
}

// The 29 features ranked by usage (descending), ties by feature id.
inline std::vector<Feature> rank_features(const std::map<int, std::size_t>& by_feature) {
  std::vector<Feature> fs;
  for (std::size_t i = 0; i < kNumFeatures; ++i) fs.push_back(static_cast<Feature>(i));
  auto count = [&](Feature f) {
    auto it = by_feature.find(static_cast<int>(index_of(f)));
    return it == by_feature.end() ? std::size_t{0} : it->second;
  };
  std::stable_sort(fs.begin(), fs.end(), [&](Feature a, Feature b) { return count(a) > count(b); });
  return fs;
}

}  // namespace malcall

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/dataset.hpp"
#include "malcall/error.hpp"

namespace malcall {

enum class ModelKind : std::uint8_t { logistic, svm, mlp, forest, gbt };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::svm: return "svm";
    case ModelKind::mlp: return "mlp";
    case ModelKind::forest: return "forest";
    case ModelKind::gbt: return "gbt";
  }
  return "logistic";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::logistic, ModelKind::svm, ModelKind::mlp, ModelKind::forest, ModelKind::gbt})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

inline bool is_tree_kind(ModelKind k) { return k == ModelKind::forest || k == ModelKind::gbt; }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline void require_both_classes(const Dataset& d, const char* who) {
  const auto pos = d.positives();
  if (d.rows() == 0) throw ContractError(std::string(who) + ": empty dataset");
  if (pos == 0 || pos == d.rows())
    throw ContractError(std::string(who) + ": training data must contain both classes");
}

// Per-column affine standardization fitted on training rows.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static Standardizer fit(const Dataset& d) {
    Standardizer s;
    s.mean.assign(d.cols, 0.0);
    s.inv_std.assign(d.cols, 1.0);
    if (d.rows() == 0) return s;
    const double n = static_cast<double>(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const auto r = d.row(i);
      for (std::size_t c = 0; c < d.cols; ++c) s.mean[c] += r[c];
    }
    for (auto& m : s.mean) m /= n;
    std::vector<double> var(d.cols, 0.0);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const auto r = d.row(i);
      for (std::size_t c = 0; c < d.cols; ++c) var[c] += (r[c] - s.mean[c]) * (r[c] - s.mean[c]);
    }
    for (std::size_t c = 0; c < d.cols; ++c) {
      const double sd = std::sqrt(var[c] / n);
      s.inv_std[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return s;
  }

  static Standardizer identity(std::size_t cols) { return {std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0)}; }

  void apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = (in[c] - mean[c]) * inv_std[c];
  }

  std::vector<double> transform(const Dataset& d) const {
    std::vector<double> out(d.x.size());
    for (std::size_t i = 0; i < d.rows(); ++i)
      apply(d.row(i), std::span<double>(out.data() + i * d.cols, d.cols));
    return out;
  }

  nlohmann::json to_json() const { return {{"mean", mean}, {"inv_std", inv_std}}; }
  static Standardizer from_json(const nlohmann::json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("inv_std").get<std::vector<double>>()};
  }
};

// Dense matrix view used by the gradient code.
struct MatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  std::span<const double> row(std::size_t i) const { return {data + i * cols, cols}; }
};

}  // namespace malcall

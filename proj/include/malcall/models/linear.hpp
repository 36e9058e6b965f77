#pragma once

// Logistic regression and linear SVM over standardized inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "malcall/models/common.hpp"

namespace malcall {

struct LinearModel {
  Standardizer scaler;
  std::vector<double> w;
  double b = 0.0;

  double margin(std::span<const double> x) const {
    double z = b;
    for (std::size_t c = 0; c < w.size(); ++c) z += w[c] * ((x[c] - scaler.mean[c]) * scaler.inv_std[c]);
    return z;
  }

  nlohmann::json to_json() const { return {{"scaler", scaler.to_json()}, {"w", w}, {"b", b}}; }
  static LinearModel from_json(const nlohmann::json& j) {
    return {Standardizer::from_json(j.at("scaler")), j.at("w").get<std::vector<double>>(), j.at("b").get<double>()};
  }
};

struct LogisticConfig {
  double l2 = 1e-4;
  double initial_step = 1.0;
  int max_epochs = 500;
  double tolerance = 1e-6;  // on the gradient 2-norm
  bool standardize = true;
};

// Mean log-loss + (l2/2)|w|^2 for packed parameters theta = [w..., b].
// Writes the gradient into `grad` when it is non-empty.
inline double logistic_objective(std::span<const double> theta, const MatrixView& x, std::span<const std::uint8_t> y,
                                 double l2, std::span<double> grad = {}) {
  const std::size_t d = x.cols;
  const double n = static_cast<double>(x.rows);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    double z = theta[d];
    for (std::size_t c = 0; c < d; ++c) z += theta[c] * r[c];
    loss += softplus(z) - (y[i] ? z : 0.0);
    if (!grad.empty()) {
      const double err = sigmoid(z) - (y[i] ? 1.0 : 0.0);
      for (std::size_t c = 0; c < d; ++c) grad[c] += err * r[c];
      grad[d] += err;
    }
  }
  loss /= n;
  double reg = 0.0;
  for (std::size_t c = 0; c < d; ++c) reg += theta[c] * theta[c];
  loss += 0.5 * l2 * reg;
  if (!grad.empty()) {
    for (auto& g : grad) g /= n;
    for (std::size_t c = 0; c < d; ++c) grad[c] += l2 * theta[c];
  }
  return loss;
}

// Full-batch gradient descent with Armijo backtracking. Deterministic.
inline LinearModel train_logistic(const Dataset& data, const LogisticConfig& cfg = {}) {
  require_both_classes(data, "train_logistic");
  LinearModel m;
  m.scaler = cfg.standardize ? Standardizer::fit(data) : Standardizer::identity(data.cols);
  const auto xs = m.scaler.transform(data);
  const MatrixView x{xs.data(), data.rows(), data.cols};
  const std::size_t p = data.cols + 1;
  std::vector<double> theta(p, 0.0), grad(p), trial(p), trial_grad(p);
  double loss = logistic_objective(theta, x, data.y, cfg.l2, grad);
  double step = cfg.initial_step;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    if (std::sqrt(gnorm2) < cfg.tolerance) break;
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      for (std::size_t k = 0; k < p; ++k) trial[k] = theta[k] - step * grad[k];
      const double trial_loss = logistic_objective(trial, x, data.y, cfg.l2, trial_grad);
      if (trial_loss <= loss - 0.5 * step * gnorm2) {
        theta.swap(trial);
        grad.swap(trial_grad);
        loss = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step = std::min(step * 2.0, 64.0);
  }
  if (!std::isfinite(loss)) throw TrainingError("train_logistic: non-finite loss");
  m.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(data.cols));
  m.b = theta[data.cols];
  return m;
}

struct SvmConfig {
  double l2 = 1e-3;
  double learning_rate = 0.5;
  int epochs = 400;
  bool standardize = true;
};

// (l2/2)|w|^2 + mean hinge loss over labels mapped to +-1.
inline double svm_objective(std::span<const double> theta, const MatrixView& x, std::span<const std::uint8_t> y,
                            double l2, std::span<double> subgrad = {}, double* hinge_out = nullptr) {
  const std::size_t d = x.cols;
  const double n = static_cast<double>(x.rows);
  if (!subgrad.empty()) std::fill(subgrad.begin(), subgrad.end(), 0.0);
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    const double yi = y[i] ? 1.0 : -1.0;
    double z = theta[d];
    for (std::size_t c = 0; c < d; ++c) z += theta[c] * r[c];
    const double slack = 1.0 - yi * z;
    if (slack > 0.0) {
      hinge += slack;
      if (!subgrad.empty()) {
        for (std::size_t c = 0; c < d; ++c) subgrad[c] -= yi * r[c];
        subgrad[d] -= yi;
      }
    }
  }
  hinge /= n;
  double reg = 0.0;
  for (std::size_t c = 0; c < d; ++c) reg += theta[c] * theta[c];
  if (!subgrad.empty()) {
    for (auto& g : subgrad) g /= n;
    for (std::size_t c = 0; c < d; ++c) subgrad[c] += l2 * theta[c];
  }
  if (hinge_out) *hinge_out = hinge;
  return hinge + 0.5 * l2 * reg;
}

// Deterministic full-batch subgradient descent with step lr/sqrt(t+1);
// returns the best iterate seen.
inline LinearModel train_linear_svm(const Dataset& data, const SvmConfig& cfg = {}) {
  require_both_classes(data, "train_linear_svm");
  LinearModel m;
  m.scaler = cfg.standardize ? Standardizer::fit(data) : Standardizer::identity(data.cols);
  const auto xs = m.scaler.transform(data);
  const MatrixView x{xs.data(), data.rows(), data.cols};
  const std::size_t p = data.cols + 1;
  std::vector<double> theta(p, 0.0), g(p), best = theta;
  double best_obj = svm_objective(theta, x, data.y, cfg.l2, g);
  for (int t = 0; t < cfg.epochs; ++t) {
    const double step = cfg.learning_rate / std::sqrt(static_cast<double>(t) + 1.0);
    for (std::size_t k = 0; k < p; ++k) theta[k] -= step * g[k];
    const double obj = svm_objective(theta, x, data.y, cfg.l2, g);
    if (obj < best_obj) {
      best_obj = obj;
      best = theta;
    }
  }
  if (!std::isfinite(best_obj)) throw TrainingError("train_linear_svm: non-finite objective");
  m.w.assign(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(data.cols));
  m.b = best[data.cols];
  return m;
}

}  // namespace malcall

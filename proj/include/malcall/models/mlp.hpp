#pragma once

// Two-layer perceptron: p = softmax(W1 * relu(W2 * x + b2) + b1), trained with
// mini-batch gradient descent on cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/models/common.hpp"
#include "malcall/rng.hpp"

namespace malcall {

struct MlpConfig {
  std::size_t hidden = 20;
  int epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double l2 = 0.0;
  bool standardize = true;
  std::uint64_t seed = 0;
};

// Parameters packed as [W2 (hidden x in), b2 (hidden), W1 (2 x hidden), b1 (2)].
struct MlpParams {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::vector<double> theta;

  MlpParams() = default;
  MlpParams(std::size_t in_, std::size_t hidden_)
      : in(in_), hidden(hidden_), theta(hidden_ * in_ + hidden_ + 2 * hidden_ + 2, 0.0) {}

  std::size_t w2() const { return 0; }
  std::size_t b2() const { return hidden * in; }
  std::size_t w1() const { return b2() + hidden; }
  std::size_t b1() const { return w1() + 2 * hidden; }

  // Class probabilities (p0, p1) for a standardized input.
  std::array<double, 2> forward(std::span<const double> x, std::span<double> hidden_out) const {
    const double* W2 = theta.data() + w2();
    const double* B2 = theta.data() + b2();
    const double* W1 = theta.data() + w1();
    const double* B1 = theta.data() + b1();
    for (std::size_t h = 0; h < hidden; ++h) {
      double a = B2[h];
      const double* row = W2 + h * in;
      for (std::size_t c = 0; c < in; ++c) a += row[c] * x[c];
      hidden_out[h] = a > 0.0 ? a : 0.0;
    }
    double z0 = B1[0], z1 = B1[1];
    for (std::size_t h = 0; h < hidden; ++h) {
      z0 += W1[h] * hidden_out[h];
      z1 += W1[hidden + h] * hidden_out[h];
    }
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    const double s = e0 + e1;
    return {e0 / s, e1 / s};
  }
};

// Mean cross-entropy (+ l2/2 |W|^2 over weight matrices) over `rows` of x.
// Accumulates the gradient into `grad` when non-empty.
inline double mlp_objective(const MlpParams& p, const MatrixView& x, std::span<const std::uint8_t> y,
                            std::span<const std::size_t> rows, double l2, std::span<double> grad = {}) {
  std::vector<double> hid(p.hidden);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const double* W1 = p.theta.data() + p.w1();
  const double* W2 = p.theta.data() + p.w2();
  double loss = 0.0;
  for (auto i : rows) {
    const auto xi = x.row(i);
    const auto prob = p.forward(xi, hid);
    const int label = y[i] ? 1 : 0;
    loss -= std::log(std::max(prob[static_cast<std::size_t>(label)], 1e-300));
    if (!want_grad) continue;
    const double d0 = prob[0] - (label == 0 ? 1.0 : 0.0);
    const double d1 = prob[1] - (label == 1 ? 1.0 : 0.0);
    grad[p.b1()] += d0;
    grad[p.b1() + 1] += d1;
    for (std::size_t h = 0; h < p.hidden; ++h) {
      grad[p.w1() + h] += d0 * hid[h];
      grad[p.w1() + p.hidden + h] += d1 * hid[h];
      if (hid[h] <= 0.0) continue;
      const double dh = d0 * W1[h] + d1 * W1[p.hidden + h];
      grad[p.b2() + h] += dh;
      double* gw = grad.data() + p.w2() + h * p.in;
      for (std::size_t c = 0; c < p.in; ++c) gw[c] += dh * xi[c];
    }
  }
  const double n = static_cast<double>(rows.size());
  loss /= n;
  if (want_grad)
    for (auto& g : grad) g /= n;
  if (l2 > 0.0) {
    double reg = 0.0;
    for (std::size_t k = 0; k < p.hidden * p.in; ++k) {
      reg += W2[k] * W2[k];
      if (want_grad) grad[p.w2() + k] += l2 * W2[k];
    }
    for (std::size_t k = 0; k < 2 * p.hidden; ++k) {
      reg += W1[k] * W1[k];
      if (want_grad) grad[p.w1() + k] += l2 * W1[k];
    }
    loss += 0.5 * l2 * reg;
  }
  return loss;
}

// Uniform Xavier initialization for both weight matrices; zero biases.
inline MlpParams init_mlp(std::size_t in, std::size_t hidden, Rng& rng) {
  MlpParams p(in, hidden);
  const double a2 = std::sqrt(6.0 / static_cast<double>(in + hidden));
  for (std::size_t k = 0; k < hidden * in; ++k) p.theta[p.w2() + k] = rng.uniform(-a2, a2);
  const double a1 = std::sqrt(6.0 / static_cast<double>(hidden + 2));
  for (std::size_t k = 0; k < 2 * hidden; ++k) p.theta[p.w1() + k] = rng.uniform(-a1, a1);
  return p;
}

struct MlpModel {
  Standardizer scaler;
  MlpParams params;

  double score(std::span<const double> x) const {
    thread_local std::vector<double> xs, hid;
    xs.resize(params.in);
    hid.resize(params.hidden);
    scaler.apply(x, xs);
    return params.forward(xs, hid)[1];
  }

  std::array<double, 2> probabilities(std::span<const double> x) const {
    std::vector<double> xs(params.in), hid(params.hidden);
    scaler.apply(x, xs);
    return params.forward(xs, hid);
  }

  nlohmann::json to_json() const {
    return {{"scaler", scaler.to_json()}, {"in", params.in}, {"hidden", params.hidden}, {"theta", params.theta}};
  }
  static MlpModel from_json(const nlohmann::json& j) {
    MlpModel m;
    m.scaler = Standardizer::from_json(j.at("scaler"));
    m.params = MlpParams(j.at("in").get<std::size_t>(), j.at("hidden").get<std::size_t>());
    auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != m.params.theta.size()) throw CorruptPayload("mlp: parameter count mismatch");
    m.params.theta = std::move(theta);
    return m;
  }
};

inline MlpModel train_mlp(const Dataset& data, const MlpConfig& cfg = {}) {
  require_both_classes(data, "train_mlp");
  MlpModel m;
  m.scaler = cfg.standardize ? Standardizer::fit(data) : Standardizer::identity(data.cols);
  const auto xs = m.scaler.transform(data);
  const MatrixView x{xs.data(), data.rows(), data.cols};
  Rng rng(derive_seed(cfg.seed, 0x4d4c50));
  m.params = init_mlp(data.cols, cfg.hidden, rng);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(m.params.theta.size());
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = mlp_objective(m.params, x, data.y, batch, cfg.l2, grad);
      if (!std::isfinite(loss))
        throw TrainingError("train_mlp: non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                            std::to_string(start));
      for (std::size_t k = 0; k < grad.size(); ++k) m.params.theta[k] -= cfg.learning_rate * grad[k];
    }
  }
  return m;
}

}  // namespace malcall

#pragma once

// Adagrad and Adam on flat parameter vectors.

#include <cmath>

#include "vpctl/grid.hpp"

namespace vpctl {

enum class OptimizerKind { adagrad, adam };

template <typename Scalar = double>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adagrad;
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  long step = 0;
  Vector<Scalar> first;   // adagrad: sum of squares; adam: first moment
  Vector<Scalar> second;  // adam second moment

  OptimizerState() = default;
  OptimizerState(OptimizerKind k, Scalar learning_rate, Eigen::Index n)
      : kind(k), lr(learning_rate), first(Vector<Scalar>::Zero(n)), second(Vector<Scalar>::Zero(n)) {}

  void reset(OptimizerKind k, Scalar learning_rate) {
    kind = k;
    lr = learning_rate;
    step = 0;
    first.setZero();
    second.setZero();
  }
};

/// adagrad: G += g^2; theta -= lr g / sqrt(G + eps)
/// adam:    bias-corrected moments; theta -= lr m_hat / (sqrt(v_hat) + eps)
template <typename Scalar>
void optimizer_step(OptimizerState<Scalar>& s, Eigen::Ref<Vector<Scalar>> params, const Vector<Scalar>& grad) {
  if (grad.size() != params.size() || s.first.size() != params.size())
    throw UsageError("optimizer_step: gradient / state size mismatch");
  ++s.step;
  if (s.kind == OptimizerKind::adagrad) {
    s.first.array() += grad.array().square();
    params.array() -= s.lr * grad.array() / (s.first.array() + s.eps).sqrt();
    return;
  }
  s.first = s.beta1 * s.first + (Scalar(1) - s.beta1) * grad;
  s.second = s.beta2 * s.second + (Scalar(1) - s.beta2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(s.beta1, Scalar(s.step));
  const Scalar c2 = Scalar(1) - std::pow(s.beta2, Scalar(s.step));
  params.array() -= s.lr * (s.first.array() / c1) / ((s.second.array() / c2).sqrt() + s.eps);
}

}  // namespace vpctl

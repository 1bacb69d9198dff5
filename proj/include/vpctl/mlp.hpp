#pragma once

// Small fully connected network: affine -> ReLU -> ... -> affine.
// Forward and parameter-gradient passes are written out by hand; batched
// versions take one input per column.

#include <cmath>
#include <random>
#include <vector>

#include "vpctl/grid.hpp"

namespace vpctl {

template <typename Scalar = double>
struct MlpParams {
  std::vector<int> layer_dims;          // e.g. {2, 64, 32, 31}
  std::vector<Matrix<Scalar>> weights;  // weights[l] is dims[l+1] x dims[l]
  std::vector<Vector<Scalar>> biases;

  MlpParams() = default;
  explicit MlpParams(std::vector<int> dims) : layer_dims(std::move(dims)) {
    if (layer_dims.size() < 2) throw ConfigError("mlp: need at least input and output layer");
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
      weights.push_back(Matrix<Scalar>::Zero(layer_dims[l + 1], layer_dims[l]));
      biases.push_back(Vector<Scalar>::Zero(layer_dims[l + 1]));
    }
  }

  std::size_t num_layers() const { return weights.size(); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Flat layout: per layer, W column-major then b.
  Vector<Scalar> flatten() const {
    Vector<Scalar> out(parameter_count());
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.segment(o, weights[l].size()) = weights[l].reshaped();
      o += weights[l].size();
      out.segment(o, biases[l].size()) = biases[l];
      o += biases[l].size();
    }
    return out;
  }

  void unflatten(const Vector<Scalar>& flat) {
    if (flat.size() != parameter_count()) throw UsageError("mlp: flat parameter vector has wrong size");
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l].reshaped() = flat.segment(o, weights[l].size());
      o += weights[l].size();
      biases[l] = flat.segment(o, biases[l].size());
      o += biases[l].size();
    }
  }
};

/// Hidden layers: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
/// Output layer weights and biases are exactly zero.
template <typename Scalar = double>
MlpParams<Scalar> mlp_init(std::uint64_t seed, std::vector<int> dims = {2, 64, 32, 31}) {
  MlpParams<Scalar> p(std::move(dims));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < p.num_layers(); ++l) {
    const double fan_in = p.layer_dims[l];
    std::uniform_real_distribution<double> uw(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    std::uniform_real_distribution<double> ub(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c)
      for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) p.weights[l](r, c) = Scalar(uw(rng));
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = Scalar(ub(rng));
  }
  return p;
}

/// Pre-activations of every layer for a batch (inputs are columns).
template <typename Scalar>
struct MlpActivations {
  std::vector<Matrix<Scalar>> pre;   // z_l = W_l a_{l-1} + b_l
  std::vector<Matrix<Scalar>> post;  // a_0 = input, a_l = relu(z_l), last = z_L
};

template <typename Scalar>
MlpActivations<Scalar> mlp_forward_batch_cached(const MlpParams<Scalar>& p, const Matrix<Scalar>& inputs) {
  MlpActivations<Scalar> act;
  act.post.push_back(inputs);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Matrix<Scalar> z = p.weights[l] * act.post.back();
    z.colwise() += p.biases[l];
    act.pre.push_back(z);
    if (l + 1 < p.num_layers())
      act.post.push_back(z.cwiseMax(Scalar(0)));
    else
      act.post.push_back(std::move(z));
  }
  return act;
}

template <typename Scalar>
Matrix<Scalar> mlp_forward_batch(const MlpParams<Scalar>& p, const Matrix<Scalar>& inputs) {
  Matrix<Scalar> a = inputs;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Matrix<Scalar> z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    a = l + 1 < p.num_layers() ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : std::move(z);
  }
  return a;
}

template <typename Scalar>
Vector<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Vector<Scalar>& input) {
  return mlp_forward_batch(p, Matrix<Scalar>(input));
}

/// Gradient of sum_columns <cotangent_c, net(input_c)> with respect to every
/// parameter, returned as a parameter block shaped like p.
template <typename Scalar>
MlpParams<Scalar> mlp_backward_params_batch(const MlpParams<Scalar>& p, const Matrix<Scalar>& inputs,
                                            const Matrix<Scalar>& cotangents) {
  if (cotangents.rows() != p.output_dim() || cotangents.cols() != inputs.cols())
    throw UsageError("mlp_backward_params: cotangent shape mismatch");
  const MlpActivations<Scalar> act = mlp_forward_batch_cached(p, inputs);
  MlpParams<Scalar> g(p.layer_dims);
  Matrix<Scalar> delta = cotangents;
  for (std::size_t l = p.num_layers(); l-- > 0;) {
    g.weights[l].noalias() = delta * act.post[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Matrix<Scalar> back = p.weights[l].transpose() * delta;
    delta = back.cwiseProduct((act.pre[l - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
  }
  return g;
}

template <typename Scalar>
MlpParams<Scalar> mlp_backward_params(const MlpParams<Scalar>& p, const Vector<Scalar>& input,
                                      const Vector<Scalar>& cotangent) {
  return mlp_backward_params_batch(p, Matrix<Scalar>(input), Matrix<Scalar>(cotangent));
}

}  // namespace vpctl

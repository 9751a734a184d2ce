#pragma once

// Contrastive objectives over a mini-batch score matrix S, where S(i, j) is
// the inner product of the i-th fused video/text embedding with the j-th
// answer embedding.
//
//   nce_loss:       mean_i  -log softmax(S(i, :))[label_i]
//   symmetric_loss: 0.5 * (nce_loss(S, diag) + nce_loss(S^T, diag))
//
// No temperature by default (temperature == 1).

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcvl/autograd.hpp"
#include "mcvl/embeddings.hpp"

namespace mcvl {

namespace detail {

template <typename Derived>
void check_scores(const Eigen::MatrixBase<Derived>& scores, std::span<const int> labels) {
  if (scores.rows() == 0 || scores.cols() == 0)
    throw std::invalid_argument("score matrix must have at least one row and one column");
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    throw std::invalid_argument("one label per score row required");
  for (int l : labels)
    if (l < 0 || l >= scores.cols())
      throw std::invalid_argument("label " + std::to_string(l) + " out of range [0, " +
                                  std::to_string(scores.cols()) + ")");
  if (!scores.allFinite()) throw std::invalid_argument("non-finite score");
}

/// Row-wise log-sum-exp.
template <typename Derived>
VectorX<typename Derived::Scalar> row_logsumexp(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    out(i) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  return out;
}

}  // namespace detail

inline std::vector<int> diagonal_labels(Eigen::Index n) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i);
  return labels;
}

template <typename Derived>
typename Derived::Scalar nce_loss(const Eigen::MatrixBase<Derived>& scores,
                                  std::span<const int> labels,
                                  typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  detail::check_scores(scores, labels);
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
  const MatrixX<Scalar> z = scores / temperature;
  const VectorX<Scalar> lse = detail::row_logsumexp(z);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) total += lse(i) - z(i, labels[static_cast<std::size_t>(i)]);
  return total / static_cast<Scalar>(z.rows());
}

/// d nce_loss / d scores.
template <typename Derived>
MatrixX<typename Derived::Scalar> nce_gradient(const Eigen::MatrixBase<Derived>& scores,
                                               std::span<const int> labels,
                                               typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  detail::check_scores(scores, labels);
  const MatrixX<Scalar> z = scores / temperature;
  const VectorX<Scalar> lse = detail::row_logsumexp(z);
  MatrixX<Scalar> g(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    g.row(i) = (z.row(i).array() - lse(i)).exp();
    g(i, labels[static_cast<std::size_t>(i)]) -= 1;
  }
  return g / (temperature * static_cast<Scalar>(z.rows()));
}

template <typename Derived>
typename Derived::Scalar symmetric_loss(const Eigen::MatrixBase<Derived>& scores,
                                        typename Derived::Scalar temperature = 1) {
  if (scores.rows() != scores.cols())
    throw std::invalid_argument("symmetric_loss: score matrix must be square");
  const auto labels = diagonal_labels(scores.rows());
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> st = scores.transpose();
  return Scalar(0.5) * (nce_loss(scores, labels, temperature) + nce_loss(st, labels, temperature));
}

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetric_gradient(const Eigen::MatrixBase<Derived>& scores,
                                                     typename Derived::Scalar temperature = 1) {
  if (scores.rows() != scores.cols())
    throw std::invalid_argument("symmetric_gradient: score matrix must be square");
  using Scalar = typename Derived::Scalar;
  const auto labels = diagonal_labels(scores.rows());
  const MatrixX<Scalar> st = scores.transpose();
  const MatrixX<Scalar> g_rows = nce_gradient(scores, labels, temperature);
  const MatrixX<Scalar> g_cols = nce_gradient(st, labels, temperature);
  return Scalar(0.5) * (g_rows + g_cols.transpose());
}

using LossFn = std::function<double(const Matrix&)>;
using GradFn = std::function<Matrix(const Matrix&)>;

struct GradientCheck {
  Matrix analytic;
  Matrix numeric;
  /// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf); the raw
  /// absolute deviation when both gradients vanish.
  double max_relative_deviation = 0.0;
};

/// Central finite differences of `loss` at every entry of `scores`.
GradientCheck loss_gradient_check(const LossFn& loss, const GradFn& gradient, const Matrix& scores,
                                  double step);

enum class ContrastiveLoss { kNce, kSymmetric };

/// Differentiable loss node on a 1x1 output; labels are ignored for the
/// symmetric loss (diagonal pairing).
autograd::Var contrastive_loss(autograd::Var scores, ContrastiveLoss kind,
                               std::span<const int> labels, double temperature = 1.0);

}  // namespace mcvl

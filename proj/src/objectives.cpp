#include "mcvl/objectives.hpp"

namespace mcvl {

GradientCheck loss_gradient_check(const LossFn& loss, const GradFn& gradient, const Matrix& scores,
                                  double step) {
  if (!(step > 0.0)) throw std::invalid_argument("loss_gradient_check: step must be positive");
  GradientCheck out;
  out.analytic = gradient(scores);
  out.numeric.resize(scores.rows(), scores.cols());
  Matrix probe = scores;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      const double up = loss(probe);
      probe(i, j) = orig - step;
      const double down = loss(probe);
      probe(i, j) = orig;
      out.numeric(i, j) = (up - down) / (2.0 * step);
    }
  }
  const double diff = (out.analytic - out.numeric).cwiseAbs().maxCoeff();
  const double scale = std::max(out.analytic.cwiseAbs().maxCoeff(), out.numeric.cwiseAbs().maxCoeff());
  out.max_relative_deviation = scale > 1e-12 ? diff / scale : diff;
  return out;
}

autograd::Var contrastive_loss(autograd::Var scores, ContrastiveLoss kind,
                               std::span<const int> labels, double temperature) {
  const Matrix& s = scores.value();
  std::vector<int> owned(labels.begin(), labels.end());
  double value = 0.0;
  Matrix grad;
  if (kind == ContrastiveLoss::kNce) {
    value = nce_loss(s, owned, temperature);
    grad = nce_gradient(s, owned, temperature);
  } else {
    value = symmetric_loss(s, temperature);
    grad = symmetric_gradient(s, temperature);
  }
  autograd::Tape& t = scores.tape();
  const int is = scores.id();
  Matrix out(1, 1);
  out(0, 0) = value;
  return t.push(std::move(out), {scores},
                [&t, is, grad = std::move(grad)](const Matrix& g) { t.accumulate(is, grad * g(0, 0)); });
}

}  // namespace mcvl

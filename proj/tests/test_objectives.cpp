#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mcvl/objectives.hpp"

using namespace mcvl;

namespace {

// Plain softmax cross-entropy without the log-sum-exp shift.
double naive_nce(const Matrix& s, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double denom = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) denom += std::exp(s(i, j));
    total += -std::log(std::exp(s(i, labels[i])) / denom);
  }
  return total / static_cast<double>(s.rows());
}

std::vector<int> random_labels(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(cols) - 1);
  std::vector<int> out(rows);
  for (auto& l : out) l = d(rng);
  return out;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("uniform rows give ln N") {
  for (int n = 1; n <= 10; ++n) {
    const Matrix s = Matrix::Constant(3, n, 0.7);
    CHECK(nce_loss(s, std::vector<int>{0, n - 1, n / 2}) == doctest::Approx(std::log(n)).epsilon(1e-12));
  }
}

TEST_CASE("hand softmax example") {
  Matrix s(1, 3);
  s << 2.0, 0.0, 0.0;
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0));
  CHECK(std::abs(nce_loss(s, std::vector<int>{0}) - expected) < 1e-12);
  CHECK(nce_loss(s, std::vector<int>{0}) == doctest::Approx(0.23954).epsilon(1e-4));
}

TEST_CASE("single column is a certain event") {
  const Matrix s = Matrix::Constant(4, 1, -3.5);
  CHECK(nce_loss(s, std::vector<int>{0, 0, 0, 0}) == 0.0);
}

TEST_CASE("label errors") {
  const Matrix s = Matrix::Zero(2, 3);
  CHECK_THROWS_AS((void)nce_loss(s, std::vector<int>{0, 3}), std::invalid_argument);
  CHECK_THROWS_AS((void)nce_loss(s, std::vector<int>{-1, 0}), std::invalid_argument);
  CHECK_THROWS_AS((void)nce_loss(s, std::vector<int>{0}), std::invalid_argument);
  CHECK_THROWS_AS((void)symmetric_loss(s), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS((void)nce_loss(bad, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST_CASE("matches naive cross-entropy on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index r = 1 + trial % 8, c = 1 + (trial * 3) % 8;
    const Matrix s = testing::random_matrix(r, c, rng, 2.0);
    const auto labels = random_labels(r, c, rng);
    CHECK(std::abs(nce_loss(s, labels) - naive_nce(s, labels)) < 1e-6);
    CHECK(nce_loss(s, labels) >= 0.0);
  }
}

TEST_CASE("symmetric loss examples") {
  CHECK(symmetric_loss(Matrix::Constant(1, 1, 4.2)) == 0.0);
  Matrix s(2, 2);
  s << 2, 0, 0, 2;
  CHECK(symmetric_loss(s) == doctest::Approx(0.12693).epsilon(1e-4));
  CHECK(std::abs(symmetric_loss(s) - std::log1p(std::exp(-2.0))) < 1e-12);
}

TEST_CASE("symmetric loss decomposes and is transpose-symmetric") {
  std::mt19937_64 rng(12);
  for (int n = 1; n <= 8; ++n) {
    const Matrix s = testing::random_matrix(n, n, rng);
    const Matrix st = s.transpose();
    const auto d = diagonal_labels(n);
    CHECK(symmetric_loss(s) == 0.5 * (nce_loss(s, d) + nce_loss(st, d)));
    CHECK(std::abs(symmetric_loss(s) - symmetric_loss(st)) < 1e-12);
  }
}

TEST_CASE("row shift invariance") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix s = testing::random_matrix(5, 6, rng);
    const auto labels = random_labels(5, 6, rng);
    const double before = nce_loss(s, labels);
    s.row(trial % 5).array() += 37.0 * (trial - 10);
    CHECK(std::abs(nce_loss(s, labels) - before) < 1e-9);
  }
}

TEST_CASE("finite-difference gradients up to 16x16") {
  std::mt19937_64 rng(14);
  for (int n : {1, 2, 4, 7, 16}) {
    const Matrix s = testing::random_matrix(n, n + (n % 3), rng);
    const auto labels = random_labels(s.rows(), s.cols(), rng);
    const auto nce = loss_gradient_check([&](const Matrix& m) { return nce_loss(m, labels); },
                                         [&](const Matrix& m) { return nce_gradient(m, labels); }, s, 1e-5);
    CHECK(nce.max_relative_deviation < 1e-6);

    const Matrix sq = testing::random_matrix(n, n, rng);
    const auto sym = loss_gradient_check([](const Matrix& m) { return symmetric_loss(m); },
                                         [](const Matrix& m) { return symmetric_gradient(m); }, sq, 1e-5);
    CHECK(sym.max_relative_deviation < 1e-6);
  }
}

TEST_CASE("temperature gradients") {
  std::mt19937_64 rng(15);
  const Matrix s = testing::random_matrix(5, 5, rng);
  const auto labels = diagonal_labels(5);
  const auto check = loss_gradient_check([&](const Matrix& m) { return nce_loss(m, labels, 0.3); },
                                         [&](const Matrix& m) { return nce_gradient(m, labels, 0.3); }, s, 1e-5);
  CHECK(check.max_relative_deviation < 1e-6);
  CHECK_THROWS_AS((void)nce_loss(s, labels, 0.0), std::invalid_argument);
}

TEST_CASE("gradient structure") {
  const Matrix uniform = Matrix::Constant(4, 4, 1.3);
  const Matrix g = nce_gradient(uniform, diagonal_labels(4));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(g.row(i).sum()) < 1e-15);
  CHECK(nce_gradient(Matrix::Constant(1, 1, 5.0), std::vector<int>{0})(0, 0) == 0.0);
  CHECK(symmetric_gradient(Matrix::Constant(1, 1, 5.0))(0, 0) == 0.0);
  CHECK_THROWS_AS((void)loss_gradient_check([](const Matrix&) { return 0.0; },
                                      [](const Matrix& m) { return m; }, uniform, 0.0),
                  std::invalid_argument);
}

TEST_CASE("float instantiation") {
  MatrixX<float> s(2, 2);
  s << 2, 0, 0, 2;
  CHECK(std::abs(symmetric_loss(s) - 0.12693f) < 1e-4f);
}

TEST_CASE("autograd loss node matches the closed forms") {
  std::mt19937_64 rng(16);
  autograd::Parameter p("s", testing::random_matrix(6, 6, rng));
  const auto labels = diagonal_labels(6);
  for (auto kind : {ContrastiveLoss::kNce, ContrastiveLoss::kSymmetric}) {
    p.zero_grad();
    autograd::Tape tape;
    const auto loss = contrastive_loss(tape.parameter(p), kind, labels);
    tape.backward(loss);
    const double expected = kind == ContrastiveLoss::kNce ? nce_loss(p.value, labels) : symmetric_loss(p.value);
    const Matrix grad = kind == ContrastiveLoss::kNce ? nce_gradient(p.value, labels) : symmetric_gradient(p.value);
    CHECK(loss.value()(0, 0) == expected);
    CHECK((p.grad - grad).cwiseAbs().maxCoeff() < 1e-15);
  }
}

}  // TEST_SUITE

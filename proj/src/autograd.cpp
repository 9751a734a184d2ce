#include "mcvl/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace mcvl::autograd {

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = recording_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& p : parents) {
      if (p.tape_ != this) throw std::invalid_argument("autograd: operands on different tapes");
      n.needs_grad = n.needs_grad || nodes_[p.id_].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("autograd: root on a different tape");
  if (!recording_) throw std::logic_error("autograd: backward on a non-recording tape");
  const Matrix& v = value(root.id_);
  if (v.size() != 1) throw std::invalid_argument("autograd: backward root must be 1x1");
  accumulate(root.id_, Matrix::Ones(1, 1));
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(n.grad);
    }
  }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), {a, b}, [&t, ia, ib](const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value().transpose(), {a, b}, [&t, ia, ib](const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {a, b}, [&t, ia, ib](const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_row: expected a 1 x " + std::to_string(a.cols()) + " row");
  Tape& t = a.tape();
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [&t, ia, ir](const Matrix& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.push(a.value() * s, {a}, [&t, ia, s](const Matrix& g) { t.accumulate(ia, g * s); });
}

Var gelu(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluK * v * v * v)));
  });
  return t.push(std::move(out), {a}, [&t, ia](const Matrix& g) {
    const Matrix& x = t.value(ia);
    Matrix d = x.unaryExpr([](double v) {
      const double th = std::tanh(kGeluC * (v + kGeluK * v * v * v));
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluK * v * v);
    });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var softmax_rows(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  const int iy = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [&t, ia, iy](const Matrix& g) {
    const Matrix& y = t.value(iy);
    Matrix dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(ia, dx);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x " + std::to_string(n));
  Tape& t = x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Vector inv(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv(i);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
             bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.push(std::move(y), {x, gain, bias},
                [&t, ix, ig, ib, xhat = std::move(xhat), inv = std::move(inv)](const Matrix& g) {
                  const double nn = static_cast<double>(g.cols());
                  if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                  if (!t.needs_grad(ix)) return;
                  Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                  Matrix dx(g.rows(), g.cols());
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const double s1 = dxhat.row(i).sum();
                    const double s2 = dxhat.row(i).dot(xhat.row(i));
                    dx.row(i) = (inv(i) / nn) *
                                (nn * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2);
                  }
                  t.accumulate(ix, dx);
                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Tape& t = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    r += p.rows();
  }
  return t.push(std::move(out), parts, [&t, spans = std::move(spans)](const Matrix& g) {
    Eigen::Index r = 0;
    for (auto [id, n] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleRows(r, n));
      r += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    c += p.cols();
  }
  return t.push(std::move(out), parts, [&t, spans = std::move(spans)](const Matrix& g) {
    Eigen::Index c = 0;
    for (auto [id, n] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleCols(c, n));
      c += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  Tape& t = a.tape();
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t.push(a.value().middleRows(start, count), {a},
                [&t, ia, start, count, rows, cols](const Matrix& g) {
                  Matrix full = Matrix::Zero(rows, cols);
                  full.middleRows(start, count) = g;
                  t.accumulate(ia, full);
                });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  Tape& t = a.tape();
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t.push(a.value().middleCols(start, count), {a},
                [&t, ia, start, count, rows, cols](const Matrix& g) {
                  Matrix full = Matrix::Zero(rows, cols);
                  full.middleCols(start, count) = g;
                  t.accumulate(ia, full);
                });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = table.tape();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw std::invalid_argument("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  const int it = table.id();
  const Eigen::Index rows = tv.rows(), cols = tv.cols();
  return t.push(std::move(out), {table},
                [&t, it, rows, cols, ids = std::vector<int>(ids.begin(), ids.end())](const Matrix& g) {
                  Matrix full = Matrix::Zero(rows, cols);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    full.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                  t.accumulate(it, full);
                });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  Tape& t = a.tape();
  const int ia = a.id();
  const Eigen::Index rows = a.rows();
  Matrix out = mean_pool(a.value()).transpose();
  return t.push(std::move(out), {a}, [&t, ia, rows](const Matrix& g) {
    t.accumulate(ia, g.replicate(rows, 1) / static_cast<double>(rows));
  });
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

void zero_grad(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

std::size_t count_parameters(const ConstParameterList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

}  // namespace mcvl::autograd

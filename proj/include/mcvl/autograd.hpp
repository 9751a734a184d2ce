#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records one forward computation. Parameters live outside the tape
// and receive accumulated gradients when Tape::backward runs; values and
// gradients are float64 throughout.

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcvl/embeddings.hpp"

namespace mcvl::autograd {

/// A named trainable tensor with its gradient accumulator.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix init)
      : name_(std::move(name)), value(std::move(init)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

 private:
  std::string name_;

 public:
  Matrix value;
  Matrix grad;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called with the node's accumulated output gradient; adds into parents
  /// through Tape::accumulate.
  using Backward = std::function<void(const Matrix& grad_out)>;

  /// With `record_gradients` false no closures are kept (inference mode).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `p`; repeated calls on one tape return the same node.
  Var parameter(Parameter& p);
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Back-propagates from a 1x1 root into every reachable Parameter::grad.
  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
  };

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// Differentiable operations. All operands must share one tape.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x n row to every row of `a`.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var gelu(Var a);
Var softmax_rows(Var a);
/// Row-wise layer normalization with 1 x n gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Rows `ids` of `table`; gradients scatter-add back.
Var gather_rows(Var table, std::span<const int> ids);
/// 1 x n mean over rows.
Var mean_rows(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }

/// Visits parameters in a fixed order; used for optimizers, clipping and
/// checkpoints.
using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

double global_grad_norm(const ParameterList& params);
/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);
void zero_grad(const ParameterList& params);
std::size_t count_parameters(const ConstParameterList& params);

}  // namespace mcvl::autograd

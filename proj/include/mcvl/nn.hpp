#pragma once

// Transformer building blocks on top of the autograd tape.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcvl/autograd.hpp"

namespace mcvl::nn {

using autograd::ConstParameterList;
using autograd::Parameter;
using autograd::ParameterList;
using autograd::Tape;
using autograd::Var;

enum class Pooling { kMean, kFirstToken };

Var pool(Var seq, Pooling pooling);

/// Gaussian initialization with an explicit generator.
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

/// y = x W + b
struct Linear {
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  Var operator()(Var x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  mutable Parameter weight;
  mutable Parameter bias;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim, double eps = 1e-5);

  Var operator()(Var x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

  mutable Parameter gain;
  mutable Parameter bias;
  double eps = 1e-5;
};

/// Post-norm block: LN(x + MHA(x)) then LN(h + FFN(h)).
struct TransformerBlock {
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Eigen::Index width, int heads, Eigen::Index ffn_dim,
                   std::mt19937_64& rng);

  Var operator()(Var x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

  int heads = 1;
  Linear query, key, value, output;
  LayerNorm attention_norm;
  Linear ffn_in, ffn_out;
  LayerNorm output_norm;
};

struct ShallowTransformerConfig {
  Eigen::Index input_dim = 0;  // 0: inputs already have `width` columns
  Eigen::Index width = 32;
  int blocks = 2;
  int heads = 2;
  Eigen::Index ffn_dim = 64;
  Eigen::Index max_length = 256;
  int segment_types = 2;
};

/// Randomly initialized shallow transformer. Serves both as the multimodal
/// fusion transformer and, with an input projection, as the video projector.
/// Output length always equals input length.
class ShallowTransformer {
 public:
  ShallowTransformer() = default;
  ShallowTransformer(const std::string& name, const ShallowTransformerConfig& cfg,
                     std::mt19937_64& rng);

  /// `segments[i]` selects the segment embedding of row i (empty: all 0).
  Var operator()(Var x, std::span<const int> segments = {}) const;

  [[nodiscard]] const ShallowTransformerConfig& config() const { return cfg_; }
  /// Output normalization of the final block.
  [[nodiscard]] LayerNorm& last_layer_norm() { return blocks_.back().output_norm; }
  [[nodiscard]] const LayerNorm& last_layer_norm() const { return blocks_.back().output_norm; }

  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

 private:
  ShallowTransformerConfig cfg_;
  bool has_input_projection_ = false;
  Linear input_projection_;
  mutable Parameter positions_;
  mutable Parameter segment_embeddings_;
  LayerNorm input_norm_;
  std::vector<TransformerBlock> blocks_;
};

/// Snapshot / restore of parameter values in list order.
std::vector<Matrix> get_values(const ConstParameterList& params);
void set_values(const ParameterList& params, const std::vector<Matrix>& values);

// Parameter blob, little-endian: magic "MCPB", uint64 count, then per
// parameter: uint64 name length, name bytes, int64 rows, int64 cols,
// rows*cols float64 values (row-major).
void save_parameters(const std::string& path, const ConstParameterList& params);
/// Names and shapes must match `params` exactly, in order.
void load_parameters(const std::string& path, const ParameterList& params);

}  // namespace mcvl::nn

#include "mcvl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mcvl/common.hpp"

namespace mcvl::nn {

Var pool(Var seq, Pooling pooling) {
  if (pooling == Pooling::kFirstToken) return autograd::slice_rows(seq, 0, 1);
  return autograd::mean_rows(seq);
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
    : weight(name + ".weight", normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::operator()(Var x) const {
  Tape& t = x.tape();
  return autograd::add_row(autograd::matmul(x, t.parameter(weight)), t.parameter(bias));
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::collect(ConstParameterList& out) const {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, Eigen::Index dim, double eps_)
    : gain(name + ".gain", Matrix::Ones(1, dim)), bias(name + ".bias", Matrix::Zero(1, dim)), eps(eps_) {}

Var LayerNorm::operator()(Var x) const {
  Tape& t = x.tape();
  return autograd::layer_norm(x, t.parameter(gain), t.parameter(bias), eps);
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

void LayerNorm::collect(ConstParameterList& out) const {
  out.push_back(&gain);
  out.push_back(&bias);
}

TransformerBlock::TransformerBlock(const std::string& name, Eigen::Index width, int heads_,
                                   Eigen::Index ffn_dim, std::mt19937_64& rng)
    : heads(heads_),
      query(name + ".attn.query", width, width, rng),
      key(name + ".attn.key", width, width, rng),
      value(name + ".attn.value", width, width, rng),
      output(name + ".attn.output", width, width, rng),
      attention_norm(name + ".attn_norm", width),
      ffn_in(name + ".ffn.in", width, ffn_dim, rng),
      ffn_out(name + ".ffn.out", ffn_dim, width, rng),
      output_norm(name + ".out_norm", width) {
  if (heads <= 0 || width % heads != 0)
    throw std::invalid_argument("TransformerBlock: width must be divisible by heads");
}

Var TransformerBlock::operator()(Var x) const {
  using namespace autograd;
  const Eigen::Index width = x.cols();
  const Eigen::Index head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var q = query(x);
  Var k = key(x);
  Var v = value(x);
  std::vector<Var> per_head;
  per_head.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c = h * head_dim;
    Var qh = slice_cols(q, c, head_dim);
    Var kh = slice_cols(k, c, head_dim);
    Var vh = slice_cols(v, c, head_dim);
    Var attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    per_head.push_back(matmul(attn, vh));
  }
  Var mixed = heads == 1 ? per_head.front() : concat_cols(per_head);
  Var h = attention_norm(x + output(mixed));
  return output_norm(h + ffn_out(gelu(ffn_in(h))));
}

void TransformerBlock::collect(ParameterList& out) {
  for (Linear* l : {&query, &key, &value, &output}) l->collect(out);
  attention_norm.collect(out);
  ffn_in.collect(out);
  ffn_out.collect(out);
  output_norm.collect(out);
}

void TransformerBlock::collect(ConstParameterList& out) const {
  for (const Linear* l : {&query, &key, &value, &output}) l->collect(out);
  attention_norm.collect(out);
  ffn_in.collect(out);
  ffn_out.collect(out);
  output_norm.collect(out);
}

ShallowTransformer::ShallowTransformer(const std::string& name, const ShallowTransformerConfig& cfg,
                                       std::mt19937_64& rng)
    : cfg_(cfg), has_input_projection_(cfg.input_dim > 0) {
  if (cfg.width <= 0 || cfg.blocks <= 0 || cfg.max_length <= 0 || cfg.segment_types <= 0)
    throw std::invalid_argument("ShallowTransformer: non-positive dimension in config");
  if (has_input_projection_)
    input_projection_ = Linear(name + ".input_projection", cfg.input_dim, cfg.width, rng);
  positions_ = Parameter(name + ".positions", normal_matrix(cfg.max_length, cfg.width, 0.1, rng));
  segment_embeddings_ =
      Parameter(name + ".segments", normal_matrix(cfg.segment_types, cfg.width, 0.1, rng));
  input_norm_ = LayerNorm(name + ".input_norm", cfg.width);
  for (int b = 0; b < cfg.blocks; ++b)
    blocks_.emplace_back(name + ".block" + std::to_string(b), cfg.width, cfg.heads, cfg.ffn_dim, rng);
}

Var ShallowTransformer::operator()(Var x, std::span<const int> segments) const {
  using namespace autograd;
  const Eigen::Index n = x.rows();
  if (n == 0) throw std::invalid_argument("ShallowTransformer: empty input sequence");
  if (n > cfg_.max_length)
    throw std::invalid_argument("ShallowTransformer: sequence length " + std::to_string(n) +
                                " exceeds max_length " + std::to_string(cfg_.max_length));
  if (!segments.empty() && static_cast<Eigen::Index>(segments.size()) != n)
    throw std::invalid_argument("ShallowTransformer: segment ids do not match sequence length");
  const Eigen::Index expected_in = has_input_projection_ ? cfg_.input_dim : cfg_.width;
  if (x.cols() != expected_in)
    throw std::invalid_argument("ShallowTransformer: input width " + std::to_string(x.cols()) +
                                " != expected " + std::to_string(expected_in));
  Tape& t = x.tape();
  Var h = has_input_projection_ ? input_projection_(x) : x;
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::vector<int> seg(static_cast<std::size_t>(n), 0);
  if (!segments.empty()) seg.assign(segments.begin(), segments.end());
  h = h + gather_rows(t.parameter(positions_), pos);
  h = h + gather_rows(t.parameter(segment_embeddings_), seg);
  h = input_norm_(h);
  for (const auto& block : blocks_) h = block(h);
  return h;
}

void ShallowTransformer::collect(ParameterList& out) {
  if (has_input_projection_) input_projection_.collect(out);
  out.push_back(&positions_);
  out.push_back(&segment_embeddings_);
  input_norm_.collect(out);
  for (auto& b : blocks_) b.collect(out);
}

void ShallowTransformer::collect(ConstParameterList& out) const {
  if (has_input_projection_) input_projection_.collect(out);
  out.push_back(&positions_);
  out.push_back(&segment_embeddings_);
  input_norm_.collect(out);
  for (const auto& b : blocks_) b.collect(out);
}

std::vector<Matrix> get_values(const ConstParameterList& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void set_values(const ParameterList& params, const std::vector<Matrix>& values) {
  if (params.size() != values.size())
    throw std::invalid_argument("set_values: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != values[i].rows() || params[i]->value.cols() != values[i].cols())
      throw std::invalid_argument("set_values: shape mismatch for " + params[i]->name());
    params[i]->value = values[i];
  }
}

void save_parameters(const std::string& path, const ConstParameterList& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write("MCPB", 4);
  put(static_cast<std::uint64_t>(params.size()));
  for (const Parameter* p : params) {
    put(static_cast<std::uint64_t>(p->name().size()));
    out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
    put(static_cast<std::int64_t>(p->value.rows()));
    put(static_cast<std::int64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
  if (!out) throw DataError("short write to " + path);
}

void load_parameters(const std::string& path, const ParameterList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  auto get = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof v); };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCPB", 4) != 0) throw DataError(path + ": not a parameter blob");
  std::uint64_t count = 0;
  get(count);
  if (count != params.size())
    throw DataError(path + ": holds " + std::to_string(count) + " parameters, model expects " +
                    std::to_string(params.size()));
  for (Parameter* p : params) {
    std::uint64_t len = 0;
    get(len);
    if (!in || len > (1u << 16)) throw DataError(path + ": corrupt parameter name");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    std::int64_t rows = 0, cols = 0;
    get(rows);
    get(cols);
    if (!in || name != p->name() || rows != p->value.rows() || cols != p->value.cols())
      throw DataError(path + ": parameter '" + name + "' does not match '" + p->name() + "'");
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * p->value.size()));
    if (!in) throw DataError(path + ": truncated parameter '" + name + "'");
  }
}

}  // namespace mcvl::nn

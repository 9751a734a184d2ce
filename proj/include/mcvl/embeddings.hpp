#pragma once

// Dense embedding types and the similarity primitives shared by every other
// module. Everything is templated on the scalar type; the library itself
// instantiates double (tolerance 1e-6) and tests also exercise float (1e-4).

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mcvl {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-major so that one row is one token / word / segment.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

enum class Similarity { kInnerProduct, kCosine };

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

/// N x D matrix of stacked embeddings with optional unique row labels.
template <typename Scalar>
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  explicit EmbeddingMatrix(MatrixX<Scalar> data, std::vector<std::string> keys = {})
      : data_(std::move(data)), keys_(std::move(keys)) {
    if (!data_.allFinite()) throw std::invalid_argument("EmbeddingMatrix: non-finite entry");
    if (!keys_.empty()) {
      if (static_cast<Eigen::Index>(keys_.size()) != data_.rows())
        throw std::invalid_argument("EmbeddingMatrix: key count does not match row count");
      std::unordered_set<std::string> seen;
      for (const auto& k : keys_)
        if (!seen.insert(k).second)
          throw std::invalid_argument("EmbeddingMatrix: duplicate key '" + k + "'");
    }
  }

  [[nodiscard]] Eigen::Index rows() const { return data_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return data_.cols(); }
  [[nodiscard]] const MatrixX<Scalar>& data() const { return data_; }
  [[nodiscard]] const std::vector<std::string>& keys() const { return keys_; }
  [[nodiscard]] bool has_keys() const { return !keys_.empty(); }

  [[nodiscard]] auto row(Eigen::Index i) const { return data_.row(i); }

 private:
  MatrixX<Scalar> data_;
  std::vector<std::string> keys_;
};

/// Inner product of `query` with every row of `rows`.
template <typename DerivedQ, typename DerivedM>
VectorX<typename DerivedQ::Scalar> dot_scores(const Eigen::MatrixBase<DerivedQ>& query,
                                              const Eigen::MatrixBase<DerivedM>& rows) {
  if (query.size() != rows.cols())
    throw std::invalid_argument("dot_scores: query dim " + std::to_string(query.size()) +
                                " != matrix dim " + std::to_string(rows.cols()));
  using Scalar = typename DerivedQ::Scalar;
  const auto q = query.reshaped().template cast<Scalar>();
  return rows * q;
}

template <typename DerivedQ, typename Scalar>
VectorX<Scalar> dot_scores(const Eigen::MatrixBase<DerivedQ>& query,
                           const EmbeddingMatrix<Scalar>& matrix) {
  return dot_scores(query, matrix.data());
}

template <typename Derived>
VectorX<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& e) {
  if (!e.allFinite()) throw std::invalid_argument("l2_normalize: non-finite input");
  const auto norm = e.norm();
  if (norm == typename Derived::Scalar(0))
    throw std::invalid_argument("l2_normalize: zero vector");
  return e.reshaped() / norm;
}

/// Row-wise normalization; zero rows are rejected.
template <typename Derived>
MatrixX<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  MatrixX<typename Derived::Scalar> out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = l2_normalize(out.row(i)).transpose();
  return out;
}

/// Similarity scores under the configured convention.
template <typename DerivedQ, typename DerivedM>
VectorX<typename DerivedQ::Scalar> similarity_scores(const Eigen::MatrixBase<DerivedQ>& query,
                                                     const Eigen::MatrixBase<DerivedM>& rows,
                                                     Similarity mode) {
  if (mode == Similarity::kInnerProduct) return dot_scores(query, rows);
  return dot_scores(l2_normalize(query), l2_normalize_rows(rows));
}

/// Arithmetic mean over rows of `seq` where `mask` is true (all rows when
/// mask is empty).
template <typename Derived>
VectorX<typename Derived::Scalar> mean_pool(const Eigen::MatrixBase<Derived>& seq,
                                            std::span<const bool> mask = {}) {
  using Scalar = typename Derived::Scalar;
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != seq.rows())
    throw std::invalid_argument("mean_pool: mask length does not match sequence length");
  // Running mean, so identical rows reproduce the row bit-for-bit.
  VectorX<Scalar> mean = VectorX<Scalar>::Zero(seq.cols());
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < seq.rows(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++count;
    if (count == 1)
      mean = seq.row(i).transpose();
    else
      mean += (seq.row(i).transpose() - mean) / static_cast<Scalar>(count);
  }
  if (count == 0) throw std::invalid_argument("mean_pool: empty sequence after masking");
  return mean;
}

// Binary persistence, little-endian:
//   bytes 0-3  magic "MCEM"
//   bytes 4-11 int64 rows N
//   bytes 12-19 int64 cols D
//   then N*D float64 values, row-major.
// The optional key sidecar is a UTF-8 text file with one key per line.
void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);

void save_embedding_matrix(const std::string& matrix_path, const std::string& keys_path,
                           const EmbeddingMatrix<double>& m);
EmbeddingMatrix<double> load_embedding_matrix(const std::string& matrix_path,
                                              const std::string& keys_path = {});

}  // namespace mcvl

#include "mcvl/embeddings.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "mcvl/common.hpp"

namespace mcvl {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'E', 'M'};

}  // namespace

void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  const std::int64_t rows = m.rows();
  const std::int64_t cols = m.cols();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!out) throw DataError("short write to " + path);
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  char magic[4];
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": not a matrix file");
  if (rows < 0 || cols < 0) throw DataError(path + ": negative shape");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw DataError(path + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes");
  if (!m.allFinite()) throw DataError(path + ": non-finite value");
  return m;
}

void save_embedding_matrix(const std::string& matrix_path, const std::string& keys_path,
                           const EmbeddingMatrix<double>& m) {
  save_matrix(matrix_path, m.data());
  if (keys_path.empty()) return;
  std::ofstream out(keys_path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + keys_path);
  for (const auto& k : m.keys()) out << k << '\n';
}

EmbeddingMatrix<double> load_embedding_matrix(const std::string& matrix_path,
                                              const std::string& keys_path) {
  Matrix data = load_matrix(matrix_path);
  std::vector<std::string> keys;
  if (!keys_path.empty()) {
    std::ifstream in(keys_path);
    if (!in) throw DataError("cannot read " + keys_path);
    for (std::string line; std::getline(in, line);) keys.push_back(line);
    if (static_cast<Eigen::Index>(keys.size()) != data.rows())
      throw DataError(keys_path + ": " + std::to_string(keys.size()) + " keys for " +
                      std::to_string(data.rows()) + " rows");
  }
  try {
    return EmbeddingMatrix<double>(std::move(data), std::move(keys));
  } catch (const std::invalid_argument& e) {
    throw DataError(matrix_path + ": " + e.what());
  }
}

}  // namespace mcvl

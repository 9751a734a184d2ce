#include "mcvl/encoders.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mcvl/common.hpp"

namespace mcvl {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return Fnv1a{}.update_pod(a).update_pod(b).digest();
}

}  // namespace

SyntheticEncoderPair::SyntheticEncoderPair(Eigen::Index dim, std::uint64_t seed, double noise_sigma)
    : dim_(dim), seed_(seed), noise_sigma_(noise_sigma) {
  if (dim <= 0) throw std::invalid_argument("SyntheticEncoderPair: dim must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("SyntheticEncoderPair: sigma must be >= 0");
}

void SyntheticEncoderPair::plant(std::string video_id,
                                 std::vector<std::vector<std::string>> words_per_segment) {
  if (words_per_segment.empty())
    throw std::invalid_argument("plant: video '" + video_id + "' has no segments");
  for (const auto& seg : words_per_segment)
    if (seg.empty()) throw std::invalid_argument("plant: empty segment in '" + video_id + "'");
  planted_[std::move(video_id)] = std::move(words_per_segment);
}

bool SyntheticEncoderPair::knows(std::string_view video_id) const {
  return planted_.find(video_id) != planted_.end();
}

std::vector<std::string> SyntheticEncoderPair::video_ids() const {
  std::vector<std::string> ids;
  ids.reserve(planted_.size());
  for (const auto& [id, _] : planted_) ids.push_back(id);
  return ids;
}

const std::vector<std::vector<std::string>>& SyntheticEncoderPair::planted(
    std::string_view video_id) const {
  auto it = planted_.find(video_id);
  if (it == planted_.end()) throw DataError("missing features for video '" + std::string(video_id) + "'");
  return it->second;
}

Vector SyntheticEncoderPair::encode_word(std::string_view word) const {
  if (word.empty()) throw std::invalid_argument("encode_word: empty word");
  std::mt19937_64 rng(mix(fnv1a(word), seed_));
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) v(i) = dist(rng);
  return l2_normalize(v);
}

VideoFeatures SyntheticEncoderPair::encode_video(std::string_view video_id) const {
  const auto& segments = planted(video_id);
  VideoFeatures out;
  out.segments.resize(static_cast<Eigen::Index>(segments.size()), dim_);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    Vector acc = Vector::Zero(dim_);
    for (const auto& w : segments[s]) acc += encode_word(w);
    Vector row = segments[s].size() == 1 ? encode_word(segments[s].front()) : l2_normalize(acc);
    if (noise_sigma_ > 0.0) {
      std::mt19937_64 rng(mix(mix(fnv1a(video_id), seed_), s));
      for (Eigen::Index i = 0; i < dim_; ++i) row(i) += noise_sigma_ * noise(rng);
    }
    out.segments.row(static_cast<Eigen::Index>(s)) = row.transpose();
  }
  return out;
}

PrecomputedFeatureStore::PrecomputedFeatureStore(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot read feature manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw DataError(manifest_path + ":" + std::to_string(line_no) +
                      ": expected 'video_id<TAB>path'");
    std::string id = line.substr(0, tab);
    const fs::path file = base / line.substr(tab + 1);
    VideoFeatures f;
    try {
      f.segments = load_matrix(file.string());
    } catch (const DataError& e) {
      throw DataError(manifest_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (f.length() == 0)
      throw DataError(manifest_path + ":" + std::to_string(line_no) + ": video has no segments");
    if (dim_ == 0) dim_ = f.dim();
    if (f.dim() != dim_)
      throw DataError(manifest_path + ":" + std::to_string(line_no) + ": feature dim " +
                      std::to_string(f.dim()) + " != " + std::to_string(dim_));
    if (!features_.emplace(std::move(id), std::move(f)).second)
      throw DataError(manifest_path + ":" + std::to_string(line_no) + ": duplicate video id");
  }
  if (features_.empty()) throw DataError(manifest_path + ": empty manifest");
}

VideoFeatures PrecomputedFeatureStore::encode_video(std::string_view video_id) const {
  auto it = features_.find(video_id);
  if (it == features_.end())
    throw DataError("missing features for video '" + std::string(video_id) + "'");
  return it->second;
}

std::vector<std::string> PrecomputedFeatureStore::video_ids() const {
  std::vector<std::string> ids;
  ids.reserve(features_.size());
  for (const auto& [id, _] : features_) ids.push_back(id);
  return ids;
}

std::string write_feature_store(const std::string& dir,
                                const std::map<std::string, VideoFeatures>& features) {
  const fs::path root(dir);
  fs::create_directories(root / "features");
  const fs::path manifest = root / "manifest.tsv";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError("cannot write " + manifest.string());
  std::size_t i = 0;
  for (const auto& [id, f] : features) {
    if (id.find('\t') != std::string::npos || id.find('\n') != std::string::npos)
      throw std::invalid_argument("video id contains a tab or newline: " + id);
    std::ostringstream name;
    name << "features/" << i++ << ".bin";
    save_matrix((root / name.str()).string(), f.segments);
    out << id << '\t' << name.str() << '\n';
  }
  return manifest.string();
}

std::uint64_t features_digest(const FrozenVideoEncoder& encoder, const std::vector<std::string>& ids) {
  Fnv1a h;
  for (const auto& id : ids) {
    const Matrix m = encoder.encode_video(id).segments;
    h.update(id);
    h.update(std::as_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))));
  }
  return h.digest();
}

std::uint64_t words_digest(const FrozenTextEncoder& encoder, const std::vector<std::string>& words) {
  Fnv1a h;
  for (const auto& w : words) {
    const Vector v = encoder.encode_word(w);
    h.update(w);
    h.update(std::as_bytes(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))));
  }
  return h.digest();
}

}  // namespace mcvl

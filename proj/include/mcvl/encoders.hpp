#pragma once

// Frozen video / word encoders and the precomputed feature store.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mcvl/embeddings.hpp"

namespace mcvl {

/// Segment features of one video: T x D, one row per segment.
struct VideoFeatures {
  Matrix segments;
  double segment_seconds = 1.5;

  [[nodiscard]] Eigen::Index length() const { return segments.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return segments.cols(); }
};

class FrozenVideoEncoder {
 public:
  virtual ~FrozenVideoEncoder() = default;
  /// Throws DataError for an id the backend does not know.
  [[nodiscard]] virtual VideoFeatures encode_video(std::string_view video_id) const = 0;
  [[nodiscard]] virtual Eigen::Index dim() const = 0;
  [[nodiscard]] virtual double segment_seconds() const { return 1.5; }
};

class FrozenTextEncoder {
 public:
  virtual ~FrozenTextEncoder() = default;
  /// Throws std::invalid_argument for an empty word.
  [[nodiscard]] virtual Vector encode_word(std::string_view word) const = 0;
  [[nodiscard]] virtual Eigen::Index dim() const = 0;
};

/// Seeded stand-in for a pretrained contrastive dual encoder.
///
/// A word maps to a unit vector drawn from a generator seeded by the word's
/// hash and the pair's seed. A video is a list of segments, each planted with
/// one or more words; its feature is the renormalized mean of the planted
/// word vectors plus isotropic Gaussian noise of standard deviation sigma per
/// coordinate. At sigma = 0 inner-product retrieval ranks planted words first.
class SyntheticEncoderPair final : public FrozenVideoEncoder, public FrozenTextEncoder {
 public:
  SyntheticEncoderPair(Eigen::Index dim, std::uint64_t seed, double noise_sigma);

  void plant(std::string video_id, std::vector<std::vector<std::string>> words_per_segment);
  [[nodiscard]] bool knows(std::string_view video_id) const;
  [[nodiscard]] std::vector<std::string> video_ids() const;
  [[nodiscard]] const std::vector<std::vector<std::string>>& planted(std::string_view video_id) const;

  [[nodiscard]] VideoFeatures encode_video(std::string_view video_id) const override;
  [[nodiscard]] Vector encode_word(std::string_view word) const override;
  [[nodiscard]] Eigen::Index dim() const override { return dim_; }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] double noise_sigma() const { return noise_sigma_; }

 private:
  Eigen::Index dim_;
  std::uint64_t seed_;
  double noise_sigma_;
  std::map<std::string, std::vector<std::vector<std::string>>, std::less<>> planted_;
};

/// Read-only map from video id to features, loaded from a manifest.
///
/// Layout: `manifest.tsv` holds lines `video_id<TAB>relative/path.bin`;
/// every referenced file is a matrix file (see save_matrix) of shape T x D.
class PrecomputedFeatureStore final : public FrozenVideoEncoder {
 public:
  explicit PrecomputedFeatureStore(const std::string& manifest_path);

  [[nodiscard]] VideoFeatures encode_video(std::string_view video_id) const override;
  [[nodiscard]] Eigen::Index dim() const override { return dim_; }
  [[nodiscard]] std::vector<std::string> video_ids() const;
  [[nodiscard]] std::size_t size() const { return features_.size(); }

 private:
  Eigen::Index dim_ = 0;
  std::map<std::string, VideoFeatures, std::less<>> features_;
};

/// Writes one feature file per video under `dir/features/` plus
/// `dir/manifest.tsv`. Returns the manifest path.
std::string write_feature_store(const std::string& dir,
                                const std::map<std::string, VideoFeatures>& features);

/// Order-sensitive digest of encoder outputs, for frozen-ness checks.
std::uint64_t features_digest(const FrozenVideoEncoder& encoder, const std::vector<std::string>& ids);
std::uint64_t words_digest(const FrozenTextEncoder& encoder, const std::vector<std::string>& words);

}  // namespace mcvl

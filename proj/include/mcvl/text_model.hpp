#pragma once

// Trainable contrastive text model interface and the bundled toy backend.

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcvl/nn.hpp"

namespace mcvl {

using autograd::Tape;
using autograd::Var;

/// Lowercases, splits on whitespace and strips surrounding punctuation.
std::vector<std::string> split_words(std::string_view text);

/// Word-level tokenizer over a closed token list; id 0 is "[UNK]".
class WordTokenizer {
 public:
  static constexpr std::string_view kUnknown = "[UNK]";

  WordTokenizer();
  /// Sorted unique words of `corpus` after split_words.
  static WordTokenizer from_corpus(const std::vector<std::string>& corpus);
  static WordTokenizer load(const std::string& path);
  void save(const std::string& path) const;

  [[nodiscard]] std::vector<int> encode(std::string_view text) const;
  [[nodiscard]] int id(std::string_view word) const;
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  explicit WordTokenizer(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Stable adapter contract for any trainable text encoder G.
///
/// `embed` is the input layer (token + position embeddings followed by the
/// post-embedding normalization); `contextualize` runs the transformer stack.
/// Parameters are exposed as an ordered list so callers can get/set values.
class TrainableTextModel {
 public:
  virtual ~TrainableTextModel() = default;

  [[nodiscard]] virtual std::vector<int> tokenize(std::string_view text) const = 0;
  [[nodiscard]] virtual Eigen::Index hidden_dim() const = 0;
  [[nodiscard]] virtual std::size_t max_length() const = 0;
  [[nodiscard]] virtual nn::Pooling pooling() const = 0;

  [[nodiscard]] virtual Var embed(Tape& tape, std::span<const int> ids) const = 0;
  [[nodiscard]] virtual Var contextualize(Var embedded) const = 0;
  [[nodiscard]] virtual const nn::LayerNorm& embedding_norm() const = 0;

  [[nodiscard]] virtual autograd::ParameterList parameters() = 0;
  [[nodiscard]] virtual autograd::ConstParameterList parameters() const = 0;
  /// Deep copy with independent parameters.
  [[nodiscard]] virtual std::unique_ptr<TrainableTextModel> clone() const = 0;
};

struct TextEncoding {
  Var tokens;  // L x H contextualized outputs
  Var pooled;  // 1 x H
};

/// Cuts `ids` to `max_length`, dropping the tail (and logging a warning).
std::vector<int> truncate_tail(std::vector<int> ids, std::size_t max_length);

/// Runs G on token ids, truncating overlong input.
TextEncoding encode_text(Tape& tape, const TrainableTextModel& model, std::vector<int> ids);
/// Inference convenience: pooled embedding as a vector.
Vector encode_text_pooled(const TrainableTextModel& model, std::string_view text);

struct ToyTextConfig {
  Eigen::Index hidden = 32;
  int layers = 2;
  int heads = 2;
  Eigen::Index ffn_dim = 64;
  std::size_t max_length = 128;
  nn::Pooling pooling = nn::Pooling::kMean;
  std::uint64_t seed = 0;
  // Spread of the post-embedding normalization parameters around (1, 0) at
  // initialization, standing in for a pretrained model's non-trivial values.
  double embedding_norm_spread = 0.1;
};

/// Small transformer text model trainable from scratch (2-4 layers).
class ToyTextTransformer final : public TrainableTextModel {
 public:
  ToyTextTransformer(WordTokenizer tokenizer, const ToyTextConfig& cfg);

  [[nodiscard]] std::vector<int> tokenize(std::string_view text) const override;
  [[nodiscard]] Eigen::Index hidden_dim() const override { return cfg_.hidden; }
  [[nodiscard]] std::size_t max_length() const override { return cfg_.max_length; }
  [[nodiscard]] nn::Pooling pooling() const override { return cfg_.pooling; }

  [[nodiscard]] Var embed(Tape& tape, std::span<const int> ids) const override;
  [[nodiscard]] Var contextualize(Var embedded) const override;
  [[nodiscard]] const nn::LayerNorm& embedding_norm() const override { return embedding_norm_; }

  [[nodiscard]] autograd::ParameterList parameters() override;
  [[nodiscard]] autograd::ConstParameterList parameters() const override;
  [[nodiscard]] std::unique_ptr<TrainableTextModel> clone() const override;

  [[nodiscard]] const ToyTextConfig& config() const { return cfg_; }
  [[nodiscard]] const WordTokenizer& tokenizer() const { return tokenizer_; }

 private:
  WordTokenizer tokenizer_;
  ToyTextConfig cfg_;
  mutable autograd::Parameter token_embeddings_;
  mutable autograd::Parameter position_embeddings_;
  nn::LayerNorm embedding_norm_;
  std::vector<nn::TransformerBlock> blocks_;
};

}  // namespace mcvl

#pragma once

// The four video-representation x fusion variants behind one model type.
//
//   kContiMulti  H(G(t) ++ A(F_V(v)))          continuous features, fusion transformer
//   kContiText   G(embed(t) ++ P(F_V(v)))      continuous features, projector into G
//   kTextMulti   H(G(t) ++ G(words(v)))        retrieved words, fusion transformer
//   kTextText    G(t ++ words(v))              retrieved words, text model only
//
// `++` concatenates along the length axis; A is a linear width adapter used
// when the video feature width differs from G's hidden width. Every variant
// pools its output sequence into one embedding of width G.hidden, scored
// against answers encoded by a separate answer model G_A.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcvl/config.hpp"
#include "mcvl/encoders.hpp"
#include "mcvl/nn.hpp"
#include "mcvl/text_model.hpp"
#include "mcvl/token_retrieval.hpp"

namespace mcvl {

enum class FusionVariant { kContiMulti, kContiText, kTextMulti, kTextText };

std::string variant_name(FusionVariant v);
FusionVariant parse_variant(std::string_view name);
inline constexpr FusionVariant kAllVariants[] = {FusionVariant::kContiMulti, FusionVariant::kContiText,
                                                 FusionVariant::kTextMulti, FusionVariant::kTextText};
[[nodiscard]] inline bool uses_text_tokens(FusionVariant v) {
  return v == FusionVariant::kTextMulti || v == FusionVariant::kTextText;
}

struct FusionConfig {
  FusionVariant variant = FusionVariant::kTextText;
  ToyTextConfig text;
  int fusion_blocks = 2;
  Eigen::Index fusion_ffn_dim = 64;
  Eigen::Index fusion_max_length = 256;
  Eigen::Index video_dim = 64;
  /// Copy G's post-embedding normalization into the projector's last
  /// normalization at construction (kContiText only).
  bool projector_norm_init = true;
  bool use_asr = false;
  bool temporal_markers = false;
  nn::Pooling pooling = nn::Pooling::kMean;
  TokenConfig tokens;

  static FusionConfig from_config(const KeyValueConfig& cfg);
  void write_to(KeyValueConfig& cfg) const;
};

/// Video side of one sample; which member is needed depends on the variant.
struct VideoInput {
  const VideoFeatures* features = nullptr;
  const TokenizedVideo* tokens = nullptr;
};

struct ParameterGroup {
  std::string name;
  std::size_t count = 0;
};

class FusionModel {
 public:
  /// Builds G as a toy text transformer over `tokenizer`; G_A starts as an
  /// exact copy of G and never shares parameters with it afterwards.
  FusionModel(const FusionConfig& cfg, WordTokenizer tokenizer);
  /// Adapter path: any TrainableTextModel as G (G_A cloned from it).
  FusionModel(const FusionConfig& cfg, std::unique_ptr<TrainableTextModel> text_model);

  FusionModel(const FusionModel& other);
  FusionModel& operator=(const FusionModel& other);
  FusionModel(FusionModel&&) noexcept = default;
  FusionModel& operator=(FusionModel&&) noexcept = default;

  [[nodiscard]] const FusionConfig& config() const { return cfg_; }
  [[nodiscard]] FusionVariant variant() const { return cfg_.variant; }
  [[nodiscard]] Eigen::Index embedding_dim() const { return text_->hidden_dim(); }

  /// Fused embedding e_{v,t} (1 x embedding_dim) for the configured variant.
  Var fuse(Tape& tape, const VideoInput& video, std::string_view question,
           std::optional<std::string_view> asr = std::nullopt) const;

  Var fuse_conti_multi(Tape& tape, const VideoFeatures& video, std::string_view text) const;
  Var fuse_conti_text(Tape& tape, const VideoFeatures& video, std::string_view text) const;
  Var fuse_text_multi(Tape& tape, const TokenizedVideo& video, std::string_view text) const;
  Var fuse_text_text(Tape& tape, const TokenizedVideo& video, std::string_view text) const;

  /// G_A pooled embedding (1 x embedding_dim); empty answers are rejected.
  Var encode_answer(Tape& tape, std::string_view answer) const;
  [[nodiscard]] Vector encode_answer(std::string_view answer) const;
  [[nodiscard]] Vector fuse(const VideoInput& video, std::string_view question,
                            std::optional<std::string_view> asr = std::nullopt) const;

  /// Text fed to G for kTextText: question, then ASR, then video words.
  [[nodiscard]] std::string assemble_text(std::string_view question, std::optional<std::string_view> asr,
                                          const TokenizedVideo* video) const;
  /// Question plus ASR per the configured placement.
  [[nodiscard]] std::string text_side(std::string_view question, std::optional<std::string_view> asr) const;

  [[nodiscard]] TrainableTextModel& text_model() { return *text_; }
  [[nodiscard]] const TrainableTextModel& text_model() const { return *text_; }
  [[nodiscard]] TrainableTextModel& answer_model() { return *answer_; }
  [[nodiscard]] const TrainableTextModel& answer_model() const { return *answer_; }
  [[nodiscard]] const nn::ShallowTransformer* fusion_transformer() const { return fusion_ ? &*fusion_ : nullptr; }
  [[nodiscard]] const nn::ShallowTransformer* projector() const { return projector_ ? &*projector_ : nullptr; }
  [[nodiscard]] const nn::Linear* video_adapter() const { return adapter_ ? &*adapter_ : nullptr; }

  /// Every trainable parameter: G, G_A, then H / P / adapter when present.
  [[nodiscard]] autograd::ParameterList trainable_parameters();
  [[nodiscard]] autograd::ConstParameterList trainable_parameters() const;
  [[nodiscard]] std::vector<ParameterGroup> parameter_report() const;

  /// Checkpoint directory: manifest.json (variant, dims, config, config
  /// hash), config.cfg, tokenizer.txt, and one parameter blob per group
  /// (text.params, answer.params, fusion.params, projector.params,
  /// adapter.params as present).
  void save(const std::string& dir) const;
  static FusionModel load(const std::string& dir);

 private:
  void build_modules();
  Var pooled(Var seq) const { return nn::pool(seq, cfg_.pooling); }

  FusionConfig cfg_;
  std::unique_ptr<TrainableTextModel> text_;
  std::unique_ptr<TrainableTextModel> answer_;
  std::optional<nn::ShallowTransformer> fusion_;
  std::optional<nn::ShallowTransformer> projector_;
  std::optional<nn::Linear> adapter_;
};

}  // namespace mcvl

#pragma once

// Training harness shared by all four variants: samples, the video bank,
// Adam with per-epoch decay and global-norm clipping, few-shot subsampling
// and run records.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcvl/config.hpp"
#include "mcvl/datasets.hpp"
#include "mcvl/fusion.hpp"
#include "mcvl/objectives.hpp"

namespace mcvl {

struct TrainConfig {
  double learning_rate = 0.00005;
  double lr_decay_per_epoch = 0.9;
  int batch_size = 256;
  int epochs = 20;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  double fewshot_fraction = 1.0;
  bool nested_fewshot = false;
  double temperature = 1.0;
  /// Decoupled weight decay (0 disables it, giving plain Adam).
  double weight_decay = 0.0;
  Task task = Task::kOpenQa;
  /// Variant, use_asr, k, pool_kernel, max_segments and model sizes.
  FusionConfig model;

  /// Unknown keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  [[nodiscard]] KeyValueConfig to_config() const;
  /// Hex FNV-1a of the canonical config text.
  [[nodiscard]] std::string hash() const;
  /// Throws DataError for non-positive values or a fraction outside (0, 1].
  void validate() const;
};

/// learning_rate * decay^epoch, epoch counted from 0.
inline double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(cfg.lr_decay_per_epoch, epoch);
}

/// One training or evaluation pair: the text side fused with the video, and
/// the target encoded by the answer model (QA answer or retrieval caption).
struct Sample {
  std::string video_id;
  std::string text;
  std::optional<std::string> asr;
  std::string target;
};

std::vector<Sample> samples_from_qa(const std::vector<QaRecord>& records);
/// Text side is the speech transcript, target the caption.
std::vector<Sample> samples_from_retrieval(const std::vector<RetrievalRecord>& records);

/// Per-video inputs: continuous features and/or retrieved text tokens.
struct VideoBank {
  std::map<std::string, VideoFeatures, std::less<>> features;
  std::map<std::string, TokenizedVideo, std::less<>> tokens;

  /// Throws DataError when the variant's representation is missing for `id`.
  [[nodiscard]] VideoInput input(std::string_view id, FusionVariant variant) const;
};

/// Features for every id in `ids` from `encoder`, and tokens when `vocab` is given.
VideoBank build_video_bank(const FrozenVideoEncoder& encoder, const std::vector<std::string>& ids,
                           const Vocabulary* vocab, const TokenConfig& tokens);

/// Word list for the toy text model: every sample text and target, ASR,
/// multiple-choice negatives, all retrieved video words and the temporal
/// markers.
WordTokenizer tokenizer_for(const std::vector<Sample>& samples, const VideoBank& bank,
                            const std::vector<std::string>& extra_text = {});

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  double max_grad_norm_before_clip = 0.0;
  double max_grad_norm_after_clip = 0.0;
  int steps = 0;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string variant;
  std::size_t train_samples = 0;
  std::vector<EpochStats> epochs;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
};

/// Line-delimited run records; `append_run_record` never rewrites old lines.
void append_run_record(const std::string& path, const RunRecord& record);
std::vector<RunRecord> load_run_records(const std::string& path);

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8) and
/// optional decoupled weight decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(autograd::ParameterList params, double weight_decay = 0.0, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8);
  void step(double learning_rate);
  [[nodiscard]] long long steps() const { return t_; }

 private:
  autograd::ParameterList params_;
  std::vector<Matrix> m_, v_;
  double weight_decay_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainHooks {
  /// Called after every epoch; may fill `record.metrics`.
  std::function<void(const EpochStats&, RunRecord&)> on_epoch;
};

/// Batched contrastive training. QA tasks use the NCE loss against in-batch
/// answers, retrieval the symmetric loss. A non-finite loss aborts with
/// NumericError describing the failing batch. The sample set may be a
/// few-shot subset of `full_size` items; the iteration count always matches
/// training on `full_size` items (subsets are cycled with reshuffling).
RunRecord train(FusionModel& model, const std::vector<Sample>& samples, const VideoBank& bank,
                const TrainConfig& cfg, std::size_t full_size = 0, const TrainHooks& hooks = {});

/// Score matrix and loss for one batch; exposed for gradient checks.
Var batch_loss(Tape& tape, const FusionModel& model, const std::vector<const Sample*>& batch,
               const VideoBank& bank, Task task, double temperature = 1.0);

/// Indices of a seeded uniform sample without replacement of
/// ceil(fraction * n) items, in ascending order. With `nested`, smaller
/// fractions at one seed are prefixes of a single permutation and so are
/// subsets of larger ones; otherwise the permutation also depends on the
/// fraction and no containment is promised.
std::vector<std::size_t> fewshot_indices(std::size_t n, double fraction, std::uint64_t seed,
                                         bool nested = false);

template <typename T>
std::vector<T> fewshot_subsample(const std::vector<T>& data, double fraction, std::uint64_t seed,
                                 bool nested = false) {
  std::vector<T> out;
  for (std::size_t i : fewshot_indices(data.size(), fraction, seed, nested)) out.push_back(data[i]);
  return out;
}

}  // namespace mcvl

#pragma once

// Dataset records, line-delimited JSON ingestion, the multichannel speech
// filter and the planted-signal synthetic generator.
//
// QA file, one object per line:
//   {"video_id": str, "question": str, "answers": [str, ...],
//    "negatives": [str, str, str]   (optional, multiple choice),
//    "asr": str                     (optional)}
// Retrieval file, one object per line:
//   {"video_id": str, "speech": str, "caption": str}

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "mcvl/config.hpp"
#include "mcvl/encoders.hpp"

namespace mcvl {

struct QaRecord {
  std::string video_id;
  std::string question;
  std::vector<std::string> answers;    // answers[0] is the training target
  std::vector<std::string> negatives;  // empty or exactly 3
  std::optional<std::string> asr;

  bool operator==(const QaRecord&) const = default;
};

struct RetrievalRecord {
  std::string video_id;
  std::string speech;
  std::string caption;

  bool operator==(const RetrievalRecord&) const = default;
};

enum class Task { kOpenQa, kMultipleChoice, kRetrieval };

std::string task_name(Task t);
Task parse_task(std::string_view name);

/// All-or-nothing; schema violations throw DataError naming field and line.
std::vector<QaRecord> load_qa(const std::string& path);
std::vector<RetrievalRecord> load_retrieval(const std::string& path);
void save_qa(const std::string& path, const std::vector<QaRecord>& records);
void save_retrieval(const std::string& path, const std::vector<RetrievalRecord>& records);

/// Keeps records whose speech has at least `min_content_words` tokens outside
/// the stopword list.
std::vector<RetrievalRecord> filter_multichannel(const std::vector<RetrievalRecord>& records,
                                                 const std::unordered_set<std::string_view>& stopwords,
                                                 int min_content_words = 5);

struct SyntheticSpec {
  Task task = Task::kOpenQa;
  int num_samples = 1000;  // training split
  int test_samples = 200;
  int vocab_size = 200;
  int answers_per_corpus = 100;
  int segments = 4;
  int planted_per_segment = 2;
  int context_words = 2;
  int annotations = 5;
  bool with_negatives = false;
  Eigen::Index dim = 64;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  static SyntheticSpec from_config(const KeyValueConfig& cfg);
  [[nodiscard]] KeyValueConfig to_config() const;
  /// Throws std::invalid_argument on inconsistent counts.
  void validate() const;
};

struct SyntheticDataset {
  SyntheticSpec spec;
  std::vector<std::string> vocabulary;  // generated words; answers first
  std::vector<std::string> answer_words;
  std::vector<QaRecord> train_qa, test_qa;
  std::vector<RetrievalRecord> train_retrieval, test_retrieval;
  SyntheticEncoderPair encoder;
  /// Sentences from which the answer-word vocabulary is built.
  std::vector<std::string> corpus;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Writes train.jsonl, test.jsonl, manifest.tsv + features/, corpus.txt,
/// planted.jsonl (ground-truth words per segment), encoder.json and spec.cfg.
void write_synthetic(const SyntheticDataset& data, const std::string& dir);

/// Synthetic encoder description stored as encoder.json.
void save_encoder_description(const std::string& path, const SyntheticEncoderPair& enc);
SyntheticEncoderPair load_encoder_description(const std::string& path);

}  // namespace mcvl

#pragma once

// Open-ended, multiple-choice and retrieval evaluation, plus the overlap
// statistic between answers and retrieved video words. Score-level helpers
// are pure; the model-level entry points only compute scores and defer to
// them.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcvl/datasets.hpp"
#include "mcvl/fusion.hpp"
#include "mcvl/train.hpp"

namespace mcvl {

/// Lowercase, trim, collapse inner whitespace, strip trailing punctuation.
std::string normalize_answer(std::string_view answer);

enum class CreditRule {
  kMinOfHalfMatches,  // min(1, m / 2) over the annotations
  kExactMatch,        // 1 if the first annotation matches, else 0
};

/// Credit of one prediction against its annotations (both normalized here).
double answer_credit(std::string_view prediction, const std::vector<std::string>& annotations,
                     CreditRule rule = CreditRule::kMinOfHalfMatches);

/// Unique normalized answers (first-seen order) and their answer-model
/// embeddings, one row per answer.
class AnswerCorpus {
 public:
  AnswerCorpus(const std::vector<std::string>& answers, const FusionModel& model);
  /// Every annotation of every record.
  static AnswerCorpus from_records(const std::vector<QaRecord>& records, const FusionModel& model);

  [[nodiscard]] const std::vector<std::string>& answers() const { return answers_; }
  [[nodiscard]] const Matrix& embeddings() const { return embeddings_; }
  [[nodiscard]] std::size_t size() const { return answers_.size(); }

 private:
  std::vector<std::string> answers_;
  Matrix embeddings_;
};

/// Index of the highest score; ties resolve to the lowest index.
Eigen::Index argmax_first(const Vector& scores);

double open_ended_accuracy(const std::vector<std::string>& predictions,
                           const std::vector<std::vector<std::string>>& annotations,
                           CreditRule rule = CreditRule::kMinOfHalfMatches);

/// Correct iff `scores[positive]` is strictly greater than every other score.
bool choice_correct(std::span<const double> scores, std::size_t positive);
/// Each row holds four candidate scores; `positives[i]` indexes row i's answer.
double multiple_choice_accuracy(const Matrix& scores, std::span<const int> positives);

struct RetrievalMetrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;  // percent
  double average = 0.0;
  std::size_t queries = 0;
};

/// 1-based rank of `truth` in `scores`: higher scores first, equal scores in
/// corpus-index order.
std::size_t rank_of(const Vector& scores, Eigen::Index truth);
RetrievalMetrics retrieval_metrics_from_ranks(std::span<const std::size_t> ranks);
/// scores(q, c): query q against corpus item c; `truth[q]` is q's item.
RetrievalMetrics retrieval_metrics(const Matrix& scores, std::span<const int> truth);

/// Fraction of samples whose normalized answer shares a word with the
/// sample's pooled video words. Empty input gives 0.
double overlap_statistic(const std::vector<std::string>& answers,
                         const std::vector<std::vector<std::string>>& video_words);

struct OpenEndedResult {
  double accuracy = 0.0;
  std::vector<std::string> predictions;
};

OpenEndedResult eval_open_ended(const FusionModel& model, const std::vector<QaRecord>& records,
                                const VideoBank& bank, const AnswerCorpus& corpus,
                                CreditRule rule = CreditRule::kMinOfHalfMatches);
/// Candidates are answers[0] followed by the three negatives.
double eval_multiple_choice(const FusionModel& model, const std::vector<QaRecord>& records,
                            const VideoBank& bank);
/// Query i is caption i; the corpus is every (video, speech) pair and query
/// i's ground truth is pair i.
RetrievalMetrics eval_retrieval(const FusionModel& model, const std::vector<RetrievalRecord>& records,
                                const VideoBank& bank);

struct EvalReportLine {
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;
  std::string config_hash;
};

/// One JSON object per line: {"metric", "value", "count", "config_hash"}.
void write_eval_report(const std::string& path, const std::vector<EvalReportLine>& lines);
std::vector<EvalReportLine> load_eval_report(const std::string& path);

}  // namespace mcvl

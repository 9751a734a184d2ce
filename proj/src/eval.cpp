#include "mcvl/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_set>

#include "mcvl/common.hpp"
#include "mcvl/text_model.hpp"

namespace mcvl {

using json = nlohmann::json;

std::string normalize_answer(std::string_view answer) {
  std::string out;
  bool pending_space = false;
  for (char c : answer) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' '))
    out.pop_back();
  return out;
}

double answer_credit(std::string_view prediction, const std::vector<std::string>& annotations,
                     CreditRule rule) {
  if (annotations.empty()) throw std::invalid_argument("answer_credit: no annotations");
  const std::string p = normalize_answer(prediction);
  if (rule == CreditRule::kExactMatch) return normalize_answer(annotations.front()) == p ? 1.0 : 0.0;
  int matches = 0;
  for (const auto& a : annotations) matches += normalize_answer(a) == p ? 1 : 0;
  return std::min(1.0, matches / 2.0);
}

AnswerCorpus::AnswerCorpus(const std::vector<std::string>& answers, const FusionModel& model) {
  std::unordered_set<std::string> seen;
  for (const auto& a : answers) {
    std::string n = normalize_answer(a);
    if (!n.empty() && seen.insert(n).second) answers_.push_back(std::move(n));
  }
  if (answers_.empty()) throw DataError("answer corpus is empty");
  embeddings_.resize(static_cast<Eigen::Index>(answers_.size()), model.embedding_dim());
  for (std::size_t i = 0; i < answers_.size(); ++i)
    embeddings_.row(static_cast<Eigen::Index>(i)) = model.encode_answer(answers_[i]).transpose();
}

AnswerCorpus AnswerCorpus::from_records(const std::vector<QaRecord>& records, const FusionModel& model) {
  std::vector<std::string> all;
  for (const auto& r : records) all.insert(all.end(), r.answers.begin(), r.answers.end());
  return AnswerCorpus(all, model);
}

Eigen::Index argmax_first(const Vector& scores) {
  if (scores.size() == 0) throw std::invalid_argument("argmax_first: empty scores");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = i;
  return best;
}

double open_ended_accuracy(const std::vector<std::string>& predictions,
                           const std::vector<std::vector<std::string>>& annotations, CreditRule rule) {
  if (predictions.size() != annotations.size())
    throw std::invalid_argument("open_ended_accuracy: one prediction per sample required");
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += answer_credit(predictions[i], annotations[i], rule);
  return total / static_cast<double>(predictions.size());
}

bool choice_correct(std::span<const double> scores, std::size_t positive) {
  if (positive >= scores.size()) throw std::invalid_argument("choice_correct: positive out of range");
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != positive && !(scores[positive] > scores[j])) return false;
  return true;
}

double multiple_choice_accuracy(const Matrix& scores, std::span<const int> positives) {
  if (scores.cols() != 4) throw std::invalid_argument("multiple choice needs exactly 4 candidates per sample");
  if (static_cast<Eigen::Index>(positives.size()) != scores.rows())
    throw std::invalid_argument("multiple_choice_accuracy: one positive index per row required");
  if (scores.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double row[4] = {scores(i, 0), scores(i, 1), scores(i, 2), scores(i, 3)};
    if (positives[static_cast<std::size_t>(i)] < 0) throw std::invalid_argument("negative positive index");
    correct += choice_correct(row, static_cast<std::size_t>(positives[static_cast<std::size_t>(i)])) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

std::size_t rank_of(const Vector& scores, Eigen::Index truth) {
  if (truth < 0 || truth >= scores.size()) throw DataError("query has no ground-truth item in the corpus");
  const double s = scores(truth);
  std::size_t ahead = 0;
  for (Eigen::Index j = 0; j < scores.size(); ++j)
    if (scores(j) > s || (scores(j) == s && j < truth)) ++ahead;
  return ahead + 1;
}

RetrievalMetrics retrieval_metrics_from_ranks(std::span<const std::size_t> ranks) {
  RetrievalMetrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  double hits1 = 0, hits5 = 0, hits10 = 0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("ranks are 1-based");
    hits1 += r <= 1;
    hits5 += r <= 5;
    hits10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.r1 = 100.0 * hits1 / n;
  m.r5 = 100.0 * hits5 / n;
  m.r10 = 100.0 * hits10 / n;
  m.average = (m.r1 + m.r5 + m.r10) / 3.0;
  return m;
}

RetrievalMetrics retrieval_metrics(const Matrix& scores, std::span<const int> truth) {
  if (static_cast<Eigen::Index>(truth.size()) != scores.rows())
    throw std::invalid_argument("retrieval_metrics: one ground truth per query required");
  std::vector<std::size_t> ranks;
  ranks.reserve(truth.size());
  for (Eigen::Index q = 0; q < scores.rows(); ++q)
    ranks.push_back(rank_of(scores.row(q).transpose(), truth[static_cast<std::size_t>(q)]));
  return retrieval_metrics_from_ranks(ranks);
}

double overlap_statistic(const std::vector<std::string>& answers,
                         const std::vector<std::vector<std::string>>& video_words) {
  if (answers.size() != video_words.size())
    throw std::invalid_argument("overlap_statistic: one word list per answer required");
  if (answers.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    std::set<std::string, std::less<>> words;
    for (const auto& w : video_words[i]) words.insert(normalize_answer(w));
    for (const auto& w : split_words(normalize_answer(answers[i]))) {
      if (words.contains(w)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(answers.size());
}

namespace {

Vector fused_embedding(const FusionModel& model, const VideoBank& bank, const std::string& video_id,
                       const std::string& text, const std::optional<std::string>& asr) {
  std::optional<std::string_view> a;
  if (asr) a = *asr;
  return model.fuse(bank.input(video_id, model.variant()), text, a);
}

}  // namespace

OpenEndedResult eval_open_ended(const FusionModel& model, const std::vector<QaRecord>& records,
                                const VideoBank& bank, const AnswerCorpus& corpus, CreditRule rule) {
  if (corpus.size() == 0) throw DataError("answer corpus is empty");
  OpenEndedResult result;
  std::vector<std::vector<std::string>> annotations;
  for (const auto& r : records) {
    if (r.answers.empty()) throw DataError("record for '" + r.video_id + "' has no annotations");
    const Vector e = fused_embedding(model, bank, r.video_id, r.question, r.asr);
    const Vector scores = corpus.embeddings() * e;
    result.predictions.push_back(corpus.answers()[static_cast<std::size_t>(argmax_first(scores))]);
    annotations.push_back(r.answers);
  }
  result.accuracy = open_ended_accuracy(result.predictions, annotations, rule);
  return result;
}

double eval_multiple_choice(const FusionModel& model, const std::vector<QaRecord>& records,
                            const VideoBank& bank) {
  Matrix scores(static_cast<Eigen::Index>(records.size()), 4);
  std::vector<int> positives(records.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.answers.empty() || r.negatives.size() != 3)
      throw DataError("multiple-choice record for '" + r.video_id + "' needs 1 answer and 3 negatives");
    const Vector e = fused_embedding(model, bank, r.video_id, r.question, r.asr);
    const std::string* candidates[4] = {&r.answers.front(), &r.negatives[0], &r.negatives[1], &r.negatives[2]};
    for (int c = 0; c < 4; ++c)
      scores(static_cast<Eigen::Index>(i), c) = model.encode_answer(*candidates[c]).dot(e);
  }
  return multiple_choice_accuracy(scores, positives);
}

RetrievalMetrics eval_retrieval(const FusionModel& model, const std::vector<RetrievalRecord>& records,
                                const VideoBank& bank) {
  const auto n = static_cast<Eigen::Index>(records.size());
  Matrix items(n, model.embedding_dim());
  Matrix queries(n, model.embedding_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    items.row(i) = fused_embedding(model, bank, r.video_id, r.speech, std::nullopt).transpose();
    queries.row(i) = model.encode_answer(r.caption).transpose();
  }
  const Matrix scores = queries * items.transpose();
  std::vector<int> truth(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = static_cast<int>(i);
  return retrieval_metrics(scores, truth);
}

void write_eval_report(const std::string& path, const std::vector<EvalReportLine>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& l : lines)
    out << json{{"metric", l.metric}, {"value", l.value}, {"count", l.count}, {"config_hash", l.config_hash}}.dump()
        << '\n';
}

std::vector<EvalReportLine> load_eval_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<EvalReportLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("metric").get<std::string>(), j.at("value").get<double>(),
                     j.at("count").get<std::size_t>(), j.at("config_hash").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mcvl

#include "mcvl/datasets.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mcvl/common.hpp"
#include "mcvl/lexicon.hpp"
#include "mcvl/text_model.hpp"

namespace mcvl {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::kOpenQa: return "openqa";
    case Task::kMultipleChoice: return "mcqa";
    case Task::kRetrieval: return "retrieval";
  }
  return "openqa";
}

Task parse_task(std::string_view name) {
  if (name == "openqa") return Task::kOpenQa;
  if (name == "mcqa") return Task::kMultipleChoice;
  if (name == "retrieval") return Task::kRetrieval;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

namespace {

class LineError : public DataError {
 public:
  using DataError::DataError;
};

std::string require_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw LineError(std::string("missing field '") + field + "'");
  if (!it->is_string()) throw LineError(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> require_strings(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw LineError(std::string("missing field '") + field + "'");
  if (!it->is_array()) throw LineError(std::string("field '") + field + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : *it) {
    if (!e.is_string()) throw LineError(std::string("field '") + field + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

template <typename Record, typename Parse>
std::vector<Record> load_lines(const std::string& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<Record> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const LineError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw DataError(path + ": no records");
  return out;
}

QaRecord parse_qa(const json& j) {
  if (!j.is_object()) throw LineError("record must be a JSON object");
  QaRecord r;
  r.video_id = require_string(j, "video_id");
  if (r.video_id.empty()) throw LineError("field 'video_id' is empty");
  r.question = require_string(j, "question");
  if (blank(r.question)) throw LineError("field 'question' is empty");
  r.answers = require_strings(j, "answers");
  if (r.answers.empty()) throw LineError("field 'answers' needs at least one answer");
  if (j.contains("negatives")) {
    r.negatives = require_strings(j, "negatives");
    if (r.negatives.size() != 3) throw LineError("field 'negatives' must hold exactly 3 answers");
    if (r.answers.size() != 1)
      throw LineError("field 'answers' must hold exactly 1 answer when negatives are given");
  }
  if (j.contains("asr")) r.asr = require_string(j, "asr");
  return r;
}

RetrievalRecord parse_retrieval(const json& j) {
  if (!j.is_object()) throw LineError("record must be a JSON object");
  RetrievalRecord r;
  r.video_id = require_string(j, "video_id");
  if (r.video_id.empty()) throw LineError("field 'video_id' is empty");
  r.speech = require_string(j, "speech");
  r.caption = require_string(j, "caption");
  if (blank(r.caption)) throw LineError("field 'caption' is empty");
  return r;
}

}  // namespace

std::vector<QaRecord> load_qa(const std::string& path) { return load_lines<QaRecord>(path, parse_qa); }

std::vector<RetrievalRecord> load_retrieval(const std::string& path) {
  return load_lines<RetrievalRecord>(path, parse_retrieval);
}

void save_qa(const std::string& path, const std::vector<QaRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records) {
    json j = {{"video_id", r.video_id}, {"question", r.question}, {"answers", r.answers}};
    if (!r.negatives.empty()) j["negatives"] = r.negatives;
    if (r.asr) j["asr"] = *r.asr;
    out << j.dump() << '\n';
  }
}

void save_retrieval(const std::string& path, const std::vector<RetrievalRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records)
    out << json{{"video_id", r.video_id}, {"speech", r.speech}, {"caption", r.caption}}.dump() << '\n';
}

std::vector<RetrievalRecord> filter_multichannel(const std::vector<RetrievalRecord>& records,
                                                 const std::unordered_set<std::string_view>& stopwords,
                                                 int min_content_words) {
  std::vector<RetrievalRecord> out;
  for (const auto& r : records) {
    int content = 0;
    for (const auto& w : split_words(r.speech))
      if (!stopwords.contains(w)) ++content;
    if (content >= min_content_words) out.push_back(r);
  }
  return out;
}

SyntheticSpec SyntheticSpec::from_config(const KeyValueConfig& cfg) {
  SyntheticSpec s;
  s.task = parse_task(cfg.get_string("task", task_name(s.task)));
  s.num_samples = static_cast<int>(cfg.get_int("num_samples", s.num_samples));
  s.test_samples = static_cast<int>(cfg.get_int("test_samples", s.test_samples));
  s.vocab_size = static_cast<int>(cfg.get_int("vocab_size", s.vocab_size));
  s.answers_per_corpus = static_cast<int>(cfg.get_int("answers_per_corpus", s.answers_per_corpus));
  s.segments = static_cast<int>(cfg.get_int("segments", s.segments));
  s.planted_per_segment = static_cast<int>(cfg.get_int("planted_per_segment", s.planted_per_segment));
  s.context_words = static_cast<int>(cfg.get_int("context_words", s.context_words));
  s.annotations = static_cast<int>(cfg.get_int("annotations", s.annotations));
  s.with_negatives = cfg.get_bool("with_negatives", s.with_negatives);
  s.dim = static_cast<Eigen::Index>(cfg.get_int("dim", s.dim));
  s.noise_sigma = cfg.get_double("noise_sigma", s.noise_sigma);
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));
  for (const auto& [k, _] : cfg.entries()) {
    static const std::set<std::string> known = {
        "task", "num_samples", "test_samples", "vocab_size", "answers_per_corpus", "segments",
        "planted_per_segment", "context_words", "annotations", "with_negatives", "dim",
        "noise_sigma", "seed"};
    if (!known.contains(k)) throw DataError("unknown synthetic spec key '" + k + "'");
  }
  return s;
}

KeyValueConfig SyntheticSpec::to_config() const {
  KeyValueConfig c;
  c.set("task", task_name(task));
  c.set("num_samples", std::to_string(num_samples));
  c.set("test_samples", std::to_string(test_samples));
  c.set("vocab_size", std::to_string(vocab_size));
  c.set("answers_per_corpus", std::to_string(answers_per_corpus));
  c.set("segments", std::to_string(segments));
  c.set("planted_per_segment", std::to_string(planted_per_segment));
  c.set("context_words", std::to_string(context_words));
  c.set("annotations", std::to_string(annotations));
  c.set("with_negatives", with_negatives ? "true" : "false");
  c.set("dim", std::to_string(dim));
  json sigma = noise_sigma;
  c.set("noise_sigma", sigma.dump());
  c.set("seed", std::to_string(seed));
  return c;
}

void SyntheticSpec::validate() const {
  auto positive = [](long long v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("synthetic spec: ") + name + " must be positive");
  };
  positive(num_samples, "num_samples");
  positive(test_samples, "test_samples");
  positive(vocab_size, "vocab_size");
  positive(answers_per_corpus, "answers_per_corpus");
  positive(segments, "segments");
  positive(planted_per_segment, "planted_per_segment");
  positive(annotations, "annotations");
  positive(dim, "dim");
  if (context_words < 0) throw std::invalid_argument("synthetic spec: context_words must be >= 0");
  if (answers_per_corpus > vocab_size)
    throw std::invalid_argument("synthetic spec: answers_per_corpus exceeds vocab_size");
  if (context_words > vocab_size - answers_per_corpus)
    throw std::invalid_argument("synthetic spec: not enough non-answer words for context_words");
  if (with_negatives && answers_per_corpus < 4)
    throw std::invalid_argument("synthetic spec: multiple choice needs at least 4 answers");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
  if (segments * planted_per_segment < context_words + 1)
    throw std::invalid_argument("synthetic spec: segments cannot hold every planted word");
}

namespace {

// Letters-only pseudo-words so the bundled tagger reads them as nouns.
std::vector<std::string> make_words(int count, std::mt19937_64& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::uniform_int_distribution<std::size_t> cons(0, kConsonants.size() - 1);
  std::uniform_int_distribution<std::size_t> vow(0, kVowels.size() - 1);
  while (static_cast<int>(words.size()) < count) {
    std::string w;
    for (int s = 0; s < 3; ++s) {
      w += kConsonants[cons(rng)];
      w += kVowels[vow(rng)];
    }
    if (lexicon::stopwords().contains(w) || lexicon::verbs().contains(w) ||
        lexicon::adjectives().contains(w) || !seen.insert(w).second)
      continue;
    words.push_back(std::move(w));
  }
  return words;
}

template <typename T>
std::vector<T> sample_distinct(const std::vector<T>& pool, int n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<T> out;
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), idx.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[d(rng)]);
    out.push_back(pool[idx[static_cast<std::size_t>(i)]]);
  }
  return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticDataset data{spec, {}, {}, {}, {}, {}, {},
                        SyntheticEncoderPair(spec.dim, spec.seed, spec.noise_sigma), {}};
  data.vocabulary = make_words(spec.vocab_size, rng);
  data.answer_words.assign(data.vocabulary.begin(), data.vocabulary.begin() + spec.answers_per_corpus);
  const std::vector<std::string> context_pool(data.vocabulary.begin() + spec.answers_per_corpus,
                                              data.vocabulary.end());
  std::uniform_int_distribution<std::size_t> pick_answer(0, data.answer_words.size() - 1);
  std::bernoulli_distribution agree(0.8);

  auto make_sample = [&](const std::string& video_id, std::vector<QaRecord>& qa,
                         std::vector<RetrievalRecord>& retrieval) {
    const std::string& answer = data.answer_words[pick_answer(rng)];
    const auto context = sample_distinct(context_pool, spec.context_words, rng);
    std::vector<std::string> planted = context;
    planted.push_back(answer);
    std::shuffle(planted.begin(), planted.end(), rng);
    const int per_segment = std::min<int>(spec.planted_per_segment, static_cast<int>(planted.size()));
    std::vector<std::vector<std::string>> segments;
    for (int s = 0; s < spec.segments; ++s) {
      std::vector<std::string> seg;
      for (int j = 0; j < per_segment; ++j)
        seg.push_back(planted[static_cast<std::size_t>(s * per_segment + j) % planted.size()]);
      segments.push_back(std::move(seg));
    }
    data.encoder.plant(video_id, std::move(segments));

    if (spec.task == Task::kRetrieval) {
      std::vector<std::string> speech = context;
      while (static_cast<int>(speech.size()) < 5)
        speech.push_back(context_pool[std::uniform_int_distribution<std::size_t>(0, context_pool.size() - 1)(rng)]);
      RetrievalRecord r{video_id, "here we have " + join(speech, " "),
                        "the " + answer + (context.empty() ? "" : " with the " + context.front())};
      data.corpus.push_back(r.caption);
      data.corpus.push_back(r.speech);
      retrieval.push_back(std::move(r));
      return;
    }
    QaRecord r;
    r.video_id = video_id;
    r.question = context.empty() ? "what is there" : "what is there with " + join(context, " and ");
    r.answers.push_back(answer);
    for (int a = 1; a < spec.annotations; ++a) {
      // The first two annotators always agree, so a correct prediction earns full credit.
      if (a < 2 || agree(rng)) {
        r.answers.push_back(answer);
      } else {
        r.answers.push_back(data.answer_words[pick_answer(rng)]);
      }
    }
    if (spec.with_negatives) {
      std::vector<std::string> others;
      for (const auto& w : data.answer_words)
        if (w != answer) others.push_back(w);
      r.negatives = sample_distinct(others, 3, rng);
      r.answers.resize(1);
    }
    data.corpus.push_back(r.question);
    for (const auto& a : r.answers) data.corpus.push_back(a);
    qa.push_back(std::move(r));
  };

  for (int i = 0; i < spec.num_samples; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "train-%05d", i);
    make_sample(id, data.train_qa, data.train_retrieval);
  }
  for (int i = 0; i < spec.test_samples; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "test-%05d", i);
    make_sample(id, data.test_qa, data.test_retrieval);
  }
  // Every generated word appears in the corpus, so the answer-word
  // vocabulary covers the full synthetic vocabulary.
  data.corpus.push_back(join(data.vocabulary, " "));
  return data;
}

void save_encoder_description(const std::string& path, const SyntheticEncoderPair& enc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << json{{"kind", "synthetic"}, {"dim", enc.dim()}, {"seed", enc.seed()}, {"noise_sigma", enc.noise_sigma()}}.dump(2)
      << '\n';
}

SyntheticEncoderPair load_encoder_description(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read encoder description " + path);
  try {
    const json j = json::parse(in);
    if (j.at("kind").get<std::string>() != "synthetic")
      throw DataError(path + ": only the synthetic encoder kind is bundled");
    return SyntheticEncoderPair(j.at("dim").get<Eigen::Index>(), j.at("seed").get<std::uint64_t>(),
                                j.at("noise_sigma").get<double>());
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_synthetic(const SyntheticDataset& data, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  if (data.spec.task == Task::kRetrieval) {
    save_retrieval((root / "train.jsonl").string(), data.train_retrieval);
    save_retrieval((root / "test.jsonl").string(), data.test_retrieval);
  } else {
    save_qa((root / "train.jsonl").string(), data.train_qa);
    save_qa((root / "test.jsonl").string(), data.test_qa);
  }
  std::map<std::string, VideoFeatures> features;
  std::ofstream planted(root / "planted.jsonl", std::ios::trunc);
  for (const auto& id : data.encoder.video_ids()) {
    features.emplace(id, data.encoder.encode_video(id));
    planted << json{{"video_id", id}, {"segments", data.encoder.planted(id)}}.dump() << '\n';
  }
  write_feature_store(root.string(), features);
  std::ofstream corpus(root / "corpus.txt", std::ios::trunc);
  for (const auto& s : data.corpus) corpus << s << '\n';
  save_encoder_description((root / "encoder.json").string(), data.encoder);
  std::ofstream spec(root / "spec.cfg", std::ios::trunc);
  spec << data.spec.to_config().dump();
}

}  // namespace mcvl

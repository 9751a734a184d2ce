#include "mcvl/token_retrieval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "mcvl/common.hpp"
#include "mcvl/lexicon.hpp"
#include "mcvl/text_model.hpp"

namespace mcvl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool is_verb_form(std::string_view w) {
  const auto& verbs = lexicon::verbs();
  if (verbs.contains(w)) return true;
  auto strip = [&](std::string_view suffix) -> bool {
    if (w.size() <= suffix.size() + 1 || !w.ends_with(suffix)) return false;
    const std::string_view stem = w.substr(0, w.size() - suffix.size());
    if (verbs.contains(stem)) return true;
    // "chopped" -> "chop", "baking" -> "bake"
    if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2] &&
        verbs.contains(stem.substr(0, stem.size() - 1)))
      return true;
    return verbs.contains(std::string(stem) + "e");
  };
  return strip("s") || strip("es") || strip("ed") || strip("ing");
}

PartOfSpeech parse_tag(const std::string& s) {
  if (s == "NOUN") return PartOfSpeech::kNoun;
  if (s == "VERB") return PartOfSpeech::kVerb;
  if (s == "OTHER") return PartOfSpeech::kOther;
  throw DataError("unknown part-of-speech tag '" + s + "'");
}

std::string source_name(VocabularySource s) {
  return s == VocabularySource::kAnswerWords ? "answer-word" : "external-list";
}

VocabularySource parse_source(const std::string& s) {
  if (s == "answer-word") return VocabularySource::kAnswerWords;
  if (s == "external-list") return VocabularySource::kExternalList;
  throw DataError("unknown vocabulary source '" + s + "'");
}

Vocabulary embed_words(std::set<std::string> unique, const FrozenTextEncoder& encoder,
                       VocabularySource source) {
  std::vector<std::string> words(unique.begin(), unique.end());
  Matrix m(static_cast<Eigen::Index>(words.size()), encoder.dim());
  for (std::size_t i = 0; i < words.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = encoder.encode_word(words[i]).transpose();
  auto keys = words;
  return Vocabulary(std::move(words), EmbeddingMatrix<double>(std::move(m), std::move(keys)), source);
}

}  // namespace

WordlistTagger WordlistTagger::with_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read lexicon " + path);
  WordlistTagger tagger;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 'word<TAB>TAG'");
    tagger.add(line.substr(0, tab), parse_tag(line.substr(tab + 1)));
  }
  return tagger;
}

void WordlistTagger::add(std::string word, PartOfSpeech tag) { overrides_[std::move(word)] = tag; }

PartOfSpeech WordlistTagger::tag(std::string_view word) const {
  if (auto it = overrides_.find(word); it != overrides_.end()) return it->second;
  if (word.empty()) return PartOfSpeech::kOther;
  for (char c : word)
    if (!std::isalpha(static_cast<unsigned char>(c))) return PartOfSpeech::kOther;
  if (lexicon::stopwords().contains(word) || lexicon::adjectives().contains(word))
    return PartOfSpeech::kOther;
  if (is_verb_form(word)) return PartOfSpeech::kVerb;
  return PartOfSpeech::kNoun;
}

Vocabulary::Vocabulary(std::vector<std::string> words, EmbeddingMatrix<double> embeddings,
                       VocabularySource source)
    : words_(std::move(words)), embeddings_(std::move(embeddings)), source_(source) {
  if (words_.empty()) throw std::invalid_argument("Vocabulary: no words");
  if (static_cast<Eigen::Index>(words_.size()) != embeddings_.rows())
    throw std::invalid_argument("Vocabulary: embedding rows do not match word count");
  std::set<std::string_view> seen;
  for (const auto& w : words_)
    if (!seen.insert(w).second) throw std::invalid_argument("Vocabulary: duplicate word '" + w + "'");
}

void Vocabulary::save(const std::string& dir) const {
  fs::create_directories(dir);
  const fs::path root(dir);
  save_embedding_matrix((root / "embeddings.bin").string(), (root / "words.txt").string(),
                        EmbeddingMatrix<double>(embeddings_.data(), words_));
  std::ofstream meta(root / "vocab.json", std::ios::trunc);
  if (!meta) throw DataError("cannot write " + (root / "vocab.json").string());
  meta << json{{"source", source_name(source_)}, {"size", words_.size()}, {"dim", dim()}}.dump(2)
       << '\n';
}

Vocabulary Vocabulary::load(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta_in(root / "vocab.json");
  if (!meta_in) throw DataError("cannot read " + (root / "vocab.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw DataError((root / "vocab.json").string() + ": " + e.what());
  }
  auto m = load_embedding_matrix((root / "embeddings.bin").string(), (root / "words.txt").string());
  std::vector<std::string> words = m.keys();
  try {
    return Vocabulary(std::move(words), std::move(m), parse_source(meta.value("source", "")));
  } catch (const std::invalid_argument& e) {
    throw DataError(dir + ": " + e.what());
  }
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, const PosTagger& tagger,
                            const FrozenTextEncoder& encoder) {
  if (corpus.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  std::set<std::string> unique;
  for (const auto& sentence : corpus)
    for (auto& w : split_words(sentence))
      if (tagger.tag(w) != PartOfSpeech::kOther) unique.insert(std::move(w));
  if (unique.empty()) throw DataError("build_vocabulary: corpus contains no nouns or verbs");
  return embed_words(std::move(unique), encoder, VocabularySource::kAnswerWords);
}

Vocabulary vocabulary_from_words(const std::vector<std::string>& words,
                                 const FrozenTextEncoder& encoder) {
  std::set<std::string> unique;
  for (const auto& w : words)
    for (auto& token : split_words(w)) unique.insert(std::move(token));
  if (unique.empty()) throw DataError("vocabulary_from_words: empty word list");
  return embed_words(std::move(unique), encoder, VocabularySource::kExternalList);
}

std::vector<SegmentTokens> retrieve_tokens(const VideoFeatures& features, const Vocabulary& vocab,
                                           int k, Similarity similarity) {
  if (k < 1 || static_cast<std::size_t>(k) > vocab.size())
    throw std::invalid_argument("retrieve_tokens: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(vocab.size()) + "]");
  if (features.dim() != vocab.dim())
    throw std::invalid_argument("retrieve_tokens: feature dim " + std::to_string(features.dim()) +
                                " != vocabulary dim " + std::to_string(vocab.dim()));
  const Matrix& rows = vocab.embeddings().data();
  const Matrix normalized = similarity == Similarity::kCosine ? l2_normalize_rows(rows) : Matrix();
  std::vector<SegmentTokens> out;
  out.reserve(static_cast<std::size_t>(features.length()));
  std::vector<int> order(vocab.size());
  for (Eigen::Index s = 0; s < features.length(); ++s) {
    const Vector scores =
        similarity == Similarity::kCosine
            ? dot_scores(l2_normalize(features.segments.row(s)), normalized)
            : dot_scores(features.segments.row(s), rows);
    if (!scores.allFinite()) throw NumericError("retrieve_tokens: non-finite similarity");
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      if (scores(a) != scores(b)) return scores(a) > scores(b);
      return a < b;
    });
    SegmentTokens seg;
    seg.segment_index = static_cast<int>(s);
    for (int i = 0; i < k; ++i) seg.entries.push_back({order[i], vocab.words()[order[i]], scores(order[i])});
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<std::vector<ScoredWord>> pool_tokens(const std::vector<SegmentTokens>& per_segment,
                                                 int kernel, int k) {
  if (kernel < 1) throw std::invalid_argument("pool_tokens: kernel must be >= 1");
  if (k < 1) throw std::invalid_argument("pool_tokens: k must be >= 1");
  std::vector<std::vector<ScoredWord>> windows;
  for (std::size_t start = 0; start < per_segment.size(); start += static_cast<std::size_t>(kernel)) {
    const std::size_t stop = std::min(per_segment.size(), start + static_cast<std::size_t>(kernel));
    std::unordered_map<int, ScoredWord> best;
    for (std::size_t s = start; s < stop; ++s) {
      for (const auto& e : per_segment[s].entries) {
        auto [it, inserted] = best.try_emplace(e.index, e);
        if (!inserted && e.score > it->second.score) it->second.score = e.score;
      }
    }
    std::vector<ScoredWord> window;
    window.reserve(best.size());
    for (auto& [_, w] : best) window.push_back(std::move(w));
    std::sort(window.begin(), window.end(), ranks_before);
    if (window.size() > static_cast<std::size_t>(k)) window.resize(static_cast<std::size_t>(k));
    windows.push_back(std::move(window));
  }
  return windows;
}

VideoFeatures subsample_features(const VideoFeatures& features, int max_segments) {
  if (max_segments < 1) throw std::invalid_argument("subsample_features: max_segments must be >= 1");
  const Eigen::Index t = features.length();
  if (t <= max_segments) return features;
  VideoFeatures out;
  out.segment_seconds = features.segment_seconds * static_cast<double>(t) / max_segments;
  out.segments.resize(max_segments, features.dim());
  for (Eigen::Index i = 0; i < max_segments; ++i) out.segments.row(i) = features.segments.row(i * t / max_segments);
  return out;
}

std::vector<std::string> TokenizedVideo::pooled() const {
  std::vector<std::string> out;
  for (const auto& w : windows)
    for (const auto& e : w) out.push_back(e.word);
  return out;
}

std::string render_token_sequence(const TokenizedVideo& tokenized, bool temporal_markers) {
  std::string out;
  bool first_window = true;
  for (const auto& window : tokenized.windows) {
    if (window.empty()) continue;
    if (temporal_markers) {
      if (!out.empty()) out += ' ';
      out += first_window ? "first" : "then";
    }
    first_window = false;
    for (const auto& e : window) {
      if (!out.empty()) out += ' ';
      out += e.word;
    }
  }
  if (out.empty()) throw std::invalid_argument("render_token_sequence: no pooled tokens");
  return out;
}

TokenizedVideo tokenize_video(std::string video_id, const VideoFeatures& features,
                              const Vocabulary& vocab, const TokenConfig& cfg) {
  TokenizedVideo out;
  out.video_id = std::move(video_id);
  out.per_segment = retrieve_tokens(subsample_features(features, cfg.max_segments), vocab, cfg.k,
                                    cfg.similarity);
  out.windows = pool_tokens(out.per_segment, cfg.kernel, cfg.k);
  return out;
}

void save_tokenized(const std::string& path, const std::vector<TokenizedVideo>& videos) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& v : videos) {
    json segments = json::array();
    for (const auto& s : v.per_segment) {
      json entries = json::array();
      for (const auto& e : s.entries) entries.push_back({{"word", e.word}, {"index", e.index}, {"score", e.score}});
      segments.push_back(std::move(entries));
    }
    json windows = json::array();
    for (const auto& w : v.windows) {
      json entries = json::array();
      for (const auto& e : w) entries.push_back({{"word", e.word}, {"index", e.index}, {"score", e.score}});
      windows.push_back(std::move(entries));
    }
    out << json{{"video_id", v.video_id}, {"segments", segments}, {"windows", windows}, {"pooled", v.pooled()}}.dump()
        << '\n';
  }
}

std::vector<TokenizedVideo> load_tokenized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<TokenizedVideo> out;
  std::string line;
  int line_no = 0;
  auto parse_entries = [](const json& arr) {
    std::vector<ScoredWord> entries;
    for (const auto& e : arr)
      entries.push_back({e.at("index").get<int>(), e.at("word").get<std::string>(), e.at("score").get<double>()});
    return entries;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TokenizedVideo v;
      v.video_id = j.at("video_id").get<std::string>();
      int s = 0;
      for (const auto& seg : j.at("segments")) v.per_segment.push_back({s++, parse_entries(seg)});
      for (const auto& w : j.at("windows")) v.windows.push_back(parse_entries(w));
      out.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mcvl

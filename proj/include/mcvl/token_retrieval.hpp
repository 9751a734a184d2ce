#pragma once

// Text-token representation of videos: a vocabulary of nouns and verbs,
// exact top-k word retrieval per segment, windowed max pooling over the
// retrieved words, and rendering to a word sequence.

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mcvl/embeddings.hpp"
#include "mcvl/encoders.hpp"

namespace mcvl {

enum class PartOfSpeech { kNoun, kVerb, kOther };

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  /// Tags one lowercase word out of context.
  [[nodiscard]] virtual PartOfSpeech tag(std::string_view word) const = 0;
};

/// Deterministic tagger over the bundled word lists: stopwords, adjectives
/// and tokens containing non-letters are kOther; known verbs (including
/// -s/-es/-ed/-ing forms) are kVerb; every other alphabetic word is kNoun.
/// Entries added with `add` take precedence.
class WordlistTagger final : public PosTagger {
 public:
  WordlistTagger() = default;
  /// Lexicon file: lines `word<TAB>NOUN|VERB|OTHER`.
  static WordlistTagger with_lexicon(const std::string& path);

  void add(std::string word, PartOfSpeech tag);
  [[nodiscard]] PartOfSpeech tag(std::string_view word) const override;

 private:
  std::map<std::string, PartOfSpeech, std::less<>> overrides_;
};

enum class VocabularySource { kAnswerWords, kExternalList };

/// Words and their frozen text-encoder embeddings, row i <-> words[i].
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> words, EmbeddingMatrix<double> embeddings,
             VocabularySource source);

  [[nodiscard]] const std::vector<std::string>& words() const { return words_; }
  [[nodiscard]] const EmbeddingMatrix<double>& embeddings() const { return embeddings_; }
  [[nodiscard]] VocabularySource source() const { return source_; }
  [[nodiscard]] std::size_t size() const { return words_.size(); }
  [[nodiscard]] Eigen::Index dim() const { return embeddings_.dim(); }

  /// Directory layout: words.txt (one word per line, row order),
  /// embeddings.bin (matrix file), vocab.json ({source, size, dim}).
  void save(const std::string& dir) const;
  static Vocabulary load(const std::string& dir);

 private:
  std::vector<std::string> words_;
  EmbeddingMatrix<double> embeddings_;
  VocabularySource source_;
};

/// Sorted, deduplicated nouns and verbs of the corpus, embedded with `encoder`.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus, const PosTagger& tagger,
                            const FrozenTextEncoder& encoder);
/// External word list (e.g. a large generic vocabulary); order and
/// duplicates are normalized the same way.
Vocabulary vocabulary_from_words(const std::vector<std::string>& words,
                                 const FrozenTextEncoder& encoder);

struct ScoredWord {
  int index = 0;  // row in the vocabulary
  std::string word;
  double score = 0.0;
};

struct SegmentTokens {
  int segment_index = 0;
  std::vector<ScoredWord> entries;  // score descending, ties by lower index
};

/// Orders by score descending, then vocabulary index ascending.
inline bool ranks_before(const ScoredWord& a, const ScoredWord& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

/// Exact top-k vocabulary words per segment.
std::vector<SegmentTokens> retrieve_tokens(const VideoFeatures& features, const Vocabulary& vocab,
                                           int k, Similarity similarity = Similarity::kInnerProduct);

/// Groups segments into consecutive windows of `kernel`; within a window
/// each word keeps its best score and the top-k survive. One list per window.
std::vector<std::vector<ScoredWord>> pool_tokens(const std::vector<SegmentTokens>& per_segment,
                                                 int kernel, int k);

/// Uniformly spaced rows floor(i * T / max_segments), i < max_segments.
VideoFeatures subsample_features(const VideoFeatures& features, int max_segments);

struct TokenizedVideo {
  std::string video_id;
  std::vector<SegmentTokens> per_segment;
  std::vector<std::vector<ScoredWord>> windows;

  [[nodiscard]] std::vector<std::string> pooled() const;
};

/// Space-joined pooled words; with markers, "first" opens the first window
/// and "then" each later one.
std::string render_token_sequence(const TokenizedVideo& tokenized, bool temporal_markers);

struct TokenConfig {
  int k = 15;
  int kernel = 5;
  int max_segments = 20;
  Similarity similarity = Similarity::kInnerProduct;
};

TokenizedVideo tokenize_video(std::string video_id, const VideoFeatures& features,
                              const Vocabulary& vocab, const TokenConfig& cfg);

/// One JSON object per line:
/// {"video_id", "segments": [[{"word","index","score"}...]...], "windows": [[word...]...],
///  "pooled": [word...]}
void save_tokenized(const std::string& path, const std::vector<TokenizedVideo>& videos);
std::vector<TokenizedVideo> load_tokenized(const std::string& path);

}  // namespace mcvl

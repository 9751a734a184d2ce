#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "mcvl/token_retrieval.hpp"

using namespace mcvl;

namespace {

Vocabulary matrix_vocab(const Matrix& rows) {
  std::vector<std::string> words;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words, EmbeddingMatrix<double>(rows, words), VocabularySource::kExternalList);
}

VideoFeatures features_of(const Matrix& m) { return VideoFeatures{m, 1.5}; }

// Full stable sort by score descending; equal scores keep index order.
std::vector<int> brute_force_top(const Vector& q, const Matrix& rows, int k) {
  std::vector<double> s(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) acc += rows(i, j) * q(j);
    s[i] = acc;
  }
  std::vector<int> idx(rows.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return s[a] > s[b]; });
  idx.resize(std::min<std::size_t>(k, idx.size()));
  return idx;
}

ScoredWord sw(int index, std::string word, double score) { return ScoredWord{index, std::move(word), score}; }

std::vector<std::string> words_of(const std::vector<ScoredWord>& v) {
  std::vector<std::string> out;
  for (const auto& w : v) out.push_back(w.word);
  return out;
}

}  // namespace

TEST_SUITE("token_retrieval") {

TEST_CASE("vocabulary keeps nouns and verbs") {
  SyntheticEncoderPair enc(16, 0, 0.0);
  WordlistTagger tagger;
  const auto v = build_vocabulary({"the cat eats fish"}, tagger, enc);
  CHECK(v.words() == std::vector<std::string>{"cat", "eats", "fish"});
  CHECK(v.source() == VocabularySource::kAnswerWords);
  CHECK(build_vocabulary({"the cat eats fish", "the cat eats fish"}, tagger, enc).words() == v.words());
  CHECK(build_vocabulary({"fish eats", "the cat"}, tagger, enc).words() == v.words());
  CHECK(v.embeddings().data().row(0).transpose() == enc.encode_word("cat"));
  tagger.add("cat", PartOfSpeech::kOther);
  CHECK(build_vocabulary({"the cat eats fish"}, tagger, enc).words() == std::vector<std::string>{"eats", "fish"});
}

TEST_CASE("vocabulary persistence") {
  SyntheticEncoderPair enc(8, 1, 0.0);
  const auto v = vocabulary_from_words({"b", "a", "b"}, enc);
  CHECK(v.words() == std::vector<std::string>{"a", "b"});
  const auto dir = testing::scratch_dir("vocab");
  v.save(dir.string());
  const auto back = Vocabulary::load(dir.string());
  CHECK(back.words() == v.words());
  CHECK(back.embeddings().data() == v.embeddings().data());
  CHECK(back.source() == VocabularySource::kExternalList);
}

TEST_CASE("hand-computed top-2 with a tie") {
  Matrix rows(4, 2);
  rows << 1, 0, 0, 1, -1, 0, 0.6, 0.8;
  Matrix f(1, 2);
  f << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  const auto out = retrieve_tokens(features_of(f), matrix_vocab(rows), 2);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].entries.size() == 2);
  CHECK(out[0].entries[0].word == "w3");
  CHECK(out[0].entries[0].score == doctest::Approx(0.9899).epsilon(1e-4));
  CHECK(out[0].entries[1].word == "w0");
  CHECK(out[0].entries[1].score == doctest::Approx(0.7071).epsilon(1e-4));
}

TEST_CASE("k validation") {
  const auto vocab = matrix_vocab(Matrix::Identity(3, 3));
  const auto f = features_of(Matrix::Ones(1, 3));
  CHECK_THROWS_AS((void)retrieve_tokens(f, vocab, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)retrieve_tokens(f, vocab, 4), std::invalid_argument);
  CHECK(retrieve_tokens(f, vocab, 3)[0].entries.size() == 3);
  CHECK_THROWS_AS((void)retrieve_tokens(features_of(Matrix::Ones(1, 2)), vocab, 1), std::invalid_argument);
}

TEST_CASE("matches brute force including tie order") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> small(-2, 2);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 5 + trial * 17, d = 4;
    Matrix rows(n, d);
    Matrix f(6, d);
    // Integer entries make exact ties common.
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = small(rng);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = small(rng);
    const int k = 1 + trial % 5;
    const auto out = retrieve_tokens(features_of(f), matrix_vocab(rows), k);
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
      std::vector<int> got;
      for (const auto& e : out[t].entries) got.push_back(e.index);
      CHECK(got == brute_force_top(f.row(t).transpose(), rows, k));
      CHECK(out[t].segment_index == t);
    }
  }
}

TEST_CASE("positive feature rescaling keeps the ranking") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> c(0.01, 50.0);
  const Matrix rows = testing::random_matrix(200, 8, rng);
  const auto vocab = matrix_vocab(rows);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix f = testing::random_matrix(1, 8, rng);
    const auto a = retrieve_tokens(features_of(f), vocab, 5);
    const auto b = retrieve_tokens(features_of(c(rng) * f), vocab, 5);
    CHECK(words_of(a[0].entries) == words_of(b[0].entries));
  }
}

TEST_CASE("cosine similarity ignores row norms") {
  Matrix rows(2, 2);
  rows << 10, 1, 0, 0.5;
  Matrix f(1, 2);
  f << 0, 1;
  CHECK(retrieve_tokens(features_of(f), matrix_vocab(rows), 1)[0].entries[0].word == "w0");
  CHECK(retrieve_tokens(features_of(f), matrix_vocab(rows), 1, Similarity::kCosine)[0].entries[0].word == "w1");
}

TEST_CASE("pooling within a window") {
  std::vector<SegmentTokens> segs{{0, {sw(0, "a", 0.9), sw(1, "b", 0.5)}}, {1, {sw(1, "b", 0.8), sw(2, "c", 0.7)}}};
  const auto pooled = pool_tokens(segs, 5, 2);
  REQUIRE(pooled.size() == 1);
  CHECK(words_of(pooled[0]) == std::vector<std::string>{"a", "b"});
  CHECK(pooled[0][1].score == 0.8);
  CHECK(words_of(pool_tokens(segs, 5, 3)[0]) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("pooling across disjoint windows concatenates") {
  std::vector<SegmentTokens> segs{{0, {sw(0, "a", 0.9)}}, {1, {sw(1, "b", 0.8)}}, {2, {sw(2, "c", 0.1)}},
                                  {3, {sw(3, "d", 0.3)}}};
  const auto pooled = pool_tokens(segs, 2, 1);
  REQUIRE(pooled.size() == 2);
  CHECK(words_of(pooled[0]) == std::vector<std::string>{"a"});
  CHECK(words_of(pooled[1]) == std::vector<std::string>{"d"});
  CHECK_THROWS_AS((void)pool_tokens(segs, 0, 1), std::invalid_argument);
}

TEST_CASE("subsampling strides") {
  Matrix m(10, 1);
  for (int i = 0; i < 10; ++i) m(i, 0) = i;
  const auto sub = subsample_features(features_of(m), 5);
  CHECK(sub.length() == 5);
  for (int i = 0; i < 5; ++i) CHECK(sub.segments(i, 0) == 2 * i);
  CHECK(subsample_features(features_of(m), 20).segments == m);
}

TEST_CASE("rendering with markers") {
  TokenizedVideo one{"v", {}, {{sw(0, "pan", 1), sw(1, "oil", 0.5)}}};
  CHECK(render_token_sequence(one, true) == "first pan oil");
  CHECK(render_token_sequence(one, false) == "pan oil");
  TokenizedVideo two{"v", {}, {{sw(0, "pan", 1)}, {sw(1, "stir", 1)}}};
  CHECK(render_token_sequence(two, true) == "first pan then stir");
  CHECK(two.pooled() == std::vector<std::string>{"pan", "stir"});
}

TEST_CASE("noiseless planted words are retrieved first") {
  SyntheticEncoderPair enc(64, 2, 0.0);
  std::vector<std::string> words;
  for (int i = 0; i < 100; ++i) words.push_back("word" + std::to_string(i));
  const auto vocab = vocabulary_from_words(words, enc);
  enc.plant("v", {{"word3", "word40"}, {"word77", "word8"}});
  TokenConfig cfg;
  cfg.k = 2;
  const auto tv = tokenize_video("v", enc.encode_video("v"), vocab, cfg);
  auto first = words_of(tv.per_segment[0].entries);
  std::sort(first.begin(), first.end());
  CHECK(first == std::vector<std::string>{"word3", "word40"});
  auto second = words_of(tv.per_segment[1].entries);
  std::sort(second.begin(), second.end());
  CHECK(second == std::vector<std::string>{"word77", "word8"});
}

TEST_CASE("tokenized videos round-trip") {
  SyntheticEncoderPair enc(16, 3, 0.1);
  const auto vocab = vocabulary_from_words({"a", "b", "c", "d", "e", "f"}, enc);
  enc.plant("v1", {{"a"}, {"b"}, {"c"}});
  enc.plant("v2", {{"d", "e"}});
  TokenConfig cfg;
  cfg.k = 2;
  cfg.kernel = 2;
  std::vector<TokenizedVideo> videos;
  for (const auto& id : enc.video_ids()) videos.push_back(tokenize_video(id, enc.encode_video(id), vocab, cfg));
  const auto dir = testing::scratch_dir("tokens");
  save_tokenized((dir / "t.jsonl").string(), videos);
  const auto back = load_tokenized((dir / "t.jsonl").string());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].video_id == videos[i].video_id);
    CHECK(back[i].pooled() == videos[i].pooled());
    CHECK(render_token_sequence(back[i], true) == render_token_sequence(videos[i], true));
    REQUIRE(back[i].per_segment.size() == videos[i].per_segment.size());
    CHECK(back[i].per_segment[0].entries[0].score == videos[i].per_segment[0].entries[0].score);
  }
  CHECK(videos[0].windows.size() == 2);
}

}  // TEST_SUITE

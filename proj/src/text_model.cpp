#include "mcvl/text_model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mcvl/common.hpp"

namespace mcvl {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

WordTokenizer::WordTokenizer() : WordTokenizer(std::vector<std::string>{}) {}

WordTokenizer::WordTokenizer(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size() + 1);
  tokens_.emplace_back(kUnknown);
  for (auto& t : tokens)
    if (t != kUnknown) tokens_.push_back(std::move(t));
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("WordTokenizer: duplicate token '" + tokens_[i] + "'");
}

WordTokenizer WordTokenizer::from_corpus(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (const auto& s : corpus)
    for (auto& w : split_words(s)) words.insert(std::move(w));
  return WordTokenizer(std::vector<std::string>(words.begin(), words.end()));
}

WordTokenizer WordTokenizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read tokenizer " + path);
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) tokens.push_back(line);
  if (tokens.empty() || tokens.front() != kUnknown)
    throw DataError(path + ": tokenizer file must start with " + std::string(kUnknown));
  return WordTokenizer(std::move(tokens));
}

void WordTokenizer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

int WordTokenizer::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> WordTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::vector<int> truncate_tail(std::vector<int> ids, std::size_t max_length) {
  if (ids.size() > max_length) {
    spdlog::warn("text of {} tokens truncated to {}; trailing tokens dropped", ids.size(), max_length);
    ids.resize(max_length);
  }
  return ids;
}

TextEncoding encode_text(Tape& tape, const TrainableTextModel& model, std::vector<int> ids) {
  if (ids.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  ids = truncate_tail(std::move(ids), model.max_length());
  Var tokens = model.contextualize(model.embed(tape, ids));
  return {tokens, nn::pool(tokens, model.pooling())};
}

Vector encode_text_pooled(const TrainableTextModel& model, std::string_view text) {
  Tape tape(false);
  auto enc = encode_text(tape, model, model.tokenize(text));
  return enc.pooled.value().row(0).transpose();
}

ToyTextTransformer::ToyTextTransformer(WordTokenizer tokenizer, const ToyTextConfig& cfg)
    : tokenizer_(std::move(tokenizer)), cfg_(cfg) {
  if (cfg.layers < 1) throw std::invalid_argument("ToyTextTransformer: need at least one layer");
  if (cfg.max_length == 0) throw std::invalid_argument("ToyTextTransformer: max_length must be > 0");
  std::mt19937_64 rng(cfg.seed);
  const auto vocab = static_cast<Eigen::Index>(tokenizer_.size());
  token_embeddings_ =
      autograd::Parameter("text.token_embeddings", nn::normal_matrix(vocab, cfg.hidden, 1.0, rng));
  position_embeddings_ = autograd::Parameter(
      "text.position_embeddings",
      nn::normal_matrix(static_cast<Eigen::Index>(cfg.max_length), cfg.hidden, 0.1, rng));
  embedding_norm_ = nn::LayerNorm("text.embedding_norm", cfg.hidden);
  if (cfg.embedding_norm_spread > 0.0) {
    embedding_norm_.gain.value.array() +=
        nn::normal_matrix(1, cfg.hidden, cfg.embedding_norm_spread, rng).array();
    embedding_norm_.bias.value = nn::normal_matrix(1, cfg.hidden, cfg.embedding_norm_spread, rng);
  }
  for (int l = 0; l < cfg.layers; ++l)
    blocks_.emplace_back("text.block" + std::to_string(l), cfg.hidden, cfg.heads, cfg.ffn_dim, rng);
}

std::vector<int> ToyTextTransformer::tokenize(std::string_view text) const {
  return tokenizer_.encode(text);
}

Var ToyTextTransformer::embed(Tape& tape, std::span<const int> ids) const {
  using namespace autograd;
  if (ids.empty()) throw std::invalid_argument("embed: empty token sequence");
  if (ids.size() > cfg_.max_length)
    throw std::invalid_argument("embed: sequence longer than max_length");
  std::vector<int> pos(ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  Var x = gather_rows(tape.parameter(token_embeddings_), ids) +
          gather_rows(tape.parameter(position_embeddings_), pos);
  return embedding_norm_(x);
}

Var ToyTextTransformer::contextualize(Var embedded) const {
  if (embedded.cols() != cfg_.hidden)
    throw std::invalid_argument("contextualize: input width " + std::to_string(embedded.cols()) +
                                " != hidden " + std::to_string(cfg_.hidden));
  if (embedded.rows() == 0) throw std::invalid_argument("contextualize: empty sequence");
  if (static_cast<std::size_t>(embedded.rows()) > cfg_.max_length)
    throw std::invalid_argument("contextualize: sequence longer than max_length");
  Var h = embedded;
  for (const auto& b : blocks_) h = b(h);
  return h;
}

autograd::ParameterList ToyTextTransformer::parameters() {
  autograd::ParameterList out{&token_embeddings_, &position_embeddings_};
  embedding_norm_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  return out;
}

autograd::ConstParameterList ToyTextTransformer::parameters() const {
  autograd::ConstParameterList out{&token_embeddings_, &position_embeddings_};
  embedding_norm_.collect(out);
  for (const auto& b : blocks_) b.collect(out);
  return out;
}

std::unique_ptr<TrainableTextModel> ToyTextTransformer::clone() const {
  return std::make_unique<ToyTextTransformer>(*this);
}

}  // namespace mcvl

#include <doctest.h>

#include "helpers.hpp"
#include "mcvl/text_model.hpp"

using namespace mcvl;

namespace {

ToyTextTransformer small_model(nn::Pooling pooling = nn::Pooling::kMean, std::size_t max_length = 128) {
  ToyTextConfig cfg;
  cfg.hidden = 16;
  cfg.ffn_dim = 32;
  cfg.pooling = pooling;
  cfg.max_length = max_length;
  cfg.seed = 3;
  return ToyTextTransformer(WordTokenizer::from_corpus({"the cat eats fish", "a dog runs"}), cfg);
}

}  // namespace

TEST_SUITE("text_model") {

TEST_CASE("split_words and tokenizer") {
  CHECK(split_words("  The CAT, eats... fish! ") == std::vector<std::string>{"the", "cat", "eats", "fish"});
  const auto tok = WordTokenizer::from_corpus({"b a", "a c"});
  CHECK(tok.tokens() == std::vector<std::string>{"[UNK]", "a", "b", "c"});
  CHECK(tok.encode("c A zebra") == std::vector<int>{3, 1, 0});
  const auto dir = testing::scratch_dir("text_model");
  tok.save((dir / "tok.txt").string());
  CHECK(WordTokenizer::load((dir / "tok.txt").string()).tokens() == tok.tokens());
}

TEST_CASE("pooled output is the mean of token outputs") {
  const auto model = small_model();
  Tape tape(false);
  const auto enc = encode_text(tape, model, model.tokenize("the cat eats fish"));
  CHECK(enc.tokens.rows() == 4);
  CHECK(enc.tokens.cols() == 16);
  const Vector mean = enc.tokens.value().colwise().mean().transpose();
  CHECK((enc.pooled.value().row(0).transpose() - mean).cwiseAbs().maxCoeff() < 1e-12);

  const auto first = small_model(nn::Pooling::kFirstToken);
  Tape t2(false);
  const auto e2 = encode_text(t2, first, first.tokenize("the cat eats fish"));
  CHECK(e2.pooled.value().row(0) == e2.tokens.value().row(0));
}

TEST_CASE("deterministic construction and encoding") {
  CHECK(encode_text_pooled(small_model(), "a dog runs") == encode_text_pooled(small_model(), "a dog runs"));
  CHECK(encode_text_pooled(small_model(), "a dog runs") != encode_text_pooled(small_model(), "the cat eats fish"));
}

TEST_CASE("a gradient step changes the output") {
  auto model = small_model();
  const Vector before = encode_text_pooled(model, "the cat eats");
  std::mt19937_64 rng(1);
  const Matrix probe = testing::random_matrix(16, 1, rng);
  auto params = model.parameters();
  autograd::zero_grad(params);
  {
    Tape tape;
    const auto enc = encode_text(tape, model, model.tokenize("the cat eats"));
    tape.backward(matmul(enc.pooled, tape.constant(probe)));
  }
  CHECK(autograd::global_grad_norm(params) > 0.0);
  for (auto* p : params) p->value -= 0.1 * p->grad;
  const Vector after = encode_text_pooled(model, "the cat eats");
  CHECK((after - before).norm() > 1e-6);
  CHECK(after.dot(probe.col(0)) < before.dot(probe.col(0)));
}

TEST_CASE("overlong input keeps the head") {
  const auto model = small_model(nn::Pooling::kMean, 3);
  CHECK(truncate_tail({1, 2, 3, 4, 5}, 3) == std::vector<int>{1, 2, 3});
  CHECK(truncate_tail({1, 2}, 3) == std::vector<int>{1, 2});
  CHECK(encode_text_pooled(model, "the cat eats fish") == encode_text_pooled(model, "the cat eats"));
}

TEST_CASE("clones are independent") {
  auto model = small_model();
  auto copy = model.clone();
  CHECK(encode_text_pooled(*copy, "a dog") == encode_text_pooled(model, "a dog"));
  for (auto* p : copy->parameters()) p->value.array() += 0.5;
  CHECK(encode_text_pooled(*copy, "a dog") != encode_text_pooled(model, "a dog"));
}

TEST_CASE("embedding norm is jittered away from identity") {
  const auto model = small_model();
  CHECK((model.embedding_norm().gain.value.array() - 1.0).abs().maxCoeff() > 0.0);
  CHECK(model.embedding_norm().bias.value.cwiseAbs().maxCoeff() > 0.0);
}

}  // TEST_SUITE

#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mcvl/fusion.hpp"

using namespace mcvl;

namespace {

const std::vector<std::string> kWords{"pan", "oil", "stir", "knife", "onion", "cut", "bowl", "egg"};

WordTokenizer test_tokenizer() {
  return WordTokenizer::from_corpus({"what is she doing in the kitchen", "she cuts the onion slowly",
                                     "pan oil stir knife onion cut bowl egg", "first then"});
}

FusionConfig test_config(FusionVariant v, Eigen::Index video_dim = 12) {
  FusionConfig cfg;
  cfg.variant = v;
  cfg.text.hidden = 16;
  cfg.text.ffn_dim = 32;
  cfg.text.seed = 5;
  cfg.fusion_ffn_dim = 32;
  cfg.video_dim = video_dim;
  return cfg;
}

TokenizedVideo tokens_for(int windows, int per_window) {
  TokenizedVideo tv;
  tv.video_id = "v";
  for (int w = 0; w < windows; ++w) {
    std::vector<ScoredWord> win;
    for (int j = 0; j < per_window; ++j) {
      const int idx = (w * per_window + j) % static_cast<int>(kWords.size());
      win.push_back(ScoredWord{idx, kWords[idx], 1.0 - 0.1 * j});
    }
    tv.windows.push_back(win);
  }
  return tv;
}

std::string question_of_length(int l) {
  static const std::vector<std::string> pool{"what", "is", "she", "doing", "in", "the", "kitchen"};
  std::string q;
  for (int i = 0; i < l; ++i) q += (i ? " " : "") + pool[i % pool.size()];
  return q;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("variant names round-trip") {
  for (auto v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS((void)parse_variant("conti_conti"), std::invalid_argument);
}

TEST_CASE("config round-trips through key-value text") {
  auto cfg = test_config(FusionVariant::kContiText);
  cfg.use_asr = true;
  cfg.tokens.k = 7;
  KeyValueConfig kv;
  cfg.write_to(kv);
  const auto back = FusionConfig::from_config(kv);
  KeyValueConfig kv2;
  back.write_to(kv2);
  CHECK(kv.dump() == kv2.dump());
  CHECK(back.variant == FusionVariant::kContiText);
  CHECK(back.tokens.k == 7);
}

TEST_CASE("all variants emit the same embedding width over a shape sweep") {
  std::mt19937_64 rng(1);
  for (auto v : kAllVariants) {
    const FusionModel model(test_config(v), test_tokenizer());
    CHECK(model.embedding_dim() == 16);
    for (int t = 1; t <= 8; ++t) {
      const VideoFeatures f{testing::random_matrix(t, 12, rng), 1.5};
      const TokenizedVideo tv = tokens_for(t, 2);
      for (int l = 1; l <= 16; l += (v == FusionVariant::kTextText ? 1 : 3)) {
        const Vector e = model.fuse(VideoInput{&f, &tv}, question_of_length(l));
        CHECK(e.size() == 16);
        CHECK(e.allFinite());
      }
    }
    CHECK(model.encode_answer("onion").size() == 16);
  }
}

TEST_CASE("text_text equals encoding the concatenated string") {
  const FusionModel model(test_config(FusionVariant::kTextText), test_tokenizer());
  const TokenizedVideo tv = tokens_for(2, 3);
  const std::string q = "what is she doing";
  const Vector fused = model.fuse(VideoInput{nullptr, &tv}, q);
  const Vector direct = encode_text_pooled(model.text_model(), q + " " + render_token_sequence(tv, false));
  CHECK(fused == direct);

  const TokenizedVideo empty{"v", {}, {}};
  CHECK(model.fuse(VideoInput{nullptr, &empty}, q) == encode_text_pooled(model.text_model(), q));
}

TEST_CASE("assembly order is question, speech, video words") {
  auto cfg = test_config(FusionVariant::kTextText);
  cfg.use_asr = true;
  cfg.temporal_markers = true;
  const FusionModel model(cfg, test_tokenizer());
  const TokenizedVideo tv = tokens_for(2, 1);
  CHECK(model.assemble_text("what is she doing", "she cuts the onion", &tv) ==
        "what is she doing she cuts the onion first pan then oil");
  cfg.use_asr = false;
  const FusionModel no_asr(cfg, test_tokenizer());
  CHECK(no_asr.assemble_text("what is she doing", "she cuts the onion", &tv) == "what is she doing first pan then oil");
  CHECK(model.fuse(VideoInput{nullptr, &tv}, "what is she doing", "she cuts the onion") ==
        encode_text_pooled(model.text_model(), "what is she doing she cuts the onion first pan then oil"));
}

TEST_CASE("projector norm starts as a bitwise copy of the text embedding norm") {
  const FusionModel model(test_config(FusionVariant::kContiText), test_tokenizer());
  const auto& src = model.text_model().embedding_norm();
  const auto& dst = model.projector()->last_layer_norm();
  CHECK(dst.gain.value == src.gain.value);
  CHECK(dst.bias.value == src.bias.value);
  CHECK(dst.eps == src.eps);
  CHECK((src.gain.value.array() != 1.0).any());
}

TEST_CASE("projector norm init can be disabled") {
  auto cfg = test_config(FusionVariant::kContiText);
  cfg.projector_norm_init = false;
  const FusionModel model(cfg, test_tokenizer());
  const auto& src = model.text_model().embedding_norm();
  const auto& dst = model.projector()->last_layer_norm();
  CHECK(dst.gain.value != src.gain.value);
  CHECK(dst.gain.value == Matrix::Ones(1, 16));
  CHECK(dst.bias.value == Matrix::Zero(1, 16));
}

TEST_CASE("projector outputs carry the copied affine statistics") {
  const FusionModel model(test_config(FusionVariant::kContiText), test_tokenizer());
  const auto& ln = model.projector()->last_layer_norm();
  std::mt19937_64 rng(2);
  autograd::Tape tape(false);
  const Matrix x = testing::random_matrix(1000, 12, rng);
  const std::vector<int> segments(1000, 0);
  // Positions are limited, so feed the rows in chunks.
  const auto& proj = *model.projector();
  double worst_mean = 0.0, worst_var = 0.0;
  for (Eigen::Index start = 0; start < 1000; start += 100) {
    const Var out = proj(tape.constant(x.middleRows(start, 100)), std::span<const int>(segments).subspan(0, 100));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const Eigen::ArrayXd z =
          ((out.value().row(i) - ln.bias.value.row(0)).array() / ln.gain.value.row(0).array()).transpose();
      worst_mean = std::max(worst_mean, std::abs(z.mean()));
      worst_var = std::max(worst_var, std::abs((z - z.mean()).square().mean() - 1.0));
    }
  }
  CHECK(worst_mean < 1e-3);
  CHECK(worst_var < 1e-3);
}

TEST_CASE("text_multi encodes video words with the text model weights") {
  const FusionModel model(test_config(FusionVariant::kTextMulti), test_tokenizer());
  const auto groups = model.parameter_report();
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.name);
  CHECK(names == std::vector<std::string>{"G", "G_A", "H"});

  FusionModel trainable = model;
  const TokenizedVideo tv = tokens_for(1, 2);
  auto params = trainable.trainable_parameters();
  autograd::zero_grad(params);
  autograd::Tape tape;
  const Var e = trainable.fuse_text_multi(tape, tv, "what is she doing");
  tape.backward(mean_rows(matmul(e, tape.constant(Matrix::Ones(16, 1)))));
  auto* tokens = trainable.text_model().parameters()[0];
  const auto& tok = dynamic_cast<const ToyTextTransformer&>(trainable.text_model()).tokenizer();
  CHECK(tokens->grad.row(tok.id("pan")).norm() > 0.0);
  CHECK(tokens->grad.row(tok.id("what")).norm() > 0.0);
  CHECK(tokens->grad.row(tok.id("egg")).norm() == 0.0);
}

TEST_CASE("answer model starts equal and stays independent") {
  FusionModel model(test_config(FusionVariant::kTextText), test_tokenizer());
  CHECK(model.encode_answer("cut onion") == encode_text_pooled(model.text_model(), "cut onion"));
  const TokenizedVideo tv = tokens_for(1, 2);
  const Vector fused = model.fuse(VideoInput{nullptr, &tv}, "what is she doing");
  for (auto* p : model.answer_model().parameters()) p->value.array() += 0.25;
  CHECK(model.fuse(VideoInput{nullptr, &tv}, "what is she doing") == fused);
  CHECK(model.encode_answer("cut onion") != encode_text_pooled(model.text_model(), "cut onion"));
  CHECK_THROWS_AS((void)model.encode_answer(""), std::invalid_argument);
}

TEST_CASE("copies do not share parameters") {
  const FusionModel a(test_config(FusionVariant::kContiMulti), test_tokenizer());
  FusionModel b = a;
  const VideoFeatures f{Matrix::Ones(2, 12), 1.5};
  CHECK(a.fuse(VideoInput{&f, nullptr}, "what") == b.fuse(VideoInput{&f, nullptr}, "what"));
  for (auto* p : b.trainable_parameters()) p->value.array() *= 1.1;
  CHECK(a.fuse(VideoInput{&f, nullptr}, "what") != b.fuse(VideoInput{&f, nullptr}, "what"));
}

TEST_CASE("checkpoints reload bitwise") {
  std::mt19937_64 rng(3);
  const VideoFeatures f{testing::random_matrix(3, 12, rng), 1.5};
  const TokenizedVideo tv = tokens_for(2, 2);
  for (auto v : kAllVariants) {
    FusionModel model(test_config(v), test_tokenizer());
    for (auto* p : model.trainable_parameters()) p->value += 0.01 * testing::random_matrix(p->value.rows(), p->value.cols(), rng);
    const auto dir = testing::scratch_dir("ckpt_" + variant_name(v));
    model.save(dir.string());
    const FusionModel back = FusionModel::load(dir.string());
    CHECK(back.variant() == v);
    CHECK(back.fuse(VideoInput{&f, &tv}, "what is she doing") == model.fuse(VideoInput{&f, &tv}, "what is she doing"));
    CHECK(back.encode_answer("egg") == model.encode_answer("egg"));
  }
}

TEST_CASE("errors on the wrong variant or empty video") {
  const FusionModel tt(test_config(FusionVariant::kTextText), test_tokenizer());
  const FusionModel cm(test_config(FusionVariant::kContiMulti), test_tokenizer());
  const VideoFeatures f{Matrix::Ones(2, 12), 1.5};
  const VideoFeatures empty{Matrix(0, 12), 1.5};
  const VideoFeatures wrong{Matrix::Ones(2, 5), 1.5};
  autograd::Tape tape(false);
  CHECK_THROWS_AS((void)tt.fuse_conti_multi(tape, f, "what"), std::logic_error);
  CHECK_THROWS_AS((void)cm.fuse_text_text(tape, tokens_for(1, 1), "what"), std::logic_error);
  CHECK_THROWS_AS((void)cm.fuse_conti_multi(tape, empty, "what"), std::invalid_argument);
  CHECK_THROWS_AS((void)cm.fuse_conti_multi(tape, wrong, "what"), std::invalid_argument);
  CHECK_THROWS_AS((void)cm.fuse(tape, VideoInput{nullptr, nullptr}, "what"), std::invalid_argument);
}

TEST_CASE("adapter only when widths differ") {
  CHECK(FusionModel(test_config(FusionVariant::kContiMulti, 12), test_tokenizer()).video_adapter() != nullptr);
  CHECK(FusionModel(test_config(FusionVariant::kContiMulti, 16), test_tokenizer()).video_adapter() == nullptr);
}

TEST_CASE("text_text has the fewest parameter groups") {
  std::map<FusionVariant, std::size_t> groups;
  for (auto v : kAllVariants) groups[v] = FusionModel(test_config(v), test_tokenizer()).parameter_report().size();
  for (auto v : kAllVariants)
    if (v != FusionVariant::kTextText) CHECK(groups[FusionVariant::kTextText] < groups[v]);
  CHECK(groups[FusionVariant::kTextText] == 2);
}

}  // TEST_SUITE

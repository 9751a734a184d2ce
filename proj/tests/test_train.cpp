#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "mcvl/common.hpp"
#include "pipeline.hpp"

using namespace mcvl;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.num_samples = 48;
  s.test_samples = 12;
  s.vocab_size = 40;
  s.answers_per_corpus = 12;
  s.dim = 16;
  return s;
}

TrainConfig tiny_config(FusionVariant v = FusionVariant::kTextText) {
  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.model.variant = v;
  cfg.model.text.hidden = 16;
  cfg.model.text.ffn_dim = 32;
  cfg.model.fusion_ffn_dim = 32;
  cfg.model.tokens.k = 2;
  return cfg;
}

const testing::Pipeline& tiny_pipeline() {
  static const testing::Pipeline p(tiny_spec(), tiny_config().model.tokens);
  return p;
}

std::vector<double> losses(const RunRecord& r) {
  std::vector<double> out;
  for (const auto& e : r.epochs) out.push_back(e.mean_loss);
  return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("config keys, validation and hashing") {
  TrainConfig cfg = tiny_config();
  const auto back = TrainConfig::from_config(cfg.to_config());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.to_config().dump() == cfg.to_config().dump());
  KeyValueConfig kv = cfg.to_config();
  kv.set("learning_rte", "0.1");
  CHECK_THROWS_AS((void)TrainConfig::from_config(kv), DataError);
  TrainConfig bad = cfg;
  bad.fewshot_fraction = 0.0;
  CHECK_THROWS_AS((void)bad.validate(), DataError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS((void)bad.validate(), DataError);
  bad = cfg;
  bad.seed = 9;
  CHECK(bad.hash() != cfg.hash());
}

TEST_CASE("built-in defaults") {
  const TrainConfig cfg;
  CHECK(cfg.learning_rate == 0.00005);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.epochs == 20);
  CHECK(cfg.grad_clip_norm == 1.0);
  CHECK(cfg.lr_decay_per_epoch == 0.9);
}

TEST_CASE("learning rate schedule is exact") {
  const TrainConfig cfg;
  for (int e = 0; e < 20; ++e) CHECK(learning_rate_at(cfg, e) == 0.00005 * std::pow(0.9, e));
}

TEST_CASE("identical runs give identical loss curves") {
  const auto& p = tiny_pipeline();
  const auto cfg = tiny_config();
  auto a = p.make_model(cfg);
  auto b = p.make_model(cfg);
  const auto ra = train(a, p.train_samples, p.bank, cfg);
  const auto rb = train(b, p.train_samples, p.bank, cfg);
  CHECK(losses(ra) == losses(rb));
  CHECK(ra.config_hash == cfg.hash());
  CHECK(ra.variant == "text_text");
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    CHECK(ra.epochs[e].learning_rate == learning_rate_at(cfg, static_cast<int>(e)));
    CHECK(ra.epochs[e].max_grad_norm_after_clip <= cfg.grad_clip_norm + 1e-6);
    CHECK(ra.epochs[e].steps == 6);
  }
}

TEST_CASE("single sample batches have zero loss and leave parameters unchanged") {
  const auto& p = tiny_pipeline();
  auto cfg = tiny_config();
  cfg.batch_size = 1;
  cfg.epochs = 1;
  auto model = p.make_model(cfg);
  const auto before = nn::get_values(std::as_const(model).trainable_parameters());
  const std::vector<Sample> one{p.train_samples.front()};
  const auto r = train(model, one, p.bank, cfg);
  CHECK(r.epochs[0].mean_loss == 0.0);
  CHECK(nn::get_values(std::as_const(model).trainable_parameters()) == before);
}

TEST_CASE("loss decreases over the first epochs") {
  const auto& p = tiny_pipeline();
  auto cfg = tiny_config();
  cfg.epochs = 5;
  auto model = p.make_model(cfg);
  const auto curve = losses(train(model, p.train_samples, p.bank, cfg));
  for (std::size_t e = 1; e < curve.size(); ++e) CHECK(curve[e] < curve[e - 1]);
}

TEST_CASE("every variant trains without touching the frozen encoders") {
  const auto& p = tiny_pipeline();
  const auto digest = p.frozen_digest();
  for (auto v : kAllVariants) {
    auto cfg = tiny_config(v);
    cfg.epochs = 1;
    auto model = p.make_model(cfg);
    const auto r = train(model, p.train_samples, p.bank, cfg);
    CHECK(std::isfinite(r.epochs[0].mean_loss));
    CHECK(p.frozen_digest() == digest);
  }
}

TEST_CASE("clipping caps the applied gradient norm") {
  const auto& p = tiny_pipeline();
  auto cfg = tiny_config();
  cfg.grad_clip_norm = 1e-3;
  cfg.epochs = 1;
  auto model = p.make_model(cfg);
  const auto r = train(model, p.train_samples, p.bank, cfg);
  CHECK(r.epochs[0].max_grad_norm_before_clip > 1e-3);
  CHECK(r.epochs[0].max_grad_norm_after_clip <= 1e-3 * (1 + 1e-6));
}

TEST_CASE("non-finite parameters raise a numeric error") {
  const auto& p = tiny_pipeline();
  auto cfg = tiny_config();
  cfg.epochs = 1;
  auto model = p.make_model(cfg);
  for (auto* param : model.answer_model().parameters()) param->value.setConstant(std::nan(""));
  CHECK_THROWS_AS((void)train(model, p.train_samples, p.bank, cfg), NumericError);
}

TEST_CASE("training step gradient matches finite differences") {
  const auto& p = tiny_pipeline();
  const auto cfg = tiny_config();
  auto model = p.make_model(cfg);
  std::vector<const Sample*> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back(&p.train_samples[i]);
  auto params = model.trainable_parameters();
  autograd::zero_grad(params);
  {
    Tape tape;
    tape.backward(batch_loss(tape, model, batch, p.bank, cfg.task));
  }
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t pi = 0; pi < params.size(); pi += 5) {
    auto* param = params[pi];
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(3, param->value.size()); ++j) {
      const Eigen::Index idx = (j * 7919) % param->value.size();
      double& x = param->value.data()[idx];
      const double orig = x;
      x = orig + h;
      Tape up(false);
      const double fu = batch_loss(up, model, batch, p.bank, cfg.task).value()(0, 0);
      x = orig - h;
      Tape down(false);
      const double fd = batch_loss(down, model, batch, p.bank, cfg.task).value()(0, 0);
      x = orig;
      const double numeric = (fu - fd) / (2 * h);
      const double analytic = param->grad.data()[idx];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-4, std::abs(numeric)));
      ++checked;
    }
  }
  CHECK(checked > 10);
  CHECK(worst < 1e-3);
}

TEST_CASE("few-shot subsets") {
  std::vector<std::size_t> all(100);
  std::iota(all.begin(), all.end(), 0);
  CHECK(fewshot_indices(100, 1.0, 3) == all);
  const auto tenth = fewshot_indices(100, 0.1, 3);
  CHECK(tenth.size() == 10);
  CHECK(std::is_sorted(tenth.begin(), tenth.end()));
  CHECK(std::set<std::size_t>(tenth.begin(), tenth.end()).size() == 10);
  CHECK(fewshot_indices(100, 0.1, 3) == tenth);
  CHECK(fewshot_indices(7, 0.5, 0).size() == 4);
  CHECK(fewshot_indices(1000, 0.01, 0).size() == 10);
  CHECK_THROWS_AS((void)fewshot_indices(0, 0.5, 0), DataError);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto small = fewshot_indices(200, 0.1, seed, true);
    const auto large = fewshot_indices(200, 0.5, seed, true);
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  }
  bool some_not_nested = false;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto small = fewshot_indices(200, 0.1, seed);
    const auto large = fewshot_indices(200, 0.5, seed);
    some_not_nested |= !std::includes(large.begin(), large.end(), small.begin(), small.end());
  }
  CHECK(some_not_nested);
  const std::vector<std::string> items{"a", "b", "c", "d"};
  CHECK(fewshot_subsample(items, 1.0, 0) == items);
}

TEST_CASE("few-shot training keeps the full-data iteration count") {
  const auto& p = tiny_pipeline();
  auto cfg = tiny_config();
  cfg.epochs = 2;
  const auto subset = fewshot_subsample(p.train_samples, 0.1, 0);
  CHECK(subset.size() == 5);
  auto model = p.make_model(cfg);
  const auto r = train(model, subset, p.bank, cfg, p.train_samples.size());
  CHECK(r.train_samples == 5);
  for (const auto& e : r.epochs) CHECK(e.steps == 6);
}

TEST_CASE("run records append and reload") {
  const auto dir = testing::scratch_dir("runs");
  RunRecord r;
  r.config_hash = "abc";
  r.seed = 4;
  r.variant = "text_text";
  r.train_samples = 10;
  r.epochs.push_back(EpochStats{0, 0.1, 2.5, 3.0, 1.0, 2});
  r.metrics["accuracy"] = 0.75;
  const auto path = (dir / "run.jsonl").string();
  append_run_record(path, r);
  r.seed = 5;
  append_run_record(path, r);
  const auto back = load_run_records(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].seed == 4);
  CHECK(back[1].seed == 5);
  CHECK(back[0].epochs[0].mean_loss == 2.5);
  CHECK(back[0].metrics.at("accuracy") == 0.75);
}

TEST_CASE("video bank reports missing entries") {
  const auto& p = tiny_pipeline();
  CHECK_THROWS_AS((void)p.bank.input("nope", FusionVariant::kTextText), DataError);
  const auto in = p.bank.input(p.train_samples[0].video_id, FusionVariant::kContiText);
  CHECK(in.features != nullptr);
}

}  // TEST_SUITE

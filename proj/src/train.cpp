#include "mcvl/train.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "mcvl/common.hpp"

namespace mcvl {

using json = nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "learning_rate", "lr_decay_per_epoch", "batch_size", "epochs", "grad_clip_norm", "seed",
      "fewshot_fraction", "nested_fewshot", "temperature", "weight_decay", "task",
      // forwarded to the model
      "variant", "hidden", "text_layers", "heads", "text_ffn_dim", "max_text_length",
      "embedding_norm_spread", "fusion_blocks", "fusion_ffn_dim", "fusion_max_length", "video_dim",
      "projector_norm_init", "use_asr", "temporal_markers", "pooling", "k", "pool_kernel",
      "max_segments", "similarity"};
  return keys;
}

std::string num(double v) { return json(v).dump(); }

}  // namespace

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
  for (const auto& [k, _] : c.entries())
    if (!known_keys().contains(k)) throw DataError("unknown config key '" + k + "'");
  TrainConfig t;
  t.learning_rate = c.get_double("learning_rate", t.learning_rate);
  t.lr_decay_per_epoch = c.get_double("lr_decay_per_epoch", t.lr_decay_per_epoch);
  t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
  t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
  t.grad_clip_norm = c.get_double("grad_clip_norm", t.grad_clip_norm);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  t.fewshot_fraction = c.get_double("fewshot_fraction", t.fewshot_fraction);
  t.nested_fewshot = c.get_bool("nested_fewshot", t.nested_fewshot);
  t.temperature = c.get_double("temperature", t.temperature);
  t.weight_decay = c.get_double("weight_decay", t.weight_decay);
  try {
    t.task = parse_task(c.get_string("task", task_name(t.task)));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  t.model = FusionConfig::from_config(c);
  t.validate();
  return t;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  model.write_to(c);
  c.set("learning_rate", num(learning_rate));
  c.set("lr_decay_per_epoch", num(lr_decay_per_epoch));
  c.set("batch_size", std::to_string(batch_size));
  c.set("epochs", std::to_string(epochs));
  c.set("grad_clip_norm", num(grad_clip_norm));
  c.set("seed", std::to_string(seed));
  c.set("fewshot_fraction", num(fewshot_fraction));
  c.set("nested_fewshot", nested_fewshot ? "true" : "false");
  c.set("temperature", num(temperature));
  c.set("weight_decay", num(weight_decay));
  c.set("task", task_name(task));
  return c;
}

std::string TrainConfig::hash() const { return to_hex(fnv1a(to_config().dump())); }

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw DataError(std::string(name) + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  positive(lr_decay_per_epoch, "lr_decay_per_epoch");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(grad_clip_norm, "grad_clip_norm");
  positive(temperature, "temperature");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw DataError("weight_decay must be non-negative");
  if (!(fewshot_fraction > 0 && fewshot_fraction <= 1))
    throw DataError("fewshot_fraction must lie in (0, 1]");
  positive(static_cast<double>(model.text.hidden), "hidden");
  positive(model.text.layers, "text_layers");
  positive(model.tokens.k, "k");
  positive(model.tokens.kernel, "pool_kernel");
  positive(model.tokens.max_segments, "max_segments");
  positive(static_cast<double>(model.video_dim), "video_dim");
}

std::vector<Sample> samples_from_qa(const std::vector<QaRecord>& records) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.answers.empty()) throw DataError("QA record for '" + r.video_id + "' has no answer");
    out.push_back({r.video_id, r.question, r.asr, r.answers.front()});
  }
  return out;
}

std::vector<Sample> samples_from_retrieval(const std::vector<RetrievalRecord>& records) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.video_id, r.speech, std::nullopt, r.caption});
  return out;
}

VideoInput VideoBank::input(std::string_view id, FusionVariant variant) const {
  VideoInput in;
  if (uses_text_tokens(variant)) {
    auto it = tokens.find(id);
    if (it == tokens.end()) throw DataError("no text tokens for video '" + std::string(id) + "'");
    in.tokens = &it->second;
  } else {
    auto it = features.find(id);
    if (it == features.end()) throw DataError("no features for video '" + std::string(id) + "'");
    in.features = &it->second;
  }
  return in;
}

VideoBank build_video_bank(const FrozenVideoEncoder& encoder, const std::vector<std::string>& ids,
                           const Vocabulary* vocab, const TokenConfig& tokens) {
  VideoBank bank;
  for (const auto& id : ids) {
    if (bank.features.contains(id)) continue;
    VideoFeatures f = encoder.encode_video(id);
    if (vocab != nullptr) bank.tokens.emplace(id, tokenize_video(id, f, *vocab, tokens));
    bank.features.emplace(id, std::move(f));
  }
  return bank;
}

WordTokenizer tokenizer_for(const std::vector<Sample>& samples, const VideoBank& bank,
                            const std::vector<std::string>& extra_text) {
  std::vector<std::string> corpus = {"first then"};
  for (const auto& s : samples) {
    corpus.push_back(s.text);
    corpus.push_back(s.target);
    if (s.asr) corpus.push_back(*s.asr);
  }
  for (const auto& [_, tv] : bank.tokens)
    for (const auto& w : tv.pooled()) corpus.push_back(w);
  corpus.insert(corpus.end(), extra_text.begin(), extra_text.end());
  return WordTokenizer::from_corpus(corpus);
}

void append_run_record(const std::string& path, const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"learning_rate", e.learning_rate},
                      {"mean_loss", e.mean_loss},
                      {"max_grad_norm_before_clip", e.max_grad_norm_before_clip},
                      {"max_grad_norm_after_clip", e.max_grad_norm_after_clip},
                      {"steps", e.steps}});
  json j = {{"config_hash", r.config_hash}, {"seed", r.seed},       {"variant", r.variant},
            {"train_samples", r.train_samples}, {"epochs", epochs}, {"metrics", r.metrics},
            {"wall_seconds", r.wall_seconds}};
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path);
  out << j.dump() << '\n';
}

std::vector<RunRecord> load_run_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<RunRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      RunRecord r;
      r.config_hash = j.at("config_hash").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.variant = j.at("variant").get<std::string>();
      r.train_samples = j.at("train_samples").get<std::size_t>();
      for (const auto& e : j.at("epochs"))
        r.epochs.push_back({e.at("epoch").get<int>(), e.at("learning_rate").get<double>(),
                            e.at("mean_loss").get<double>(), e.at("max_grad_norm_before_clip").get<double>(),
                            e.at("max_grad_norm_after_clip").get<double>(), e.at("steps").get<int>()});
      r.metrics = j.at("metrics").get<std::map<std::string, double>>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

AdamOptimizer::AdamOptimizer(autograd::ParameterList params, double weight_decay, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamOptimizer::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (weight_decay_ > 0) p->value *= 1.0 - learning_rate * weight_decay_;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseAbs2();
    p->value.array() -=
        learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

Var batch_loss(Tape& tape, const FusionModel& model, const std::vector<const Sample*>& batch,
               const VideoBank& bank, Task task, double temperature) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<Var> fused, answers;
  fused.reserve(batch.size());
  answers.reserve(batch.size());
  for (const Sample* s : batch) {
    const VideoInput in = bank.input(s->video_id, model.variant());
    std::optional<std::string_view> asr;
    if (s->asr) asr = *s->asr;
    fused.push_back(model.fuse(tape, in, s->text, asr));
    answers.push_back(model.encode_answer(tape, s->target));
  }
  Var scores = autograd::matmul_nt(autograd::concat_rows(fused), autograd::concat_rows(answers));
  const auto labels = diagonal_labels(static_cast<Eigen::Index>(batch.size()));
  const auto kind = task == Task::kRetrieval ? ContrastiveLoss::kSymmetric : ContrastiveLoss::kNce;
  if (!scores.value().allFinite()) {
    std::ostringstream msg;
    msg << "non-finite scores in a batch of " << batch.size() << " starting at video '"
        << batch.front()->video_id << "'";
    throw NumericError(msg.str());
  }
  return contrastive_loss(scores, kind, labels, temperature);
}

RunRecord train(FusionModel& model, const std::vector<Sample>& samples, const VideoBank& bank,
                const TrainConfig& cfg, std::size_t full_size, const TrainHooks& hooks) {
  cfg.validate();
  if (samples.empty()) throw DataError("train: empty dataset");
  if (full_size == 0) full_size = samples.size();
  const auto start = std::chrono::steady_clock::now();

  RunRecord record;
  record.config_hash = cfg.hash();
  record.seed = cfg.seed;
  record.variant = variant_name(model.variant());
  record.train_samples = samples.size();

  auto params = model.trainable_parameters();
  AdamOptimizer optimizer(params, cfg.weight_decay);
  std::mt19937_64 rng(Fnv1a{}.update_pod(cfg.seed).update("shuffle").digest());

  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (full_size + batch_size - 1) / batch_size;
  std::vector<std::size_t> order(samples.size());
  std::size_t cursor = order.size();  // forces a shuffle before the first draw
  auto next_index = [&] {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    double loss_sum = 0.0;
    std::size_t remaining = full_size;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t n = std::min({batch_size, remaining, samples.size()});
      remaining -= std::min(remaining, batch_size);
      std::vector<const Sample*> batch;
      batch.reserve(n);
      for (std::size_t i = 0; i < n; ++i) batch.push_back(&samples[next_index()]);

      autograd::zero_grad(params);
      Tape tape;
      Var loss = batch_loss(tape, model, batch, bank, cfg.task, cfg.temperature);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " step " << step << " (lr " << lr
            << ", batch of " << n << " starting at video '" << batch.front()->video_id << "')";
        throw NumericError(msg.str());
      }
      tape.backward(loss);
      const double before = autograd::clip_grad_norm(params, cfg.grad_clip_norm);
      if (!std::isfinite(before))
        throw NumericError("non-finite gradient norm at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
      stats.max_grad_norm_before_clip = std::max(stats.max_grad_norm_before_clip, before);
      stats.max_grad_norm_after_clip =
          std::max(stats.max_grad_norm_after_clip, autograd::global_grad_norm(params));
      optimizer.step(lr);
      loss_sum += value;
      ++stats.steps;
    }
    stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
    spdlog::info("epoch {} lr {:.3g} loss {:.5f}", epoch, lr, stats.mean_loss);
    record.epochs.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats, record);
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

std::vector<std::size_t> fewshot_indices(std::size_t n, double fraction, std::uint64_t seed, bool nested) {
  if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("fewshot fraction must lie in (0, 1]");
  // The small slack keeps e.g. 0.07 * 100 at 7 items despite rounding.
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (count == 0) throw DataError("fewshot subsample is empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count == n) return idx;
  Fnv1a h;
  h.update_pod(seed).update("fewshot");
  if (!nested) h.update_pod(fraction);
  std::mt19937_64 rng(h.digest());
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace mcvl

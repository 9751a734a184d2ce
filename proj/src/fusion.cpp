#include "mcvl/fusion.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mcvl/common.hpp"

namespace mcvl {

namespace fs = std::filesystem;
using json = nlohmann::json;
using autograd::concat_rows;
using autograd::slice_rows;

std::string variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::kContiMulti: return "conti_multi";
    case FusionVariant::kContiText: return "conti_text";
    case FusionVariant::kTextMulti: return "text_multi";
    case FusionVariant::kTextText: return "text_text";
  }
  return "text_text";
}

FusionVariant parse_variant(std::string_view name) {
  for (FusionVariant v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected conti_multi, conti_text, text_multi or text_text)");
}

FusionConfig FusionConfig::from_config(const KeyValueConfig& c) {
  FusionConfig f;
  try {
    f.variant = parse_variant(c.get_string("variant", variant_name(f.variant)));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  f.text.hidden = c.get_int("hidden", f.text.hidden);
  f.text.layers = static_cast<int>(c.get_int("text_layers", f.text.layers));
  f.text.heads = static_cast<int>(c.get_int("heads", f.text.heads));
  f.text.ffn_dim = c.get_int("text_ffn_dim", f.text.ffn_dim);
  f.text.max_length = static_cast<std::size_t>(c.get_int("max_text_length", static_cast<long long>(f.text.max_length)));
  f.text.embedding_norm_spread = c.get_double("embedding_norm_spread", f.text.embedding_norm_spread);
  f.text.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  f.fusion_blocks = static_cast<int>(c.get_int("fusion_blocks", f.fusion_blocks));
  f.fusion_ffn_dim = c.get_int("fusion_ffn_dim", f.fusion_ffn_dim);
  f.fusion_max_length = c.get_int("fusion_max_length", f.fusion_max_length);
  f.video_dim = c.get_int("video_dim", f.video_dim);
  f.projector_norm_init = c.get_bool("projector_norm_init", f.projector_norm_init);
  f.use_asr = c.get_bool("use_asr", f.use_asr);
  f.temporal_markers = c.get_bool("temporal_markers", f.temporal_markers);
  const std::string pooling = c.get_string("pooling", "mean");
  if (pooling != "mean" && pooling != "first") throw DataError("pooling must be 'mean' or 'first'");
  f.pooling = pooling == "mean" ? nn::Pooling::kMean : nn::Pooling::kFirstToken;
  f.text.pooling = f.pooling;
  f.tokens.k = static_cast<int>(c.get_int("k", f.tokens.k));
  f.tokens.kernel = static_cast<int>(c.get_int("pool_kernel", f.tokens.kernel));
  f.tokens.max_segments = static_cast<int>(c.get_int("max_segments", f.tokens.max_segments));
  const std::string sim = c.get_string("similarity", "dot");
  if (sim != "dot" && sim != "cosine") throw DataError("similarity must be 'dot' or 'cosine'");
  f.tokens.similarity = sim == "dot" ? Similarity::kInnerProduct : Similarity::kCosine;
  return f;
}

void FusionConfig::write_to(KeyValueConfig& c) const {
  c.set("variant", variant_name(variant));
  c.set("hidden", std::to_string(text.hidden));
  c.set("text_layers", std::to_string(text.layers));
  c.set("heads", std::to_string(text.heads));
  c.set("text_ffn_dim", std::to_string(text.ffn_dim));
  c.set("max_text_length", std::to_string(text.max_length));
  c.set("embedding_norm_spread", json(text.embedding_norm_spread).dump());
  c.set("seed", std::to_string(text.seed));
  c.set("fusion_blocks", std::to_string(fusion_blocks));
  c.set("fusion_ffn_dim", std::to_string(fusion_ffn_dim));
  c.set("fusion_max_length", std::to_string(fusion_max_length));
  c.set("video_dim", std::to_string(video_dim));
  c.set("projector_norm_init", projector_norm_init ? "true" : "false");
  c.set("use_asr", use_asr ? "true" : "false");
  c.set("temporal_markers", temporal_markers ? "true" : "false");
  c.set("pooling", pooling == nn::Pooling::kMean ? "mean" : "first");
  c.set("k", std::to_string(tokens.k));
  c.set("pool_kernel", std::to_string(tokens.kernel));
  c.set("max_segments", std::to_string(tokens.max_segments));
  c.set("similarity", tokens.similarity == Similarity::kInnerProduct ? "dot" : "cosine");
}

FusionModel::FusionModel(const FusionConfig& cfg, WordTokenizer tokenizer)
    : FusionModel(cfg, std::make_unique<ToyTextTransformer>(std::move(tokenizer), [&] {
                    ToyTextConfig t = cfg.text;
                    t.pooling = cfg.pooling;
                    return t;
                  }())) {}

FusionModel::FusionModel(const FusionConfig& cfg, std::unique_ptr<TrainableTextModel> text_model)
    : cfg_(cfg), text_(std::move(text_model)) {
  if (!text_) throw std::invalid_argument("FusionModel: null text model");
  answer_ = text_->clone();
  build_modules();
  std::string report;
  for (const auto& g : parameter_report()) report += " " + g.name + "=" + std::to_string(g.count);
  spdlog::info("{} model parameters:{}", variant_name(cfg_.variant), report);
}

FusionModel::FusionModel(const FusionModel& other)
    : cfg_(other.cfg_),
      text_(other.text_->clone()),
      answer_(other.answer_->clone()),
      fusion_(other.fusion_),
      projector_(other.projector_),
      adapter_(other.adapter_) {}

FusionModel& FusionModel::operator=(const FusionModel& other) {
  if (this != &other) *this = FusionModel(other);
  return *this;
}

void FusionModel::build_modules() {
  const Eigen::Index hidden = text_->hidden_dim();
  std::mt19937_64 rng(Fnv1a{}.update_pod(cfg_.text.seed).update("fusion-modules").digest());
  nn::ShallowTransformerConfig sc;
  sc.width = hidden;
  sc.blocks = cfg_.fusion_blocks;
  sc.heads = cfg_.text.heads;
  sc.ffn_dim = cfg_.fusion_ffn_dim;
  sc.max_length = cfg_.fusion_max_length;
  switch (cfg_.variant) {
    case FusionVariant::kContiMulti:
      if (cfg_.video_dim != hidden) adapter_.emplace("video_adapter", cfg_.video_dim, hidden, rng);
      sc.segment_types = 2;
      fusion_.emplace("fusion", sc, rng);
      break;
    case FusionVariant::kContiText: {
      sc.input_dim = cfg_.video_dim;
      sc.segment_types = 1;
      projector_.emplace("projector", sc, rng);
      if (cfg_.projector_norm_init) {
        nn::LayerNorm& last = projector_->last_layer_norm();
        last.gain.value = text_->embedding_norm().gain.value;
        last.bias.value = text_->embedding_norm().bias.value;
        last.eps = text_->embedding_norm().eps;
      }
      break;
    }
    case FusionVariant::kTextMulti:
      sc.segment_types = 2;
      fusion_.emplace("fusion", sc, rng);
      break;
    case FusionVariant::kTextText:
      break;
  }
}

std::string FusionModel::text_side(std::string_view question, std::optional<std::string_view> asr) const {
  std::string out(question);
  if (cfg_.use_asr && asr && !asr->empty()) {
    out += ' ';
    out += *asr;
  }
  return out;
}

std::string FusionModel::assemble_text(std::string_view question, std::optional<std::string_view> asr,
                                       const TokenizedVideo* video) const {
  std::string out = text_side(question, asr);
  if (video != nullptr && !video->pooled().empty()) {
    out += ' ';
    out += render_token_sequence(*video, cfg_.temporal_markers);
  }
  return out;
}

namespace {

std::vector<int> require_tokens(const TrainableTextModel& m, std::string_view text, const char* what) {
  std::vector<int> ids = m.tokenize(text);
  if (ids.empty()) throw std::invalid_argument(std::string(what) + ": text has no tokens");
  return ids;
}

/// Drops trailing video rows so text + video fits in `max_length`.
Var fit_video(Var video, Eigen::Index text_rows, Eigen::Index max_length) {
  const Eigen::Index room = max_length - text_rows;
  if (video.rows() <= room) return video;
  spdlog::warn("combined sequence of {} rows exceeds {}; dropping trailing video rows",
               text_rows + video.rows(), max_length);
  if (room <= 0) return Var();
  return slice_rows(video, 0, room);
}

Var fuse_with_transformer(const nn::ShallowTransformer& h, Var text, Var video) {
  Var kept = fit_video(video, text.rows(), h.config().max_length);
  if (!kept.valid()) return h(text);
  std::vector<int> segments(static_cast<std::size_t>(text.rows() + kept.rows()), 1);
  std::fill(segments.begin(), segments.begin() + text.rows(), 0);
  const Var parts[] = {text, kept};
  return h(concat_rows(parts), segments);
}

}  // namespace

Var FusionModel::fuse_conti_multi(Tape& tape, const VideoFeatures& video, std::string_view text) const {
  if (cfg_.variant != FusionVariant::kContiMulti)
    throw std::logic_error("fuse_conti_multi called on a " + variant_name(cfg_.variant) + " model");
  if (video.length() == 0) throw std::invalid_argument("fuse_conti_multi: video has no segments");
  if (video.dim() != cfg_.video_dim)
    throw std::invalid_argument("fuse_conti_multi: feature width " + std::to_string(video.dim()) +
                                " != configured " + std::to_string(cfg_.video_dim));
  const VideoFeatures sub = subsample_features(video, cfg_.tokens.max_segments);
  auto enc = encode_text(tape, *text_, require_tokens(*text_, text, "fuse_conti_multi"));
  Var v = tape.constant(sub.segments);
  if (adapter_) v = (*adapter_)(v);
  return pooled(fuse_with_transformer(*fusion_, enc.tokens, v));
}

Var FusionModel::fuse_conti_text(Tape& tape, const VideoFeatures& video, std::string_view text) const {
  if (cfg_.variant != FusionVariant::kContiText)
    throw std::logic_error("fuse_conti_text called on a " + variant_name(cfg_.variant) + " model");
  if (video.length() == 0) throw std::invalid_argument("fuse_conti_text: video has no segments");
  if (video.dim() != cfg_.video_dim)
    throw std::invalid_argument("fuse_conti_text: feature width " + std::to_string(video.dim()) +
                                " != configured " + std::to_string(cfg_.video_dim));
  const VideoFeatures sub = subsample_features(video, cfg_.tokens.max_segments);
  const auto ids = truncate_tail(require_tokens(*text_, text, "fuse_conti_text"), text_->max_length());
  Var embedded = text_->embed(tape, ids);
  Var projected = fit_video((*projector_)(tape.constant(sub.segments)), embedded.rows(),
                            static_cast<Eigen::Index>(text_->max_length()));
  Var seq = embedded;
  if (projected.valid()) {
    const Var parts[] = {embedded, projected};
    seq = concat_rows(parts);
  }
  return pooled(text_->contextualize(seq));
}

Var FusionModel::fuse_text_multi(Tape& tape, const TokenizedVideo& video, std::string_view text) const {
  if (cfg_.variant != FusionVariant::kTextMulti)
    throw std::logic_error("fuse_text_multi called on a " + variant_name(cfg_.variant) + " model");
  auto question = encode_text(tape, *text_, require_tokens(*text_, text, "fuse_text_multi"));
  std::vector<int> word_ids;
  if (!video.pooled().empty())
    word_ids = text_->tokenize(render_token_sequence(video, cfg_.temporal_markers));
  if (word_ids.empty()) {
    spdlog::debug("video '{}' has no tokens; fusing the text branch alone", video.video_id);
    return pooled((*fusion_)(question.tokens, std::vector<int>(static_cast<std::size_t>(question.tokens.rows()), 0)));
  }
  // Same G (shared weights) for both branches.
  auto words = encode_text(tape, *text_, std::move(word_ids));
  return pooled(fuse_with_transformer(*fusion_, question.tokens, words.tokens));
}

Var FusionModel::fuse_text_text(Tape& tape, const TokenizedVideo& video, std::string_view text) const {
  if (cfg_.variant != FusionVariant::kTextText)
    throw std::logic_error("fuse_text_text called on a " + variant_name(cfg_.variant) + " model");
  std::vector<int> ids = require_tokens(*text_, text, "fuse_text_text");
  if (!video.pooled().empty()) {
    const auto words = text_->tokenize(render_token_sequence(video, cfg_.temporal_markers));
    ids.insert(ids.end(), words.begin(), words.end());
  }
  return encode_text(tape, *text_, std::move(ids)).pooled;
}

Var FusionModel::fuse(Tape& tape, const VideoInput& video, std::string_view question,
                      std::optional<std::string_view> asr) const {
  const std::string text = text_side(question, asr);
  auto need_features = [&]() -> const VideoFeatures& {
    if (video.features == nullptr) throw std::invalid_argument(variant_name(cfg_.variant) + " needs video features");
    return *video.features;
  };
  auto need_tokens = [&]() -> const TokenizedVideo& {
    if (video.tokens == nullptr) throw std::invalid_argument(variant_name(cfg_.variant) + " needs video tokens");
    return *video.tokens;
  };
  switch (cfg_.variant) {
    case FusionVariant::kContiMulti: return fuse_conti_multi(tape, need_features(), text);
    case FusionVariant::kContiText: return fuse_conti_text(tape, need_features(), text);
    case FusionVariant::kTextMulti: return fuse_text_multi(tape, need_tokens(), text);
    case FusionVariant::kTextText: return fuse_text_text(tape, need_tokens(), text);
  }
  throw std::logic_error("unreachable");
}

Vector FusionModel::fuse(const VideoInput& video, std::string_view question,
                         std::optional<std::string_view> asr) const {
  Tape tape(false);
  return fuse(tape, video, question, asr).value().row(0).transpose();
}

Var FusionModel::encode_answer(Tape& tape, std::string_view answer) const {
  if (answer.empty()) throw std::invalid_argument("encode_answer: empty answer");
  return encode_text(tape, *answer_, require_tokens(*answer_, answer, "encode_answer")).pooled;
}

Vector FusionModel::encode_answer(std::string_view answer) const {
  Tape tape(false);
  return encode_answer(tape, answer).value().row(0).transpose();
}

autograd::ParameterList FusionModel::trainable_parameters() {
  autograd::ParameterList out = text_->parameters();
  for (auto* p : answer_->parameters()) out.push_back(p);
  if (fusion_) fusion_->collect(out);
  if (projector_) projector_->collect(out);
  if (adapter_) adapter_->collect(out);
  return out;
}

autograd::ConstParameterList FusionModel::trainable_parameters() const {
  autograd::ConstParameterList out = std::as_const(*text_).parameters();
  for (const auto* p : std::as_const(*answer_).parameters()) out.push_back(p);
  if (fusion_) fusion_->collect(out);
  if (projector_) projector_->collect(out);
  if (adapter_) adapter_->collect(out);
  return out;
}

std::vector<ParameterGroup> FusionModel::parameter_report() const {
  std::vector<ParameterGroup> out;
  out.push_back({"G", autograd::count_parameters(std::as_const(*text_).parameters())});
  out.push_back({"G_A", autograd::count_parameters(std::as_const(*answer_).parameters())});
  auto group = [&](const char* name, const auto& module) {
    autograd::ConstParameterList l;
    module.collect(l);
    out.push_back({name, autograd::count_parameters(l)});
  };
  if (fusion_) group("H", *fusion_);
  if (projector_) group("P", *projector_);
  if (adapter_) group("video_adapter", *adapter_);
  return out;
}

void FusionModel::save(const std::string& dir) const {
  const auto* toy = dynamic_cast<const ToyTextTransformer*>(text_.get());
  if (toy == nullptr) throw std::logic_error("FusionModel::save supports the toy text model only");
  const fs::path root(dir);
  fs::create_directories(root);
  KeyValueConfig kv;
  cfg_.write_to(kv);
  const std::string cfg_text = kv.dump();
  {
    std::ofstream out(root / "config.cfg", std::ios::trunc);
    out << cfg_text;
  }
  toy->tokenizer().save((root / "tokenizer.txt").string());
  nn::save_parameters((root / "text.params").string(), std::as_const(*text_).parameters());
  nn::save_parameters((root / "answer.params").string(), std::as_const(*answer_).parameters());
  auto blob = [&](const char* file, const auto& module) {
    autograd::ConstParameterList l;
    module.collect(l);
    nn::save_parameters((root / file).string(), l);
  };
  if (fusion_) blob("fusion.params", *fusion_);
  if (projector_) blob("projector.params", *projector_);
  if (adapter_) blob("adapter.params", *adapter_);
  json manifest = {{"variant", variant_name(cfg_.variant)},
                   {"embedding_dim", embedding_dim()},
                   {"video_dim", cfg_.video_dim},
                   {"text_model", "toy"},
                   {"tokenizer_size", toy->tokenizer().size()},
                   {"config_hash", to_hex(fnv1a(cfg_text))}};
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

FusionModel FusionModel::load(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream min(root / "manifest.json");
  if (!min) throw DataError("not a checkpoint directory: " + dir);
  json manifest;
  try {
    manifest = json::parse(min);
  } catch (const json::exception& e) {
    throw DataError(dir + "/manifest.json: " + e.what());
  }
  const auto kv = KeyValueConfig::load((root / "config.cfg").string());
  if (manifest.value("config_hash", "") != to_hex(fnv1a(kv.dump())))
    throw DataError(dir + ": config.cfg does not match the manifest's config hash");
  FusionConfig cfg = FusionConfig::from_config(kv);
  FusionModel model(cfg, WordTokenizer::load((root / "tokenizer.txt").string()));
  nn::load_parameters((root / "text.params").string(), model.text_->parameters());
  nn::load_parameters((root / "answer.params").string(), model.answer_->parameters());
  auto blob = [&](const char* file, auto& module) {
    autograd::ParameterList l;
    module.collect(l);
    nn::load_parameters((root / file).string(), l);
  };
  if (model.fusion_) blob("fusion.params", *model.fusion_);
  if (model.projector_) blob("projector.params", *model.projector_);
  if (model.adapter_) blob("adapter.params", *model.adapter_);
  return model;
}

}  // namespace mcvl

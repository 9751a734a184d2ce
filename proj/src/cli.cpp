#include "mcvl/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "mcvl/common.hpp"
#include "mcvl/datasets.hpp"
#include "mcvl/eval.hpp"
#include "mcvl/fusion.hpp"
#include "mcvl/token_retrieval.hpp"
#include "mcvl/train.hpp"

namespace mcvl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Missing output location or an inconsistent flag combination.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string resolve_output(const std::string& flag, const std::string& default_name) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0')
    return (fs::path(root) / default_name).string();
  throw UsageError(std::string("no output location: pass the output flag or set ") + kOutputRootEnv);
}

std::string checksum_of(const fs::path& p) { return to_hex(file_checksum(p.string())); }

/// Inputs, resolved configuration and artifact checksums of one command.
/// Only deterministic content goes in here; wall-clock lives in logs.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) : command_(std::move(command)), args_(args) {}

  void config(const KeyValueConfig& cfg) {
    config_ = json::object();
    for (const auto& [k, v] : cfg.entries()) config_[k] = v;
    hash_ = to_hex(fnv1a(cfg.dump()));
  }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const std::string& path) { inputs_[path] = checksum_of(path); }
  void input_digest(const std::string& name, std::uint64_t digest) { inputs_[name] = to_hex(digest); }
  /// Files under `root`, keyed by path relative to `base`.
  void artifacts_under(const fs::path& root, const fs::path& base, const std::set<std::string>& skip = {}) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && !skip.contains(e.path().filename().string())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) artifacts_[fs::relative(f, base).generic_string()] = checksum_of(f);
  }
  void artifact(const fs::path& file, const fs::path& base) {
    artifacts_[fs::relative(file, base).generic_string()] = checksum_of(file);
  }
  void log_file(const fs::path& file, const fs::path& base) { logs_.push_back(fs::relative(file, base).generic_string()); }
  [[nodiscard]] const std::string& hash() const { return hash_; }

  void write(const fs::path& path) const {
    json j = {{"command", command_},  {"args", args_},           {"config", config_},
              {"config_hash", hash_}, {"seed", seed_},           {"inputs", inputs_},
              {"artifacts", artifacts_}, {"logs", logs_}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  json config_ = json::object();
  std::string hash_ = to_hex(fnv1a(""));
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> artifacts_;
  std::vector<std::string> logs_;
};

void write_timing(const fs::path& path, double seconds) {
  std::ofstream out(path, std::ios::trunc);
  out << json{{"wall_seconds", seconds}}.dump() << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  if (out.empty()) throw DataError(path + " is empty");
  return out;
}

Similarity parse_similarity(const std::string& s) {
  if (s == "dot") return Similarity::kInnerProduct;
  if (s == "cosine") return Similarity::kCosine;
  throw DataError("similarity must be 'dot' or 'cosine'");
}

// ---------------------------------------------------------------- data

struct Splits {
  Task task = Task::kOpenQa;
  std::vector<QaRecord> qa;
  std::vector<RetrievalRecord> retrieval;

  [[nodiscard]] std::vector<Sample> samples() const {
    return task == Task::kRetrieval ? samples_from_retrieval(retrieval) : samples_from_qa(qa);
  }
  [[nodiscard]] std::vector<std::string> video_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : qa) ids.push_back(r.video_id);
    for (const auto& r : retrieval) ids.push_back(r.video_id);
    return ids;
  }
};

Splits load_split(const fs::path& data_dir, const std::string& split, Task task, Manifest& manifest) {
  const fs::path file = data_dir / (split + ".jsonl");
  Splits s;
  s.task = task;
  if (task == Task::kRetrieval) {
    s.retrieval = load_retrieval(file.string());
  } else {
    s.qa = load_qa(file.string());
  }
  manifest.input(file.string());
  return s;
}

std::string default_tokens_path(const fs::path& data_dir, const std::string& flag) {
  return flag.empty() ? (data_dir / "tokens.jsonl").string() : flag;
}

VideoBank load_bank(const fs::path& data_dir, const std::string& tokens_path, FusionVariant variant,
                    const std::vector<std::string>& ids, Manifest& manifest) {
  VideoBank bank;
  if (uses_text_tokens(variant)) {
    if (!fs::exists(tokens_path))
      throw DataError("variant " + variant_name(variant) + " needs text tokens; " + tokens_path +
                      " not found (run `tokenize` first or pass --tokens)");
    for (auto& tv : load_tokenized(tokens_path)) {
      std::string id = tv.video_id;
      bank.tokens.emplace(std::move(id), std::move(tv));
    }
    manifest.input(tokens_path);
    for (const auto& id : ids)
      if (!bank.tokens.contains(id)) throw DataError(tokens_path + ": no tokens for video '" + id + "'");
  } else {
    const std::string store_path = (data_dir / "manifest.tsv").string();
    const PrecomputedFeatureStore store(store_path);
    manifest.input(store_path);
    std::vector<std::string> unique_ids;
    for (const auto& id : ids) {
      if (bank.features.contains(id)) continue;
      bank.features.emplace(id, store.encode_video(id));
      unique_ids.push_back(id);
    }
    manifest.input_digest("features", features_digest(store, unique_ids));
  }
  return bank;
}

std::vector<std::string> optional_corpus(const fs::path& data_dir) {
  const fs::path p = data_dir / "corpus.txt";
  if (!fs::exists(p)) return {};
  return read_lines(p.string());
}

// ---------------------------------------------------------------- config

/// Built-in defaults, then the file, then flags; each key remembers where
/// its value came from.
struct ResolvedConfig {
  KeyValueConfig merged;
  std::map<std::string, std::string> source;
};

ResolvedConfig resolve_config(const std::string& file, const KeyValueConfig& flags) {
  ResolvedConfig r;
  const KeyValueConfig defaults = TrainConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) {
    r.merged.set(k, v);
    r.source[k] = "default";
  }
  if (!file.empty()) {
    const KeyValueConfig f = KeyValueConfig::load(file);
    for (const auto& [k, v] : f.entries()) {
      r.merged.set(k, v);
      r.source[k] = "file";
    }
  }
  for (const auto& [k, v] : flags.entries()) {
    r.merged.set(k, v);
    r.source[k] = "flag";
  }
  return r;
}

void print_config(std::ostream& out, const ResolvedConfig& r, const std::string& hash) {
  out << "resolved config " << hash << " (flags > file > defaults)\n";
  for (const auto& [k, v] : r.merged.entries()) out << "  " << k << " = " << v << "  [" << r.source.at(k) << "]\n";
}

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size;
  std::optional<double> learning_rate;
  std::string variant, task;
  std::vector<std::string> sets;

  [[nodiscard]] KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    if (seed) kv.set("seed", std::to_string(*seed));
    if (epochs) kv.set("epochs", std::to_string(*epochs));
    if (batch_size) kv.set("batch_size", std::to_string(*batch_size));
    if (learning_rate) kv.set("learning_rate", json(*learning_rate).dump());
    if (!variant.empty()) kv.set("variant", variant);
    if (!task.empty()) kv.set("task", task);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string x) {
        x.erase(0, x.find_first_not_of(" \t"));
        x.erase(x.find_last_not_of(" \t") + 1);
        return x;
      };
      kv.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return kv;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "key = value run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override: seed");
  cmd->add_option("--epochs", f.epochs, "override: epochs");
  cmd->add_option("--batch-size", f.batch_size, "override: batch_size");
  cmd->add_option("--learning-rate", f.learning_rate, "override: learning_rate");
  cmd->add_option("--variant", f.variant, "override: conti_multi|conti_text|text_multi|text_text");
  cmd->add_option("--task", f.task, "override: openqa|mcqa|retrieval");
  cmd->add_option("--set", f.sets, "override any config key (key=value, repeatable)");
}

/// TrainConfig from the resolved text; video_dim follows the data unless set.
TrainConfig finalize_config(ResolvedConfig& resolved, const fs::path& data_dir) {
  if (resolved.source["video_dim"] == "default" && fs::exists(data_dir / "manifest.tsv")) {
    const PrecomputedFeatureStore store((data_dir / "manifest.tsv").string());
    resolved.merged.set("video_dim", std::to_string(store.dim()));
    resolved.source["video_dim"] = "data";
  }
  return TrainConfig::from_config(resolved.merged);
}

// ---------------------------------------------------------------- evaluation

std::vector<EvalReportLine> evaluate(const FusionModel& model, Task task, const fs::path& data_dir,
                                     const Splits& test, const VideoBank& bank, CreditRule rule,
                                     const std::string& hash, Manifest& manifest) {
  std::vector<EvalReportLine> lines;
  switch (task) {
    case Task::kOpenQa: {
      const fs::path train_file = data_dir / "train.jsonl";
      const auto train_records = load_qa(train_file.string());
      manifest.input(train_file.string());
      const AnswerCorpus corpus = AnswerCorpus::from_records(train_records, model);
      const auto r = eval_open_ended(model, test.qa, bank, corpus, rule);
      lines.push_back({"openqa_accuracy", r.accuracy, test.qa.size(), hash});
      lines.push_back({"answer_corpus_size", static_cast<double>(corpus.size()), corpus.size(), hash});
      break;
    }
    case Task::kMultipleChoice:
      lines.push_back({"mcqa_accuracy", eval_multiple_choice(model, test.qa, bank), test.qa.size(), hash});
      break;
    case Task::kRetrieval: {
      const auto m = eval_retrieval(model, test.retrieval, bank);
      lines.push_back({"recall_at_1", m.r1, m.queries, hash});
      lines.push_back({"recall_at_5", m.r5, m.queries, hash});
      lines.push_back({"recall_at_10", m.r10, m.queries, hash});
      lines.push_back({"average_recall", m.average, m.queries, hash});
      break;
    }
  }
  return lines;
}

CreditRule parse_credit(const std::string& s) {
  if (s == "min-half") return CreditRule::kMinOfHalfMatches;
  if (s == "exact") return CreditRule::kExactMatch;
  throw DataError("--credit must be 'min-half' or 'exact'");
}

// ---------------------------------------------------------------- commands

struct BuildVocabArgs {
  std::string corpus, out, encoder, lexicon, source = "answer-word";
};

int cmd_build_vocab(const BuildVocabArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path out_dir = resolve_output(a.out, "vocab");
  const std::string encoder_path =
      a.encoder.empty() ? (fs::path(a.corpus).parent_path() / "encoder.json").string() : a.encoder;
  if (a.source != "answer-word" && a.source != "external-list")
    throw DataError("--source must be 'answer-word' or 'external-list'");
  Manifest manifest("build-vocab", args);
  KeyValueConfig cfg;
  cfg.set("source", a.source);
  cfg.set("lexicon", a.lexicon.empty() ? "bundled" : a.lexicon);
  manifest.config(cfg);
  spdlog::info("build-vocab config hash {}", manifest.hash());

  const SyntheticEncoderPair encoder = load_encoder_description(encoder_path);
  manifest.input(a.corpus);
  manifest.input(encoder_path);
  const auto lines = read_lines(a.corpus);
  std::optional<Vocabulary> vocab;
  if (a.source == "external-list") {
    vocab.emplace(vocabulary_from_words(lines, encoder));
  } else {
    WordlistTagger tagger;
    if (!a.lexicon.empty()) {
      tagger = WordlistTagger::with_lexicon(a.lexicon);
      manifest.input(a.lexicon);
    }
    vocab.emplace(build_vocabulary(lines, tagger, encoder));
  }
  fs::create_directories(out_dir);
  vocab->save(out_dir.string());
  manifest.artifacts_under(out_dir, out_dir, {"manifest.json"});
  manifest.write(out_dir / "manifest.json");
  out << "vocabulary: " << vocab->size() << " words, dim " << vocab->dim() << " -> " << out_dir.string() << '\n';
  return kExitOk;
}

struct TokenizeArgs {
  std::string features, vocab, out, similarity = "dot";
  int k = 15, kernel = 5, max_segments = 20;
};

int cmd_tokenize(const TokenizeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path out_file = resolve_output(a.out, "tokens.jsonl");
  Manifest manifest("tokenize", args);
  KeyValueConfig cfg;
  cfg.set("k", std::to_string(a.k));
  cfg.set("pool_kernel", std::to_string(a.kernel));
  cfg.set("max_segments", std::to_string(a.max_segments));
  cfg.set("similarity", a.similarity);
  manifest.config(cfg);
  spdlog::info("tokenize config hash {}", manifest.hash());

  TokenConfig tc;
  tc.k = a.k;
  tc.kernel = a.kernel;
  tc.max_segments = a.max_segments;
  tc.similarity = parse_similarity(a.similarity);
  if (tc.k < 1 || tc.kernel < 1 || tc.max_segments < 1) throw DataError("k, kernel and max-segments must be positive");

  const PrecomputedFeatureStore store(a.features);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  manifest.input(a.features);
  manifest.input_digest("features", features_digest(store, store.video_ids()));
  for (const char* f : {"words.txt", "embeddings.bin", "vocab.json"}) manifest.input((fs::path(a.vocab) / f).string());
  if (store.dim() != vocab.dim())
    throw DataError("feature dim " + std::to_string(store.dim()) + " != vocabulary dim " + std::to_string(vocab.dim()));
  if (static_cast<std::size_t>(tc.k) > vocab.size())
    throw DataError("k = " + std::to_string(tc.k) + " exceeds vocabulary size " + std::to_string(vocab.size()));

  std::vector<TokenizedVideo> videos;
  for (const auto& id : store.video_ids()) videos.push_back(tokenize_video(id, store.encode_video(id), vocab, tc));
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  save_tokenized(out_file.string(), videos);
  const fs::path base = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
  manifest.artifact(out_file, base);
  manifest.write(fs::path(out_file.string() + ".manifest.json"));
  out << "tokenized " << videos.size() << " videos -> " << out_file.string() << '\n';
  return kExitOk;
}

struct SynthArgs {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path out_dir = resolve_output(a.out, "synthetic");
  KeyValueConfig kv = KeyValueConfig::load(a.spec);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  SyntheticSpec spec;
  try {
    spec = SyntheticSpec::from_config(kv);
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(a.spec + ": " + e.what());
  }
  Manifest manifest("synth", args);
  manifest.config(spec.to_config());
  manifest.seed(spec.seed);
  manifest.input(a.spec);
  spdlog::info("synth config hash {}", manifest.hash());

  const SyntheticDataset data = generate_synthetic(spec);
  write_synthetic(data, out_dir.string());
  manifest.artifacts_under(out_dir, out_dir, {"manifest.json"});
  manifest.write(out_dir / "manifest.json");
  out << "synthetic " << task_name(spec.task) << " data: " << spec.num_samples << " train / " << spec.test_samples
      << " test -> " << out_dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  TrainFlags flags;
  std::string data, out, tokens, credit = "min-half";
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path data_dir(a.data);
  const fs::path out_dir = resolve_output(a.out, "train");
  ResolvedConfig resolved = resolve_config(a.flags.config, a.flags.to_kv());
  const TrainConfig cfg = finalize_config(resolved, data_dir);

  Manifest manifest("train", args);
  manifest.config(cfg.to_config());
  manifest.seed(cfg.seed);
  if (!a.flags.config.empty()) manifest.input(a.flags.config);
  print_config(out, resolved, manifest.hash());
  spdlog::info("train config hash {}", manifest.hash());

  const Splits train_split = load_split(data_dir, "train", cfg.task, manifest);
  const auto samples = train_split.samples();
  const std::string tokens_path = default_tokens_path(data_dir, a.tokens);
  std::optional<Splits> test_split;
  std::vector<std::string> ids = train_split.video_ids();
  if (fs::exists(data_dir / "test.jsonl")) {
    test_split = load_split(data_dir, "test", cfg.task, manifest);
    const auto more = test_split->video_ids();
    ids.insert(ids.end(), more.begin(), more.end());
  }
  const VideoBank bank = load_bank(data_dir, tokens_path, cfg.model.variant, ids, manifest);
  auto extra = optional_corpus(data_dir);
  if (!extra.empty()) manifest.input((data_dir / "corpus.txt").string());
  for (const auto& r : train_split.qa) extra.insert(extra.end(), r.negatives.begin(), r.negatives.end());

  FusionModel model(cfg.model, tokenizer_for(samples, bank, extra));
  RunRecord record = train(model, samples, bank, cfg);

  fs::create_directories(out_dir);
  model.save((out_dir / "checkpoint").string());
  {
    std::ofstream c(out_dir / "train_config.cfg", std::ios::trunc);
    c << cfg.to_config().dump();
  }
  std::vector<EvalReportLine> metrics;
  if (test_split) {
    metrics = evaluate(model, cfg.task, data_dir, *test_split, bank, parse_credit(a.credit), manifest.hash(), manifest);
    write_eval_report((out_dir / "eval.jsonl").string(), metrics);
    for (const auto& m : metrics) record.metrics[m.metric] = m.value;
  }
  {
    // Loss curve without wall-clock, so it can be checksummed.
    std::ofstream curve(out_dir / "loss_curve.jsonl", std::ios::trunc);
    for (const auto& e : record.epochs)
      curve << json{{"epoch", e.epoch}, {"learning_rate", e.learning_rate}, {"mean_loss", e.mean_loss}}.dump() << '\n';
  }
  append_run_record((out_dir / "run.jsonl").string(), record);
  write_timing(out_dir / "timing.json", seconds_since(start));
  manifest.artifacts_under(out_dir / "checkpoint", out_dir);
  manifest.artifact(out_dir / "train_config.cfg", out_dir);
  manifest.artifact(out_dir / "loss_curve.jsonl", out_dir);
  if (test_split) manifest.artifact(out_dir / "eval.jsonl", out_dir);
  manifest.log_file(out_dir / "run.jsonl", out_dir);
  manifest.log_file(out_dir / "timing.json", out_dir);
  manifest.write(out_dir / "manifest.json");

  out << "trained " << variant_name(cfg.model.variant) << " on " << samples.size() << " samples, final loss "
      << record.epochs.back().mean_loss << '\n';
  for (const auto& m : metrics) out << m.metric << " = " << m.value << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, data, task, report, tokens, split = "test", credit = "min-half";
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path report = resolve_output(a.report, "report.jsonl");
  const fs::path data_dir(a.data);
  Task task;
  try {
    task = parse_task(a.task);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const FusionModel model = FusionModel::load(a.checkpoint);
  Manifest manifest("eval", args);
  KeyValueConfig cfg;
  model.config().write_to(cfg);
  cfg.set("task", a.task);
  cfg.set("split", a.split);
  cfg.set("credit", a.credit);
  manifest.config(cfg);
  manifest.seed(model.config().text.seed);
  manifest.input((fs::path(a.checkpoint) / "manifest.json").string());
  for (const char* f : {"text.params", "answer.params"}) manifest.input((fs::path(a.checkpoint) / f).string());
  spdlog::info("eval config hash {}", manifest.hash());

  const Splits split = load_split(data_dir, a.split, task, manifest);
  const VideoBank bank =
      load_bank(data_dir, default_tokens_path(data_dir, a.tokens), model.variant(), split.video_ids(), manifest);
  const auto lines = evaluate(model, task, data_dir, split, bank, parse_credit(a.credit), manifest.hash(), manifest);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  write_eval_report(report.string(), lines);
  const fs::path base = report.has_parent_path() ? report.parent_path() : fs::path(".");
  manifest.artifact(report, base);
  manifest.write(fs::path(report.string() + ".manifest.json"));
  for (const auto& l : lines) out << l.metric << " = " << l.value << " (n=" << l.count << ")\n";
  return kExitOk;
}

struct FewshotArgs {
  TrainFlags flags;
  std::string data, out, tokens, credit = "min-half";
  std::vector<double> fractions = {1.0};
  std::vector<std::string> variants;
};

int cmd_fewshot(const FewshotArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path data_dir(a.data);
  const fs::path out_dir = resolve_output(a.out, "fewshot");
  ResolvedConfig resolved = resolve_config(a.flags.config, a.flags.to_kv());
  const TrainConfig base_cfg = finalize_config(resolved, data_dir);
  std::vector<FusionVariant> variants;
  for (const auto& v : a.variants) {
    if (v == "all") {
      variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
    } else {
      try {
        variants.push_back(parse_variant(v));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
  }
  if (variants.empty()) variants.push_back(base_cfg.model.variant);
  for (double f : a.fractions)
    if (!(f > 0 && f <= 1)) throw UsageError("fractions must lie in (0, 1]");

  Manifest manifest("fewshot", args);
  KeyValueConfig cfg = base_cfg.to_config();
  std::string fr, vs;
  for (double f : a.fractions) fr += (fr.empty() ? "" : ",") + json(f).dump();
  for (auto v : variants) vs += (vs.empty() ? "" : ",") + variant_name(v);
  cfg.set("fractions", fr);
  cfg.set("variants", vs);
  manifest.config(cfg);
  manifest.seed(base_cfg.seed);
  if (!a.flags.config.empty()) manifest.input(a.flags.config);
  print_config(out, resolved, manifest.hash());

  const Splits train_split = load_split(data_dir, "train", base_cfg.task, manifest);
  const Splits test_split = load_split(data_dir, "test", base_cfg.task, manifest);
  const auto samples = train_split.samples();
  auto ids = train_split.video_ids();
  const auto test_ids = test_split.video_ids();
  ids.insert(ids.end(), test_ids.begin(), test_ids.end());
  auto extra = optional_corpus(data_dir);

  fs::create_directories(out_dir);
  const fs::path results_path = out_dir / "results.jsonl";
  std::ofstream results(results_path, std::ios::trunc);
  for (FusionVariant v : variants) {
    TrainConfig cfg_v = base_cfg;
    cfg_v.model.variant = v;
    const VideoBank bank = load_bank(data_dir, default_tokens_path(data_dir, a.tokens), v, ids, manifest);
    for (double f : a.fractions) {
      cfg_v.fewshot_fraction = f;
      const auto subset = fewshot_subsample(samples, f, cfg_v.seed, cfg_v.nested_fewshot);
      FusionModel model(cfg_v.model, tokenizer_for(samples, bank, extra));
      RunRecord record = train(model, subset, bank, cfg_v, samples.size());
      const auto lines = evaluate(model, cfg_v.task, data_dir, test_split, bank, parse_credit(a.credit),
                                  cfg_v.hash(), manifest);
      for (const auto& m : lines) {
        record.metrics[m.metric] = m.value;
        results << json{{"variant", variant_name(v)}, {"fraction", f},        {"subset_size", subset.size()},
                        {"metric", m.metric},        {"value", m.value},     {"count", m.count},
                        {"config_hash", cfg_v.hash()}}
                       .dump()
                << '\n';
        out << variant_name(v) << " fraction " << f << " (" << subset.size() << " samples): " << m.metric << " = "
            << m.value << '\n';
      }
      append_run_record((out_dir / "run.jsonl").string(), record);
    }
  }
  results.close();
  write_timing(out_dir / "timing.json", seconds_since(start));
  manifest.artifact(results_path, out_dir);
  manifest.log_file(out_dir / "run.jsonl", out_dir);
  manifest.log_file(out_dir / "timing.json", out_dir);
  manifest.write(out_dir / "manifest.json");
  return kExitOk;
}

struct OverlapArgs {
  std::string tokens, data, out, split = "test";
};

int cmd_overlap(const OverlapArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path data_dir(a.data);
  Manifest manifest("overlap", args);
  KeyValueConfig cfg;
  cfg.set("split", a.split);
  manifest.config(cfg);
  const Splits split = load_split(data_dir, a.split, Task::kOpenQa, manifest);
  VideoBank bank = load_bank(data_dir, a.tokens, FusionVariant::kTextText, split.video_ids(), manifest);
  std::vector<std::string> answers;
  std::vector<std::vector<std::string>> words;
  for (const auto& r : split.qa) {
    answers.push_back(r.answers.front());
    words.push_back(bank.tokens.at(r.video_id).pooled());
  }
  const double proportion = overlap_statistic(answers, words);
  out << "overlap = " << proportion << " (n=" << answers.size() << ")\n";
  std::string out_flag = a.out;
  if (out_flag.empty() && std::getenv(kOutputRootEnv) == nullptr) return kExitOk;
  const fs::path out_dir = resolve_output(out_flag, "overlap");
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "overlap.json", std::ios::trunc);
    f << json{{"overlap", proportion}, {"count", answers.size()}, {"split", a.split}}.dump() << '\n';
  }
  manifest.artifact(out_dir / "overlap.json", out_dir);
  manifest.write(out_dir / "manifest.json");
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-channel video-language retrieval toolkit"};
  app.name("mcvl");
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  BuildVocabArgs bv;
  auto* c_bv = app.add_subcommand("build-vocab", "answer-word vocabulary with frozen word embeddings");
  c_bv->add_option("--corpus", bv.corpus, "sentences (or words with --source external-list), one per line")
      ->required()
      ->check(CLI::ExistingFile);
  c_bv->add_option("--out", bv.out, "output directory");
  c_bv->add_option("--encoder", bv.encoder, "encoder description (default: encoder.json beside the corpus)");
  c_bv->add_option("--lexicon", bv.lexicon, "extra tagger entries: word<TAB>NOUN|VERB|OTHER");
  c_bv->add_option("--source", bv.source, "answer-word|external-list");

  TokenizeArgs tk;
  auto* c_tk = app.add_subcommand("tokenize", "retrieve and pool text tokens for every video");
  c_tk->add_option("--features", tk.features, "feature manifest (manifest.tsv)")->required()->check(CLI::ExistingFile);
  c_tk->add_option("--vocab", tk.vocab, "vocabulary directory")->required()->check(CLI::ExistingDirectory);
  c_tk->add_option("--k", tk.k, "words per segment and per window");
  c_tk->add_option("--kernel", tk.kernel, "segments per pooling window");
  c_tk->add_option("--max-segments", tk.max_segments, "segments kept per video");
  c_tk->add_option("--similarity", tk.similarity, "dot|cosine");
  c_tk->add_option("--out", tk.out, "output token file (.jsonl)");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "generate a planted-signal synthetic dataset");
  c_sy->add_option("--spec", sy.spec, "key = value synthetic spec")->required()->check(CLI::ExistingFile);
  c_sy->add_option("--out", sy.out, "output directory");
  c_sy->add_option("--seed", sy.seed, "override: seed");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train one variant and save a checkpoint");
  add_train_flags(c_tr, tr.flags);
  c_tr->add_option("--data", tr.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_tr->add_option("--out", tr.out, "output directory");
  c_tr->add_option("--tokens", tr.tokens, "token file (default: <data>/tokens.jsonl)");
  c_tr->add_option("--credit", tr.credit, "open-ended credit: min-half|exact");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "evaluate a checkpoint");
  c_ev->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  c_ev->add_option("--data", ev.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_ev->add_option("--task", ev.task, "openqa|mcqa|retrieval")->required();
  c_ev->add_option("--report", ev.report, "report file (.jsonl)");
  c_ev->add_option("--tokens", ev.tokens, "token file (default: <data>/tokens.jsonl)");
  c_ev->add_option("--split", ev.split, "split name (default: test)");
  c_ev->add_option("--credit", ev.credit, "open-ended credit: min-half|exact");

  FewshotArgs fs_args;
  auto* c_fs = app.add_subcommand("fewshot", "train variants on seeded subsets with matched iterations");
  add_train_flags(c_fs, fs_args.flags);
  c_fs->add_option("--data", fs_args.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_fs->add_option("--out", fs_args.out, "output directory");
  c_fs->add_option("--tokens", fs_args.tokens, "token file (default: <data>/tokens.jsonl)");
  c_fs->add_option("--fractions", fs_args.fractions, "training fractions in (0, 1]")->delimiter(',');
  c_fs->add_option("--variants", fs_args.variants, "variants to train, or 'all'")->delimiter(',');
  c_fs->add_option("--credit", fs_args.credit, "open-ended credit: min-half|exact");

  OverlapArgs ov;
  auto* c_ov = app.add_subcommand("overlap", "share of answers overlapping the retrieved video words");
  c_ov->add_option("--tokens", ov.tokens, "token file")->required()->check(CLI::ExistingFile);
  c_ov->add_option("--data", ov.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_ov->add_option("--split", ov.split, "split name (default: test)");
  c_ov->add_option("--out", ov.out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }
  const auto level = spdlog::level::from_str(log_level);
  if (level == spdlog::level::off && log_level != "off") {
    err << "error: unknown log level '" << log_level << "'\n";
    return kExitUsage;
  }
  spdlog::set_level(level);

  std::vector<std::string> argv_record = {"mcvl"};
  argv_record.insert(argv_record.end(), args.begin(), args.end());
  try {
    if (c_bv->parsed()) return cmd_build_vocab(bv, argv_record, out);
    if (c_tk->parsed()) return cmd_tokenize(tk, argv_record, out);
    if (c_sy->parsed()) return cmd_synth(sy, argv_record, out);
    if (c_tr->parsed()) return cmd_train(tr, argv_record, out);
    if (c_ev->parsed()) return cmd_eval(ev, argv_record, out);
    if (c_fs->parsed()) return cmd_fewshot(fs_args, argv_record, out);
    if (c_ov->parsed()) return cmd_overlap(ov, argv_record, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace mcvl::cli

#include "qagen/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "qagen/error.hpp"
#include "qagen/text.hpp"

namespace qagen {

using nlohmann::json;

namespace {

std::string dump(const json& j, int indent = -1) {
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "': unexpected value " + dump(v));
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got " + dump(v));
  }
  return v.get<std::size_t>();
}

std::uint64_t get_u64(const json& v, const std::string& key) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
    return v.get<std::uint64_t>();
  }
  if (v.is_string()) {
    try {
      return std::stoull(v.get<std::string>());
    } catch (const std::exception&) {
    }
  }
  throw UsageError("config key '" + key + "': expected an unsigned 64-bit integer, got " + dump(v));
}

std::string get_str(const json& v, const std::string& key) { return get_as<std::string>(v, key); }

template <typename F>
auto parse_enum(const json& v, const std::string& key, F from_string) {
  const std::string s = get_str(v, key);
  try {
    return from_string(s);
  } catch (const UsageError& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

SyntheticFormat synthetic_format_from_string(const std::string& s) {
  if (s == "squad") return SyntheticFormat::squad;
  if (s == "mrqa") return SyntheticFormat::mrqa;
  throw UsageError("unknown output format '" + s + "'");
}

std::string to_string(SyntheticFormat f) { return f == SyntheticFormat::squad ? "squad" : "mrqa"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw UsageError("unknown optimizer '" + s + "'");
}

using Setter = std::function<void(PipelineConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> kSetters = {
      {"mode", [](auto& c, const json& v, const auto& k) { c.mode = parse_enum(v, k, mode_from_string); }},
      {"strategy", [](auto& c, const json& v, const auto& k) { c.decode.strategy = parse_enum(v, k, strategy_from_string); }},
      {"k", [](auto& c, const json& v, const auto& k) { c.decode.k = get_count(v, k); }},
      {"p", [](auto& c, const json& v, const auto& k) { c.decode.p = get_as<double>(v, k); }},
      {"beam_width", [](auto& c, const json& v, const auto& k) { c.decode.beam_width = get_count(v, k); }},
      {"nucleus_on_original", [](auto& c, const json& v, const auto& k) { c.decode.nucleus_on_original = get_as<bool>(v, k); }},
      {"n_samples", [](auto& c, const json& v, const auto& k) { c.n_samples = get_count(v, k); }},
      {"keep_m", [](auto& c, const json& v, const auto& k) { c.keep_m = get_count(v, k); }},
      {"pooling", [](auto& c, const json& v, const auto& k) { c.pooling = parse_enum(v, k, pooling_from_string); }},
      {"passage_count", [](auto& c, const json& v, const auto& k) { c.passage_count = get_count(v, k); }},
      {"min_tokens", [](auto& c, const json& v, const auto& k) { c.min_tokens = get_count(v, k); }},
      {"max_tokens", [](auto& c, const json& v, const auto& k) { c.max_tokens = get_count(v, k); }},
      {"seed", [](auto& c, const json& v, const auto& k) { c.seed = get_u64(v, k); }},
      {"workers", [](auto& c, const json& v, const auto& k) { c.workers = get_count(v, k); }},
      {"question_max_tokens", [](auto& c, const json& v, const auto& k) { c.limits.question_max = get_count(v, k); }},
      {"answer_max_tokens", [](auto& c, const json& v, const auto& k) { c.limits.answer_max = get_count(v, k); }},
      {"corpus", [](auto& c, const json& v, const auto& k) { c.corpus = get_str(v, k); }},
      {"corpus_format", [](auto& c, const json& v, const auto& k) { c.corpus_format = parse_enum(v, k, corpus_format_from_string); }},
      {"exclude_corpus", [](auto& c, const json& v, const auto& k) { c.exclude_corpus = get_str(v, k); }},
      {"exclude_format", [](auto& c, const json& v, const auto& k) { c.exclude_format = parse_enum(v, k, corpus_format_from_string); }},
      {"checkpoint", [](auto& c, const json& v, const auto& k) { c.checkpoint = get_str(v, k); }},
      {"out", [](auto& c, const json& v, const auto& k) { c.out = get_str(v, k); }},
      {"output_format", [](auto& c, const json& v, const auto& k) { c.output_format = parse_enum(v, k, synthetic_format_from_string); }},
      {"filter_strategy", [](auto& c, const json& v, const auto& k) { c.filter_strategy = parse_enum(v, k, filter_strategy_from_string); }},
      {"pairs", [](auto& c, const json& v, const auto& k) { c.pairs = get_str(v, k); }},
      {"predictions", [](auto& c, const json& v, const auto& k) { c.predictions = get_str(v, k); }},
      {"gold", [](auto& c, const json& v, const auto& k) { c.gold = get_str(v, k); }},
      {"gold_format", [](auto& c, const json& v, const auto& k) { c.gold_format = parse_enum(v, k, corpus_format_from_string); }},
      {"bucket_size", [](auto& c, const json& v, const auto& k) { c.bucket_size = get_count(v, k); }},
      {"sweep_axis", [](auto& c, const json& v, const auto& k) { c.sweep_axis = get_str(v, k); }},
      {"sweep_values", [](auto& c, const json& v, const auto& k) { c.sweep_values = get_as<std::vector<double>>(v, k); }},
      {"synthetic", [](auto& c, const json& v, const auto& k) { c.synthetic = get_str(v, k); }},
      {"synthetic_format", [](auto& c, const json& v, const auto& k) { c.synthetic_format = parse_enum(v, k, corpus_format_from_string); }},
      {"supervised", [](auto& c, const json& v, const auto& k) { c.supervised = get_str(v, k); }},
      {"supervised_format", [](auto& c, const json& v, const auto& k) { c.supervised_format = parse_enum(v, k, corpus_format_from_string); }},
      {"train_corpus", [](auto& c, const json& v, const auto& k) { c.train_corpus = get_str(v, k); }},
      {"train_format", [](auto& c, const json& v, const auto& k) { c.train_format = parse_enum(v, k, corpus_format_from_string); }},
      {"vocab_size", [](auto& c, const json& v, const auto& k) { c.vocab_size = get_count(v, k); }},
      {"dim", [](auto& c, const json& v, const auto& k) { c.model.dim = get_count(v, k); }},
      {"heads", [](auto& c, const json& v, const auto& k) { c.model.heads = get_count(v, k); }},
      {"encoder_layers", [](auto& c, const json& v, const auto& k) { c.model.encoder_layers = get_count(v, k); }},
      {"decoder_layers", [](auto& c, const json& v, const auto& k) { c.model.decoder_layers = get_count(v, k); }},
      {"ffn_dim", [](auto& c, const json& v, const auto& k) { c.model.ffn_dim = get_count(v, k); }},
      {"max_context", [](auto& c, const json& v, const auto& k) { c.model.max_context = get_count(v, k); }},
      {"max_target", [](auto& c, const json& v, const auto& k) { c.model.max_target = get_count(v, k); }},
      {"init_seed", [](auto& c, const json& v, const auto& k) { c.model.init_seed = get_u64(v, k); }},
      {"epochs", [](auto& c, const json& v, const auto& k) { c.train.epochs = get_count(v, k); }},
      {"learning_rate", [](auto& c, const json& v, const auto& k) { c.train.learning_rate = get_as<double>(v, k); }},
      {"batch_size", [](auto& c, const json& v, const auto& k) { c.train.batch_size = get_count(v, k); }},
      {"optimizer", [](auto& c, const json& v, const auto& k) { c.train.optimizer = parse_enum(v, k, optimizer_from_string); }},
  };
  return kSetters;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const PipelineConfig& cfg, const std::string& line) {
  if (!cfg.quiet) std::cerr << "[qagen] " << line << '\n';
}

json logprobs_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) {
    if (std::isfinite(x)) a.push_back(x);
    else a.push_back(nullptr);  // -inf: zero-probability token
  }
  return a;
}

std::vector<double> logprobs_from_json(const json& a, const std::string& where) {
  if (!a.is_array()) throw FormatError(where + ": logprobs must be an array");
  std::vector<double> out;
  for (const auto& x : a) {
    if (x.is_null()) out.push_back(-std::numeric_limits<double>::infinity());
    else if (x.is_number()) out.push_back(x.get<double>());
    else throw FormatError(where + ": logprob entries must be numbers or null");
  }
  return out;
}

std::filesystem::path out_dir(const PipelineConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  return dir;
}

void require(const std::string& value, const char* key, const char* command) {
  if (value.empty()) throw UsageError(std::string(command) + ": config key '" + key + "' is required");
}

FileDigest digest(const std::filesystem::path& p) { return {p.string(), sha256_file(p)}; }

void finish_manifest(RunManifest& m, const PipelineConfig& cfg) {
  write_file_atomic(std::filesystem::path(cfg.out) / "manifest.json", dump(m.to_json(), 2) + "\n");
}

RunManifest new_manifest(const char* subcommand, const PipelineConfig& cfg) {
  RunManifest m;
  m.subcommand = subcommand;
  m.seed = cfg.seed;
  m.config = config_to_json(cfg);
  return m;
}

// Wraps a stage so failures carry the stage name.
template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string("stage '") + name + "' failed: " + e.what());
  }
}

}  // namespace

std::string to_string(FilterStrategy s) {
  switch (s) {
    case FilterStrategy::lm:
      return "lm";
    case FilterStrategy::roundtrip:
      return "roundtrip";
    case FilterStrategy::none:
      return "none";
  }
  return "lm";
}

FilterStrategy filter_strategy_from_string(const std::string& s) {
  if (s == "lm") return FilterStrategy::lm;
  if (s == "roundtrip" || s == "round-trip") return FilterStrategy::roundtrip;
  if (s == "none") return FilterStrategy::none;
  throw UsageError("unknown filter strategy '" + s + "'");
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "keep_m") return SweepAxis::keep_m;
  if (s == "passage_count") return SweepAxis::passage_count;
  throw UsageError("unknown sweep axis '" + s + "'");
}

std::vector<std::string> PipelineConfig::warnings() const {
  std::vector<std::string> w;
  if (keep_m > n_samples) {
    w.push_back("keep_m (" + std::to_string(keep_m) + ") exceeds n_samples (" +
                std::to_string(n_samples) + "); every candidate will be kept");
  }
  return w;
}

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("configuration must be a flat JSON object");
  PipelineConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("unknown config key '" + key + "'");
    it->second(cfg, value, key);
  }
  cfg.decode.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.decode.validate();
  if (cfg.n_samples == 0) throw UsageError("config key 'n_samples' must be >= 1");
  if (cfg.keep_m == 0) throw UsageError("config key 'keep_m' must be >= 1");
  if (cfg.min_tokens > cfg.max_tokens) throw UsageError("config key 'min_tokens' exceeds 'max_tokens'");
  if (cfg.bucket_size == 0) throw UsageError("config key 'bucket_size' must be >= 1");
  return cfg;
}

json config_to_json(const PipelineConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"strategy", to_string(c.decode.strategy)},
              {"k", c.decode.k},
              {"p", c.decode.p},
              {"beam_width", c.decode.beam_width},
              {"nucleus_on_original", c.decode.nucleus_on_original},
              {"n_samples", c.n_samples},
              {"keep_m", c.keep_m},
              {"pooling", to_string(c.pooling)},
              {"passage_count", c.passage_count},
              {"min_tokens", c.min_tokens},
              {"max_tokens", c.max_tokens},
              {"seed", c.seed},
              {"workers", c.workers},
              {"question_max_tokens", c.limits.question_max},
              {"answer_max_tokens", c.limits.answer_max},
              {"corpus", c.corpus},
              {"corpus_format", to_string(c.corpus_format)},
              {"exclude_corpus", c.exclude_corpus},
              {"exclude_format", to_string(c.exclude_format)},
              {"checkpoint", c.checkpoint},
              {"out", c.out},
              {"output_format", to_string(c.output_format)},
              {"filter_strategy", to_string(c.filter_strategy)},
              {"pairs", c.pairs},
              {"predictions", c.predictions},
              {"gold", c.gold},
              {"gold_format", to_string(c.gold_format)},
              {"bucket_size", c.bucket_size},
              {"sweep_axis", c.sweep_axis},
              {"sweep_values", c.sweep_values},
              {"synthetic", c.synthetic},
              {"synthetic_format", to_string(c.synthetic_format)},
              {"supervised", c.supervised},
              {"supervised_format", to_string(c.supervised_format)},
              {"train_corpus", c.train_corpus},
              {"train_format", to_string(c.train_format)},
              {"vocab_size", c.vocab_size},
              {"dim", c.model.dim},
              {"heads", c.model.heads},
              {"encoder_layers", c.model.encoder_layers},
              {"decoder_layers", c.model.decoder_layers},
              {"ffn_dim", c.model.ffn_dim},
              {"max_context", c.model.max_context},
              {"max_target", c.model.max_target},
              {"init_seed", c.model.init_seed},
              {"epochs", c.train.epochs},
              {"learning_rate", c.train.learning_rate},
              {"batch_size", c.train.batch_size},
              {"optimizer", c.train.optimizer == Optimizer::adam ? "adam" : "sgd"}};
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path, const json& overrides) {
  json merged = json::object();
  if (path) {
    try {
      merged = json::parse(read_file(*path));
    } catch (const json::parse_error& e) {
      throw UsageError("config " + path->string() + ": " + e.what());
    }
    if (!merged.is_object()) throw UsageError("config " + path->string() + " must be a JSON object");
  }
  for (const auto& [k, v] : overrides.items()) merged[k] = v;
  return config_from_json(merged);
}

json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"name", s.name}, {"counts", s.counts}, {"wall_ms", s.wall_ms}});
  }
  auto files = [](const std::vector<FileDigest>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  return json{{"subcommand", subcommand}, {"version", version},   {"seed", seed},
              {"config", config},         {"stages", stages_json}, {"inputs", files(inputs)},
              {"outputs", files(outputs)}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string pairs_jsonl(const std::vector<GeneratedPair>& pairs, GenerationMode mode,
                        PoolingRule pooling) {
  std::string out;
  for (const auto& p : pairs) {
    json score = nullptr;
    try {
      const double s = lm_score(p, mode, pooling);
      if (std::isfinite(s)) score = s;
    } catch (const ScoringError&) {
    }
    json rec{{"passage_id", p.passage_id},
             {"sample_index", p.sample_index},
             {"question", p.question},
             {"answer", p.answer},
             {"answer_char_start", p.answer_char_start ? json(*p.answer_char_start) : json(nullptr)},
             {"contained", p.contained},
             {"answer_logprobs", logprobs_json(p.answer_token_logprobs)},
             {"question_logprobs", logprobs_json(p.question_token_logprobs)},
             {"mode", to_string(mode)},
             {"pooling", to_string(pooling)},
             {"lm_score", score}};
    out += dump(rec) + "\n";
  }
  return out;
}

std::vector<GeneratedPair> parse_pairs_jsonl(const std::string& text) {
  std::vector<GeneratedPair> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "pairs:" + std::to_string(lineno);
    try {
      const json r = json::parse(line);
      GeneratedPair p;
      p.passage_id = r.at("passage_id").get<std::string>();
      p.sample_index = r.at("sample_index").get<std::size_t>();
      p.question = r.at("question").get<std::string>();
      p.answer = r.at("answer").get<std::string>();
      if (r.contains("answer_char_start") && !r["answer_char_start"].is_null()) {
        p.answer_char_start = r["answer_char_start"].get<std::size_t>();
      }
      p.contained = r.value("contained", false);
      if (r.contains("answer_logprobs")) p.answer_token_logprobs = logprobs_from_json(r["answer_logprobs"], where);
      if (r.contains("question_logprobs")) p.question_token_logprobs = logprobs_from_json(r["question_logprobs"], where);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<GeneratedPair> read_pairs_jsonl(const std::filesystem::path& path) {
  return parse_pairs_jsonl(read_file(path));
}

GenerateResult generate_all(GenerationMode mode, const ConditionalLM& lm, const Vocabulary& vocab,
                            const std::vector<Passage>& passages, std::size_t n,
                            const DecodeConfig& cfg, std::uint64_t seed,
                            const GenerateOptions& options, std::size_t workers) {
  std::vector<GenerateResult> per(passages.size());
  std::vector<std::exception_ptr> errors(passages.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < passages.size(); i = next++) {
      try {
        per[i] = generate(mode, lm, vocab, passages[i], n, cfg, seed, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, passages.size()));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  GenerateResult merged;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    merged.stats += per[i].stats;
    for (auto& p : per[i].pairs) merged.pairs.push_back(std::move(p));
  }
  return merged;
}

PipelineRun run_pipeline(const PipelineConfig& cfg, const ConditionalLM& lm,
                         const Vocabulary& vocab, const Corpus& corpus) {
  PipelineRun run;
  std::unordered_set<std::string> exclude;
  if (!cfg.exclude_corpus.empty()) {
    exclude = exclusion_set(load_corpus(cfg.exclude_corpus, cfg.exclude_format));
  }
  auto sel = select_passages(corpus, cfg.passage_count, cfg.min_tokens, cfg.max_tokens, exclude, cfg.seed);
  run.passages = std::move(sel.passages);
  run.undersupplied = sel.undersupplied;

  GenerateOptions options;
  options.limits = cfg.limits;
  DecodeConfig decode = cfg.decode;
  decode.seed = cfg.seed;
  auto gen = generate_all(cfg.mode, lm, vocab, run.passages, cfg.n_samples, decode, cfg.seed,
                          options, cfg.workers);
  run.drops = gen.stats;
  run.candidates = std::move(gen.pairs);
  auto filtered = select_top_m(run.candidates, cfg.keep_m, cfg.pooling, cfg.mode);
  run.kept = std::move(filtered.kept);
  run.filter = std::move(filtered.report);
  return run;
}

std::vector<SweepRow> sweep_harness(SweepAxis axis, const std::vector<double>& values,
                                    const PipelineConfig& cfg, const ConditionalLM& lm,
                                    const Vocabulary& vocab, const Corpus& corpus) {
  if (values.empty()) throw UsageError("sweep_harness: no axis values");
  std::vector<SweepRow> rows;
  const LexicalOracle oracle;
  for (double value : values) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw UsageError("sweep value " + std::to_string(value) + " must be a positive integer");
    }
    PipelineConfig c = cfg;
    const auto n = static_cast<std::size_t>(value);
    if (axis == SweepAxis::keep_m) c.keep_m = n;
    else c.passage_count = n;
    try {
      const PipelineRun run = run_pipeline(c, lm, vocab, corpus);
      std::vector<std::string> predicted, generated;
      std::unordered_map<std::string, const Passage*> by_id;
      for (const auto& p : run.passages) by_id.emplace(p.id, &p);
      for (const auto& pair : run.kept) {
        predicted.push_back(oracle.answer(by_id.at(pair.passage_id)->text, pair.question));
        generated.push_back(pair.answer);
      }
      rows.push_back({value, run.kept.size(), evaluate_pairs(predicted, generated)});
    } catch (const std::exception& e) {
      throw Error("sweep value " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << (axis == SweepAxis::keep_m ? "keep_m" : "passage_count") << ",kept,exact_match,f1\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    out << static_cast<std::size_t>(r.value) << ',' << r.kept << ',' << r.result.em_percent() << ','
        << r.result.f1_percent() << '\n';
  }
  return out.str();
}

RunManifest cmd_train_lm(const PipelineConfig& cfg) {
  require(cfg.train_corpus, "train_corpus", "train-lm");
  RunManifest m = new_manifest("train-lm", cfg);
  const auto dir = out_dir(cfg);
  auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = stage("load", [&] { return load_corpus(cfg.train_corpus, cfg.train_format); });
  m.inputs.push_back(digest(cfg.train_corpus));
  if (corpus.examples().empty()) throw Error("stage 'load' failed: training corpus has no examples");
  m.stages.push_back({"load", {{"passages", double(corpus.passages().size())}, {"examples", double(corpus.examples().size())}}, ms_since(t0)});

  t0 = std::chrono::steady_clock::now();
  Vocabulary vocab = build_vocab(corpus, cfg.vocab_size);
  ToyEncDecLM lm(vocab, cfg.model);
  std::vector<SeqPair> data;
  std::size_t skipped = 0;
  std::unordered_map<std::string, TokenSequence> passage_ids;
  for (const auto& ex : corpus.examples()) {
    auto [it, inserted] = passage_ids.try_emplace(ex.passage_id);
    if (inserted) it->second = tokenize(corpus.at(ex.passage_id).text, vocab);
    const TokenSequence q = tokenize(ex.question, vocab);
    const TokenSequence a = tokenize(ex.answer_text, vocab);
    if (q.empty() || a.empty() || q.size() > cfg.limits.question_max || a.size() > cfg.limits.answer_max) {
      ++skipped;
      continue;
    }
    for (auto& [ctx, target] : training_pairs(cfg.mode, it->second, q, a, cfg.model.max_context)) {
      if (target.size() > cfg.model.max_target || ctx.size() > cfg.model.max_context) {
        ++skipped;
        continue;
      }
      data.push_back({std::move(ctx), std::move(target)});
    }
  }
  if (data.empty()) throw Error("stage 'prepare' failed: no trainable examples");
  m.stages.push_back({"prepare", {{"vocab_size", double(vocab.size())}, {"training_pairs", double(data.size())}, {"skipped", double(skipped)}}, ms_since(t0)});
  progress(cfg, "training on " + std::to_string(data.size()) + " pairs, vocab " + std::to_string(vocab.size()));

  t0 = std::chrono::steady_clock::now();
  const TrainResult tr = stage("train", [&] { return train_mle(lm, data, cfg.train); });
  std::ostringstream loss_csv;
  loss_csv << "epoch,mean_nll\n" << std::setprecision(10);
  for (std::size_t e = 0; e < tr.loss_trace.size(); ++e) loss_csv << e << ',' << tr.loss_trace[e] << '\n';
  std::map<std::string, double> counts{{"epochs", double(tr.loss_trace.size())}};
  if (!tr.loss_trace.empty()) counts["final_mean_nll"] = tr.loss_trace.back();
  m.stages.push_back({"train", counts, ms_since(t0)});
  if (!tr.loss_trace.empty()) progress(cfg, "final mean NLL " + std::to_string(tr.loss_trace.back()));

  const auto model_path = dir / "model.json";
  const auto loss_path = dir / "loss.csv";
  save_checkpoint(lm, model_path);
  write_file_atomic(loss_path, loss_csv.str());
  m.outputs = {digest(model_path), digest(loss_path)};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_generate(const PipelineConfig& cfg) {
  require(cfg.corpus, "corpus", "generate");
  require(cfg.checkpoint, "checkpoint", "generate");
  RunManifest m = new_manifest("generate", cfg);
  const auto dir = out_dir(cfg);

  auto t0 = std::chrono::steady_clock::now();
  const ToyEncDecLM lm = stage("load", [&] { return load_checkpoint(cfg.checkpoint); });
  const Corpus corpus = stage("load", [&] { return load_corpus(cfg.corpus, cfg.corpus_format); });
  m.inputs.push_back(digest(cfg.checkpoint));
  m.inputs.push_back(digest(cfg.corpus));
  if (!cfg.exclude_corpus.empty()) m.inputs.push_back(digest(cfg.exclude_corpus));
  m.stages.push_back({"load", {{"passages", double(corpus.passages().size())}}, ms_since(t0)});

  t0 = std::chrono::steady_clock::now();
  const PipelineRun run = stage("generate", [&] { return run_pipeline(cfg, lm, lm.vocab(), corpus); });
  const double gen_ms = ms_since(t0);
  m.stages.push_back({"select", {{"selected", double(run.passages.size())}, {"undersupplied", run.undersupplied ? 1.0 : 0.0}}, 0.0});
  m.stages.push_back({"generate",
                      {{"generated", double(run.drops.generated)},
                       {"dropped_uncontained", double(run.drops.dropped_uncontained)},
                       {"dropped_unparseable", double(run.drops.dropped_unparseable)},
                       {"deduplicated", double(run.drops.deduplicated)},
                       {"drop_rate", run.drops.drop_rate()},
                       {"candidates", double(run.candidates.size())}},
                      gen_ms});
  std::map<std::string, double> fcounts{{"input", double(run.filter.input_count)}, {"kept", double(run.filter.kept_count)}};
  for (const auto& [k, v] : run.filter.drops) fcounts["dropped_" + k] = double(v);
  m.stages.push_back({"filter", fcounts, 0.0});
  if (!run.filter.reconciles()) throw Error("stage 'filter' failed: report counts do not reconcile");
  if (run.drops.generated != run.drops.dropped_uncontained + run.drops.dropped_unparseable +
                                 run.drops.deduplicated + run.candidates.size()) {
    throw Error("stage 'generate' failed: drop counts do not reconcile");
  }
  progress(cfg, std::to_string(run.passages.size()) + " passages, " + std::to_string(run.drops.generated) +
                    " samples, drop rate " + std::to_string(run.drops.drop_rate()) + ", kept " +
                    std::to_string(run.kept.size()));

  const Corpus selected(run.passages, {}, CorpusFormat::synthetic);
  const auto synthetic_path =
      dir / (cfg.output_format == SyntheticFormat::squad ? "synthetic.json" : "synthetic.jsonl");
  const auto passages_path = dir / "passages.json";
  const auto candidates_path = dir / "candidates.jsonl";
  const auto pairs_path = dir / "pairs.jsonl";
  stage("write", [&] {
    write_synthetic(run.kept, selected, synthetic_path, cfg.output_format);
    write_corpus(selected, passages_path, SyntheticFormat::squad);
    write_file_atomic(candidates_path, pairs_jsonl(run.candidates, cfg.mode, cfg.pooling));
    write_file_atomic(pairs_path, pairs_jsonl(run.kept, cfg.mode, cfg.pooling));
    return 0;
  });
  m.outputs = {digest(synthetic_path), digest(passages_path), digest(candidates_path), digest(pairs_path)};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_filter(const PipelineConfig& cfg) {
  require(cfg.pairs, "pairs", "filter");
  RunManifest m = new_manifest("filter", cfg);
  const auto dir = out_dir(cfg);
  auto t0 = std::chrono::steady_clock::now();
  const auto pairs = stage("load", [&] { return read_pairs_jsonl(cfg.pairs); });
  m.inputs.push_back(digest(cfg.pairs));

  FilterResult result;
  switch (cfg.filter_strategy) {
    case FilterStrategy::lm:
      for (const auto& p : pairs) {
        try {
          (void)lm_score(p, cfg.mode, cfg.pooling);
        } catch (const ScoringError& e) {
          throw UsageError(std::string("filter: strategy=lm needs logprob arrays: ") + e.what());
        }
      }
      result = select_top_m(pairs, cfg.keep_m, cfg.pooling, cfg.mode);
      break;
    case FilterStrategy::roundtrip: {
      require(cfg.corpus, "corpus", "filter --strategy roundtrip");
      const Corpus passages = stage("load", [&] { return load_corpus(cfg.corpus, cfg.corpus_format); });
      m.inputs.push_back(digest(cfg.corpus));
      result = round_trip_filter(pairs, passages, LexicalOracle{});
      break;
    }
    case FilterStrategy::none:
      result = passthrough_filter(pairs);
      break;
  }
  if (!result.report.reconciles()) throw Error("stage 'filter' failed: report counts do not reconcile");
  std::map<std::string, double> counts{{"input", double(result.report.input_count)}, {"kept", double(result.report.kept_count)}};
  for (const auto& [k, v] : result.report.drops) counts["dropped_" + k] = double(v);
  m.stages.push_back({"filter", counts, ms_since(t0)});

  json report{{"stage", result.report.stage},
              {"input_count", result.report.input_count},
              {"kept_count", result.report.kept_count},
              {"drops", result.report.drops}};
  json groups = json::array();
  for (const auto& g : result.report.groups) groups.push_back({{"passage_id", g.passage_id}, {"input", g.input}, {"kept", g.kept}});
  report["groups"] = groups;
  const auto filtered_path = dir / "filtered.jsonl";
  const auto report_path = dir / "filter_report.json";
  write_file_atomic(filtered_path, pairs_jsonl(result.kept, cfg.mode, cfg.pooling));
  write_file_atomic(report_path, dump(report, 2) + "\n");
  m.outputs = {digest(filtered_path), digest(report_path)};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_evaluate(const PipelineConfig& cfg) {
  require(cfg.predictions, "predictions", "evaluate");
  require(cfg.gold, "gold", "evaluate");
  RunManifest m = new_manifest("evaluate", cfg);
  const auto dir = out_dir(cfg);
  auto t0 = std::chrono::steady_clock::now();
  const Corpus gold = stage("load", [&] { return load_corpus(cfg.gold, cfg.gold_format); });
  std::map<std::string, std::string> preds;
  stage("load", [&] {
    const json j = json::parse(read_file(cfg.predictions));
    if (!j.is_object()) throw FormatError("predictions must be a JSON object of qid -> answer");
    for (const auto& [k, v] : j.items()) preds[k] = v.get<std::string>();
    return 0;
  });
  m.inputs = {digest(cfg.gold), digest(cfg.predictions)};
  const EvalResult r = stage("evaluate", [&] { return corpus_eval(preds, gold); });
  m.stages.push_back({"evaluate", {{"count", double(r.count)}, {"exact_match", r.em_percent()}, {"f1", r.f1_percent()}}, ms_since(t0)});
  progress(cfg, "EM " + std::to_string(r.em_percent()) + " F1 " + std::to_string(r.f1_percent()));
  const auto eval_path = dir / "eval.json";
  write_file_atomic(eval_path, dump(json{{"exact_match", r.em_percent()}, {"f1", r.f1_percent()}, {"count", r.count}}, 2) + "\n");
  m.outputs = {digest(eval_path)};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_analyze(const PipelineConfig& cfg) {
  RunManifest m = new_manifest("analyze", cfg);
  const auto dir = out_dir(cfg);
  auto t0 = std::chrono::steady_clock::now();

  if (!cfg.sweep_axis.empty()) {
    require(cfg.checkpoint, "checkpoint", "analyze --sweep");
    require(cfg.corpus, "corpus", "analyze --sweep");
    const SweepAxis axis = sweep_axis_from_string(cfg.sweep_axis);
    const ToyEncDecLM lm = stage("load", [&] { return load_checkpoint(cfg.checkpoint); });
    const Corpus corpus = stage("load", [&] { return load_corpus(cfg.corpus, cfg.corpus_format); });
    m.inputs = {digest(cfg.checkpoint), digest(cfg.corpus)};
    const auto rows = sweep_harness(axis, cfg.sweep_values, cfg, lm, lm.vocab(), corpus);
    m.stages.push_back({"sweep", {{"rows", double(rows.size())}}, ms_since(t0)});
    const auto csv_path = dir / "sweep.csv";
    write_file_atomic(csv_path, sweep_csv(axis, rows));
    m.outputs = {digest(csv_path)};
    finish_manifest(m, cfg);
    return m;
  }

  require(cfg.pairs, "pairs", "analyze");
  const std::string raw = read_file(cfg.pairs);
  const auto pairs = parse_pairs_jsonl(raw);
  m.inputs.push_back(digest(cfg.pairs));

  // rc_f1 comes from the sidecar when every record carries it, otherwise
  // from the lexical oracle's answer against the generated answer.
  std::vector<std::optional<double>> provided;
  {
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      provided.push_back(r.contains("rc_f1") && r["rc_f1"].is_number() ? std::optional<double>(r["rc_f1"].get<double>()) : std::nullopt);
    }
  }
  const bool all_provided = !provided.empty() && std::all_of(provided.begin(), provided.end(), [](const auto& v) { return v.has_value(); });
  std::optional<Corpus> passages;
  if (!all_provided) {
    require(cfg.corpus, "corpus", "analyze (pairs without rc_f1)");
    passages = load_corpus(cfg.corpus, cfg.corpus_format);
    m.inputs.push_back(digest(cfg.corpus));
  }
  std::vector<ScoredItem> items;
  const LexicalOracle oracle;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ScoredItem it;
    it.lm_score = lm_score(pairs[i], cfg.mode, cfg.pooling);
    if (all_provided) {
      it.rc_f1 = *provided[i];
    } else {
      const std::string pred = oracle.answer(passages->at(pairs[i].passage_id).text, pairs[i].question);
      it.rc_f1 = f1_score(pred, pairs[i].answer);
    }
    items.push_back(it);
  }
  const auto rows = stage("analyze", [&] { return bucket_analysis(items, cfg.bucket_size); });
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size;
  if (total != items.size()) throw Error("stage 'analyze' failed: bucket sizes do not reconcile");
  m.stages.push_back({"analyze", {{"pairs", double(items.size())}, {"buckets", double(rows.size())}}, ms_since(t0)});
  const auto csv_path = dir / "buckets.csv";
  const auto report_path = dir / "analyze_report.json";
  write_file_atomic(csv_path, buckets_csv(rows));
  write_file_atomic(report_path,
                    dump(json{{"f1_source", all_provided ? "provided rc_f1 column" : "lexical oracle answer vs generated answer"},
                              {"score", "lm_score (" + to_string(cfg.pooling) + ", " + to_string(cfg.mode) + ")"},
                              {"bucket_size", cfg.bucket_size},
                              {"pairs", items.size()},
                              {"buckets", rows.size()}},
                         2) + "\n");
  m.outputs = {digest(csv_path), digest(report_path)};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_mix(const PipelineConfig& cfg) {
  require(cfg.synthetic, "synthetic", "mix");
  require(cfg.supervised, "supervised", "mix");
  RunManifest m = new_manifest("mix", cfg);
  const auto dir = out_dir(cfg);
  auto t0 = std::chrono::steady_clock::now();
  const Corpus syn = stage("load", [&] { return load_corpus(cfg.synthetic, cfg.synthetic_format); });
  const Corpus sup = stage("load", [&] { return load_corpus(cfg.supervised, cfg.supervised_format); });
  m.inputs = {digest(cfg.synthetic), digest(cfg.supervised)};
  const Corpus mixed = mix_datasets(syn, sup, cfg.seed);
  m.stages.push_back({"mix", {{"synthetic", double(syn.examples().size())}, {"supervised", double(sup.examples().size())}, {"mixed", double(mixed.examples().size())}}, ms_since(t0)});
  const auto path = dir / (cfg.output_format == SyntheticFormat::squad ? "mixed.json" : "mixed.jsonl");
  write_corpus(mixed, path, cfg.output_format);
  m.outputs = {digest(path)};
  finish_manifest(m, cfg);
  return m;
}

}  // namespace qagen

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qagen/corpus.hpp"
#include "qagen/decoding.hpp"
#include "qagen/eval.hpp"
#include "qagen/filtering.hpp"
#include "qagen/generation.hpp"
#include "qagen/toy_lm.hpp"

namespace qagen {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kConfigEnvVar = "QAGEN_CONFIG";

enum class FilterStrategy { lm, roundtrip, none };
std::string to_string(FilterStrategy s);
FilterStrategy filter_strategy_from_string(const std::string& s);

/// Flat run configuration. Defaults follow the generation protocol:
/// 100,000 passages of 100..550 tokens, 10 samples each, top 5 kept by
/// sum-pooled LM score, top-k 20 + nucleus 0.95 sampling.
struct PipelineConfig {
  GenerationMode mode = GenerationMode::QAGen2S;
  DecodeConfig decode;
  std::size_t n_samples = 10;
  std::size_t keep_m = 5;
  PoolingRule pooling = PoolingRule::sum;
  std::size_t passage_count = 100000;
  std::size_t min_tokens = 100;
  std::size_t max_tokens = 550;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  SegmentLimits limits;

  std::string corpus;
  CorpusFormat corpus_format = CorpusFormat::squad;
  std::string exclude_corpus;
  CorpusFormat exclude_format = CorpusFormat::squad;
  std::string checkpoint;
  std::string out = "out";
  SyntheticFormat output_format = SyntheticFormat::squad;

  FilterStrategy filter_strategy = FilterStrategy::lm;
  std::string pairs;

  std::string predictions;
  std::string gold;
  CorpusFormat gold_format = CorpusFormat::squad;

  std::size_t bucket_size = 200;
  std::string sweep_axis;
  std::vector<double> sweep_values;

  std::string synthetic;
  CorpusFormat synthetic_format = CorpusFormat::squad;
  std::string supervised;
  CorpusFormat supervised_format = CorpusFormat::squad;

  std::string train_corpus;
  CorpusFormat train_format = CorpusFormat::squad;
  std::size_t vocab_size = 2000;
  ToyLMConfig model;
  TrainConfig train;

  /// Stage progress lines go to standard error unless quiet. Not part of
  /// the serialized configuration.
  bool quiet = true;

  /// Non-fatal notes, e.g. keep_m > n_samples.
  std::vector<std::string> warnings() const;
};

/// Throws UsageError naming the first unknown key or mistyped value.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Reads a flat JSON object from `path` and applies `overrides` on top.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const nlohmann::json& overrides);

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct StageRecord {
  std::string name;
  std::map<std::string, double> counts;
  double wall_ms = 0.0;
};

struct RunManifest {
  std::string subcommand;
  std::string version = kVersion;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<StageRecord> stages;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;

  nlohmann::json to_json() const;
};

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Sidecar JSONL: one GeneratedPair per line with its LM score.
std::string pairs_jsonl(const std::vector<GeneratedPair>& pairs, GenerationMode mode,
                        PoolingRule pooling);
std::vector<GeneratedPair> parse_pairs_jsonl(const std::string& text);
std::vector<GeneratedPair> read_pairs_jsonl(const std::filesystem::path& path);

/// In-memory generate -> contain -> top-m pipeline over selected passages.
struct PipelineRun {
  std::vector<Passage> passages;
  bool undersupplied = false;
  std::vector<GeneratedPair> candidates;  // after containment/dedup
  std::vector<GeneratedPair> kept;        // after LM filtering
  DropStats drops;
  FilterReport filter;
};

/// Generation is passage-parallel over cfg.workers threads; the result does
/// not depend on the worker count.
PipelineRun run_pipeline(const PipelineConfig& cfg, const ConditionalLM& lm,
                         const Vocabulary& vocab, const Corpus& corpus);

/// Per-passage generation, parallel over `workers` threads.
GenerateResult generate_all(GenerationMode mode, const ConditionalLM& lm,
                            const Vocabulary& vocab, const std::vector<Passage>& passages,
                            std::size_t n, const DecodeConfig& cfg, std::uint64_t seed,
                            const GenerateOptions& options, std::size_t workers);

enum class SweepAxis { keep_m, passage_count };
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepRow {
  double value = 0.0;
  std::size_t kept = 0;
  EvalResult result;
};

/// Runs the pipeline once per value and scores the kept pairs with the
/// lexical oracle (oracle answer vs generated answer).
std::vector<SweepRow> sweep_harness(SweepAxis axis, const std::vector<double>& values,
                                    const PipelineConfig& cfg, const ConditionalLM& lm,
                                    const Vocabulary& vocab, const Corpus& corpus);
std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

// Subcommands. Each writes its artifacts and manifest.json under cfg.out.
RunManifest cmd_train_lm(const PipelineConfig& cfg);
RunManifest cmd_generate(const PipelineConfig& cfg);
RunManifest cmd_filter(const PipelineConfig& cfg);
RunManifest cmd_evaluate(const PipelineConfig& cfg);
RunManifest cmd_analyze(const PipelineConfig& cfg);
RunManifest cmd_mix(const PipelineConfig& cfg);

}  // namespace qagen

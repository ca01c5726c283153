// qagen: synthetic question-answer generation pipeline.
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qagen/error.hpp"
#include "qagen/pipeline.hpp"

namespace {

using nlohmann::json;

enum class Kind { text, count, u64, real, flag, reals };

struct Option {
  std::string key;
  Kind kind;
  std::string help;
};

struct Bound {
  Option opt;
  std::string value;
  std::vector<double> values;
  bool flag = false;
  CLI::Option* cli = nullptr;
};

const std::vector<Option> kShared = {
    {"seed", Kind::u64, "master RNG seed"},
    {"workers", Kind::count, "passage-parallel worker threads"},
    {"out", Kind::text, "output directory"},
};

const std::vector<Option> kDecode = {
    {"mode", Kind::text, "aqgen | qagen | qagen2s | qgen"},
    {"strategy", Kind::text, "greedy | beam | topk_nucleus"},
    {"k", Kind::count, "top-k cutoff"},
    {"p", Kind::real, "nucleus mass"},
    {"beam_width", Kind::count, "beam width"},
    {"nucleus_on_original", Kind::flag, "measure nucleus mass before top-k renormalization"},
    {"question_max_tokens", Kind::count, "question length limit"},
    {"answer_max_tokens", Kind::count, "answer length limit"},
};

const std::map<std::string, std::vector<Option>> kCommands = {
    {"train-lm",
     {{"train_corpus", Kind::text, "training corpus"},
      {"train_format", Kind::text, "squad | mrqa"},
      {"mode", Kind::text, "layout to train: aqgen | qagen | qagen2s | qgen"},
      {"vocab_size", Kind::count, "word vocabulary size"},
      {"dim", Kind::count, "model width"},
      {"heads", Kind::count, "attention heads"},
      {"encoder_layers", Kind::count, "encoder layers"},
      {"decoder_layers", Kind::count, "decoder layers"},
      {"ffn_dim", Kind::count, "feed-forward width"},
      {"max_context", Kind::count, "context length limit"},
      {"max_target", Kind::count, "target length limit"},
      {"init_seed", Kind::u64, "parameter init seed"},
      {"epochs", Kind::count, "training epochs"},
      {"learning_rate", Kind::real, "learning rate"},
      {"batch_size", Kind::count, "batch size"},
      {"optimizer", Kind::text, "adam | sgd"},
      {"question_max_tokens", Kind::count, "question length limit"},
      {"answer_max_tokens", Kind::count, "answer length limit"}}},
    {"generate",
     {{"corpus", Kind::text, "passage corpus"},
      {"corpus_format", Kind::text, "squad | mrqa"},
      {"exclude_corpus", Kind::text, "corpus whose passages are excluded"},
      {"exclude_format", Kind::text, "squad | mrqa"},
      {"checkpoint", Kind::text, "model checkpoint"},
      {"output_format", Kind::text, "squad | mrqa"},
      {"n_samples", Kind::count, "samples per passage"},
      {"keep_m", Kind::count, "pairs kept per passage"},
      {"pooling", Kind::text, "sum | avg"},
      {"passage_count", Kind::count, "passages to select"},
      {"min_tokens", Kind::count, "minimum passage length"},
      {"max_tokens", Kind::count, "maximum passage length"}}},
    {"filter",
     {{"pairs", Kind::text, "pairs sidecar (JSONL)"},
      {"filter_strategy", Kind::text, "lm | roundtrip | none"},
      {"mode", Kind::text, "generation mode of the pairs"},
      {"keep_m", Kind::count, "pairs kept per passage"},
      {"pooling", Kind::text, "sum | avg"},
      {"corpus", Kind::text, "passages for round-trip filtering"},
      {"corpus_format", Kind::text, "squad | mrqa"}}},
    {"evaluate",
     {{"predictions", Kind::text, "JSON object of qid -> answer"},
      {"gold", Kind::text, "gold corpus"},
      {"gold_format", Kind::text, "squad | mrqa"}}},
    {"analyze",
     {{"pairs", Kind::text, "pairs sidecar (JSONL)"},
      {"mode", Kind::text, "generation mode of the pairs"},
      {"pooling", Kind::text, "sum | avg"},
      {"bucket_size", Kind::count, "pairs per bucket"},
      {"corpus", Kind::text, "passage corpus"},
      {"corpus_format", Kind::text, "squad | mrqa"},
      {"checkpoint", Kind::text, "model checkpoint (sweeps)"},
      {"sweep_axis", Kind::text, "keep_m | passage_count"},
      {"sweep_values", Kind::reals, "axis values"},
      {"n_samples", Kind::count, "samples per passage (sweeps)"},
      {"keep_m", Kind::count, "pairs kept per passage (sweeps)"},
      {"passage_count", Kind::count, "passages to select (sweeps)"},
      {"min_tokens", Kind::count, "minimum passage length (sweeps)"},
      {"max_tokens", Kind::count, "maximum passage length (sweeps)"}}},
    {"mix",
     {{"synthetic", Kind::text, "synthetic corpus"},
      {"synthetic_format", Kind::text, "squad | mrqa"},
      {"supervised", Kind::text, "supervised corpus"},
      {"supervised_format", Kind::text, "squad | mrqa"},
      {"output_format", Kind::text, "squad | mrqa"}}},
};

const std::map<std::string, std::string> kAbout = {
    {"train-lm", "train the toy encoder-decoder on a labeled corpus"},
    {"generate", "sample, score and select synthetic pairs"},
    {"filter", "re-filter a pairs sidecar"},
    {"evaluate", "EM/F1 of predictions against a gold corpus"},
    {"analyze", "LM-score buckets or keep_m/passage_count sweeps"},
    {"mix", "shuffle synthetic and supervised examples together"},
};

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (auto& c : s) if (c == '_') c = '-';
  return s;
}

json to_json(const Bound& b) {
  switch (b.opt.kind) {
    case Kind::text:
      return b.value;
    case Kind::count:
    case Kind::u64:
      try {
        std::size_t used = 0;
        const auto v = std::stoull(b.value, &used);
        if (used != b.value.size() || b.value.front() == '-') throw std::invalid_argument(b.value);
        return v;
      } catch (const std::exception&) {
        throw qagen::UsageError(flag_name(b.opt.key) + ": expected a non-negative integer, got '" + b.value + "'");
      }
    case Kind::real:
      try {
        return std::stod(b.value);
      } catch (const std::exception&) {
        throw qagen::UsageError(flag_name(b.opt.key) + ": expected a number, got '" + b.value + "'");
      }
    case Kind::flag:
      return b.flag;
    case Kind::reals:
      return b.values;
  }
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic question-answer generation from passages"};
  app.set_version_flag("--version", qagen::kVersion);
  app.require_subcommand(1);
  std::string config_path;
  bool verbose = false;

  std::map<std::string, std::vector<Bound>> bound;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, options] : kCommands) {
    CLI::App* sub = app.add_subcommand(name, kAbout.at(name));
    subs[name] = sub;
    sub->add_option("--config", config_path, "flat JSON config (default: $" + std::string(qagen::kConfigEnvVar) + ")");
    sub->add_flag("-v,--verbose", verbose, "stage progress on stderr");
    auto& list = bound[name];
    std::vector<Option> all = kShared;
    all.insert(all.end(), options.begin(), options.end());
    if (name == "generate" || name == "analyze") {
      for (const auto& d : kDecode) {
        bool dup = false;
        for (const auto& o : all) dup = dup || o.key == d.key;
        if (!dup) all.push_back(d);
      }
    }
    list.reserve(all.size());
    for (const auto& o : all) {
      list.push_back(Bound{o});
      Bound& b = list.back();
      if (o.kind == Kind::flag) b.cli = sub->add_flag(flag_name(o.key), b.flag, o.help);
      else if (o.kind == Kind::reals) b.cli = sub->add_option(flag_name(o.key), b.values, o.help)->delimiter(',');
      else b.cli = sub->add_option(flag_name(o.key), b.value, o.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help and --version exit 0
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    json overrides = json::object();
    for (const auto& b : bound[name]) {
      if (b.cli->count() > 0) overrides[b.opt.key] = to_json(b);
    }
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    else if (const char* env = std::getenv(qagen::kConfigEnvVar); env && *env) path = env;
    qagen::PipelineConfig cfg = qagen::load_config(path, overrides);
    cfg.quiet = !verbose;
    for (const auto& w : cfg.warnings()) std::cerr << "qagen: warning: " << w << '\n';

    if (name == "train-lm") qagen::cmd_train_lm(cfg);
    else if (name == "generate") qagen::cmd_generate(cfg);
    else if (name == "filter") qagen::cmd_filter(cfg);
    else if (name == "evaluate") qagen::cmd_evaluate(cfg);
    else if (name == "analyze") qagen::cmd_analyze(cfg);
    else if (name == "mix") qagen::cmd_mix(cfg);
  } catch (const qagen::UsageError& e) {
    std::cerr << "qagen " << name << ": usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qagen " << name << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

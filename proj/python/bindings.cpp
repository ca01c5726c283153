#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "qagen/decoding.hpp"
#include "qagen/error.hpp"
#include "qagen/eval.hpp"
#include "qagen/filtering.hpp"
#include "qagen/generation.hpp"
#include "qagen/pipeline.hpp"
#include "qagen/vocab.hpp"

namespace py = pybind11;
using namespace qagen;

namespace {

RunManifest run_command(const std::string& name, const std::string& config_json) {
  const PipelineConfig cfg = config_from_json(nlohmann::json::parse(config_json));
  if (name == "train-lm") return cmd_train_lm(cfg);
  if (name == "generate") return cmd_generate(cfg);
  if (name == "filter") return cmd_filter(cfg);
  if (name == "evaluate") return cmd_evaluate(cfg);
  if (name == "analyze") return cmd_analyze(cfg);
  if (name == "mix") return cmd_mix(cfg);
  throw UsageError("unknown subcommand '" + name + "'");
}

std::vector<double> truncate_probs(std::vector<double> probs, std::size_t k, double p,
                                   bool nucleus_on_original) {
  DecodeConfig cfg;
  cfg.k = k;
  cfg.p = p;
  cfg.nucleus_on_original = nucleus_on_original;
  cfg.validate();
  Distribution d(std::move(probs));
  if (!d.valid()) throw ValidationError("probabilities must be non-negative and sum to one");
  return topk_nucleus(d, cfg).probs;
}

}  // namespace

PYBIND11_MODULE(_qagen, m) {
  m.doc() = "Synthetic question-answer generation core";
  m.attr("__version__") = kVersion;

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ScoringError>(m, "ScoringError", PyExc_ValueError);

  py::class_<GeneratedPair>(m, "GeneratedPair")
      .def(py::init<>())
      .def_readwrite("passage_id", &GeneratedPair::passage_id)
      .def_readwrite("question", &GeneratedPair::question)
      .def_readwrite("answer", &GeneratedPair::answer)
      .def_readwrite("answer_token_logprobs", &GeneratedPair::answer_token_logprobs)
      .def_readwrite("question_token_logprobs", &GeneratedPair::question_token_logprobs)
      .def_readwrite("contained", &GeneratedPair::contained)
      .def_readwrite("answer_char_start", &GeneratedPair::answer_char_start)
      .def_readwrite("sample_index", &GeneratedPair::sample_index)
      .def("__eq__", &GeneratedPair::operator==)
      .def("__repr__", [](const GeneratedPair& p) {
        return "<GeneratedPair " + p.passage_id + "#" + std::to_string(p.sample_index) + " q='" +
               p.question + "' a='" + p.answer + "'>";
      });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def(py::init<std::vector<std::string>>())
      .def("__len__", &Vocabulary::size)
      .def("token", &Vocabulary::token)
      .def("find", &Vocabulary::find)
      .def_property_readonly("tokens", &Vocabulary::tokens);

  m.def("build_vocab", [](const std::vector<std::string>& texts, std::size_t max_size) {
    return build_vocab(std::span<const std::string>(texts), max_size);
  }, py::arg("texts"), py::arg("max_size"));
  m.def("tokenize", &tokenize, py::arg("text"), py::arg("vocab"));
  m.def("detokenize", [](const TokenSequence& ids, const Vocabulary& v) { return detokenize(ids, v); },
        py::arg("ids"), py::arg("vocab"));

  m.def("build_target", [](const std::string& mode, const TokenSequence& q, const TokenSequence& a) {
    std::vector<std::pair<TokenSequence, TokenSequence>> out;
    for (auto& s : build_target(mode_from_string(mode), q, a)) out.emplace_back(s.context_suffix, s.target);
    return out;
  }, py::arg("mode"), py::arg("question"), py::arg("answer"));
  m.def("contains_answer", &contains_answer, py::arg("passage"), py::arg("answer"));

  m.def("truncate", &truncate_probs, py::arg("probs"), py::arg("k") = 20, py::arg("p") = 0.95,
        py::arg("nucleus_on_original") = false,
        "Top-k then nucleus truncation of a probability vector.");

  m.def("lm_score", [](const GeneratedPair& pair, const std::string& mode, const std::string& pooling) {
    return lm_score(pair, mode_from_string(mode), pooling_from_string(pooling));
  }, py::arg("pair"), py::arg("mode"), py::arg("pooling") = "sum");
  m.def("select_top_m", [](const std::vector<GeneratedPair>& pairs, std::size_t keep_m,
                           const std::string& pooling, const std::string& mode) {
    auto r = select_top_m(pairs, keep_m, pooling_from_string(pooling), mode_from_string(mode));
    return py::make_tuple(r.kept, r.report.drops);
  }, py::arg("pairs"), py::arg("keep_m") = 5, py::arg("pooling") = "sum", py::arg("mode") = "qagen2s");
  m.def("lexical_oracle", [](const std::string& passage, const std::string& question) {
    return lexical_oracle(passage, question);
  }, py::arg("passage"), py::arg("question"));

  m.def("normalize_answer", &normalize_answer);
  m.def("exact_match", &exact_match, py::arg("prediction"), py::arg("gold"));
  m.def("f1_score", &f1_score, py::arg("prediction"), py::arg("gold"));
  m.def("bleu", [](const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t max_order, bool smooth) {
    BleuOptions o;
    o.max_order = max_order;
    o.smooth = smooth;
    return bleu(c, r, o);
  }, py::arg("candidates"), py::arg("references"), py::arg("max_order") = 4, py::arg("smooth") = false);
  m.def("bucket_analysis", [](const std::vector<std::pair<double, double>>& score_f1, std::size_t bucket_size) {
    std::vector<ScoredItem> items;
    for (auto [s, f] : score_f1) items.push_back({s, f});
    std::vector<py::tuple> out;
    for (const auto& r : bucket_analysis(items, bucket_size)) out.push_back(py::make_tuple(r.mean_score, r.mean_f1, r.size));
    return out;
  }, py::arg("items"), py::arg("bucket_size") = 200, "Rows of (mean_score, mean_f1, size).");

  m.def("_run", [](const std::string& name, const std::string& config_json) {
    py::gil_scoped_release release;
    return run_command(name, config_json).to_json().dump();
  });
}

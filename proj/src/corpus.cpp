#include "qagen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qagen/error.hpp"
#include "qagen/generation.hpp"
#include "qagen/rng.hpp"
#include "qagen/text.hpp"

namespace qagen {

using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(where + "." + key + ": missing field");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw FormatError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

const json& array_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_array()) throw FormatError(where + "." + key + ": expected an array");
  return v;
}

std::size_t index_field(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw FormatError(where + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

// Accumulates passages, merging repeats of an id that carry identical text.
class PassageTable {
 public:
  void add(Passage p, const std::string& where) {
    const auto it = index_.find(p.id);
    if (it != index_.end()) {
      if (passages_[it->second].text != p.text) {
        throw ValidationError(where + ": passage id '" + p.id + "' reused with different text");
      }
      return;
    }
    index_.emplace(p.id, passages_.size());
    passages_.push_back(std::move(p));
  }
  std::vector<Passage> take() { return std::move(passages_); }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

Passage make_passage(std::string id, std::string text, std::string domain) {
  Passage p;
  p.id = std::move(id);
  p.text = std::move(text);
  p.domain = std::move(domain);
  p.token_count = text::count_pieces(p.text);
  return p;
}

Corpus::Corpus(std::vector<Passage> passages, std::vector<LabeledExample> examples,
               CorpusFormat origin)
    : passages_(std::move(passages)), examples_(std::move(examples)), origin_(origin) {
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    if (passages_[i].text.empty()) {
      throw ValidationError("passage '" + passages_[i].id + "' has empty text");
    }
    if (!index_.emplace(passages_[i].id, i).second) {
      throw ValidationError("duplicate passage id '" + passages_[i].id + "'");
    }
  }
  std::vector<std::string> bad;
  for (const auto& ex : examples_) {
    const auto it = index_.find(ex.passage_id);
    if (it == index_.end()) {
      throw ValidationError("example '" + ex.id + "' references unknown passage '" +
                            ex.passage_id + "'");
    }
    const auto span = text::utf8_substr(passages_[it->second].text, ex.answer_char_start,
                                        text::utf8_length(ex.answer_text));
    if (ex.question.empty() || !span || *span != ex.answer_text) bad.push_back(ex.id);
  }
  if (!bad.empty()) throw ValidationError("invalid examples: " + join(bad));
}

const Passage* Corpus::find(const std::string& passage_id) const {
  const auto it = index_.find(passage_id);
  return it == index_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(const std::string& passage_id) const {
  const Passage* p = find(passage_id);
  if (p == nullptr) throw ValidationError("unknown passage id '" + passage_id + "'");
  return *p;
}

Corpus parse_squad(const std::string& json_text, const std::string& source) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  const json& data = array_field(root, "data", "$");
  PassageTable passages;
  std::vector<LabeledExample> examples;
  std::vector<std::string> out_of_bounds;
  std::vector<std::string> mismatched;

  for (std::size_t di = 0; di < data.size(); ++di) {
    const std::string dpath = "$.data[" + std::to_string(di) + "]";
    const json& paragraphs = array_field(data[di], "paragraphs", dpath);
    for (std::size_t pi = 0; pi < paragraphs.size(); ++pi) {
      const std::string ppath = dpath + ".paragraphs[" + std::to_string(pi) + "]";
      const json& para = paragraphs[pi];
      std::string context = string_field(para, "context", ppath);
      std::string pid = para.contains("passage_id")
                            ? string_field(para, "passage_id", ppath)
                            : "d" + std::to_string(di) + "-p" + std::to_string(pi);
      std::string domain = para.contains("domain") ? string_field(para, "domain", ppath) : "squad";
      const std::size_t context_len = text::utf8_length(context);

      const json& qas = array_field(para, "qas", ppath);
      for (std::size_t qi = 0; qi < qas.size(); ++qi) {
        const std::string qpath = ppath + ".qas[" + std::to_string(qi) + "]";
        const json& qa = qas[qi];
        const std::string qid = string_field(qa, "id", qpath);
        const std::string question = string_field(qa, "question", qpath);
        const json& answers = array_field(qa, "answers", qpath);
        if (answers.empty()) continue;  // unanswerable: out of scope
        const std::string apath = qpath + ".answers[0]";
        const std::string answer = string_field(answers[0], "text", apath);
        const std::size_t start =
            index_field(field(answers[0], "answer_start", apath), apath + ".answer_start");
        const std::size_t len = text::utf8_length(answer);
        if (start + len > context_len) {
          out_of_bounds.push_back(qid);
          continue;
        }
        if (text::utf8_substr(context, start, len) != answer || question.empty()) {
          mismatched.push_back(qid);
          continue;
        }
        examples.push_back({qid, pid, question, answer, start});
      }
      passages.add(make_passage(std::move(pid), std::move(context), std::move(domain)), ppath);
    }
  }
  if (!out_of_bounds.empty()) {
    throw ValidationError(source + ": answer_start out of bounds for qa ids: " + join(out_of_bounds));
  }
  if (!mismatched.empty()) {
    throw ValidationError(source + ": answer text does not match context for qa ids: " +
                          join(mismatched));
  }
  return Corpus(passages.take(), std::move(examples), CorpusFormat::squad);
}

Corpus load_squad(const std::filesystem::path& path) {
  return parse_squad(slurp(path), path.string());
}

Corpus parse_mrqa(const std::string& jsonl_text, const std::string& source) {
  std::istringstream in(jsonl_text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::string dataset = "mrqa";
  PassageTable passages;
  std::vector<LabeledExample> examples;
  std::vector<std::string> bad_spans;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!have_header) {
      if (!rec.is_object() || !rec.contains("header")) {
        throw FormatError(where + ": missing MRQA header record");
      }
      const json& header = rec["header"];
      if (header.is_object() && header.contains("dataset") && header["dataset"].is_string()) {
        dataset = header["dataset"].get<std::string>();
      }
      have_header = true;
      continue;
    }
    std::string context = string_field(rec, "context", where);
    std::string pid = rec.contains("passage_id") ? string_field(rec, "passage_id", where)
                                                 : dataset + "-" + std::to_string(lineno - 1);
    const std::size_t context_len = text::utf8_length(context);
    const json& qas = array_field(rec, "qas", where);
    for (std::size_t qi = 0; qi < qas.size(); ++qi) {
      const std::string qpath = where + ".qas[" + std::to_string(qi) + "]";
      const json& qa = qas[qi];
      const std::string qid = string_field(qa, "qid", qpath);
      const std::string question = string_field(qa, "question", qpath);
      const json& detected = array_field(qa, "detected_answers", qpath);
      if (detected.empty()) continue;
      const std::string dpath = qpath + ".detected_answers[0]";
      const json& spans = array_field(detected[0], "char_spans", dpath);
      if (spans.empty() || !spans[0].is_array() || spans[0].size() != 2) {
        throw FormatError(dpath + ".char_spans: expected [[start, end], ...]");
      }
      const std::size_t s = index_field(spans[0][0], dpath + ".char_spans[0][0]");
      const std::size_t e = index_field(spans[0][1], dpath + ".char_spans[0][1]");
      if (s > e || e >= context_len || question.empty()) {
        bad_spans.push_back(qid);
        continue;
      }
      examples.push_back({qid, pid, question, *text::utf8_substr(context, s, e - s + 1), s});
    }
    passages.add(make_passage(std::move(pid), std::move(context), dataset), where);
  }
  if (!have_header) throw FormatError(source + ": missing MRQA header record");
  if (!bad_spans.empty()) {
    throw ValidationError(source + ": char span outside context for qids: " + join(bad_spans));
  }
  return Corpus(passages.take(), std::move(examples), CorpusFormat::mrqa);
}

Corpus load_mrqa(const std::filesystem::path& path) {
  return parse_mrqa(slurp(path), path.string());
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  switch (format) {
    case CorpusFormat::mrqa:
      return load_mrqa(path);
    case CorpusFormat::squad:
    case CorpusFormat::synthetic:
      return load_squad(path);
  }
  return load_squad(path);
}

std::unordered_set<std::string> exclusion_set(const Corpus& corpus) {
  std::unordered_set<std::string> out;
  for (const auto& p : corpus.passages()) out.insert(text::collapse_whitespace(p.text));
  return out;
}

SelectionResult select_passages(const Corpus& corpus, std::size_t count, std::size_t min_tokens,
                                std::size_t max_tokens,
                                const std::unordered_set<std::string>& exclude,
                                std::uint64_t seed) {
  if (min_tokens > max_tokens) {
    throw UsageError("select_passages: min_tokens exceeds max_tokens");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < corpus.passages().size(); ++i) {
    const Passage& p = corpus.passages()[i];
    if (p.token_count < min_tokens) continue;
    if (!exclude.empty() && exclude.contains(text::collapse_whitespace(p.text))) continue;
    eligible.push_back(i);
  }
  SelectionResult result;
  result.eligible = eligible.size();
  result.undersupplied = eligible.size() < count;
  const std::size_t take = std::min(count, eligible.size());

  Rng rng(splitmix64(seed));
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  result.passages.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const Passage& src = corpus.passages()[eligible[i]];
    result.passages.push_back(
        make_passage(src.id, text::truncate_pieces(src.text, max_tokens), src.domain));
  }
  return result;
}

Corpus synthetic_corpus(const std::vector<GeneratedPair>& pairs, const Corpus& passages) {
  std::vector<Passage> used;
  std::unordered_set<std::string> seen_passages;
  std::unordered_set<std::string> seen_ids;
  std::vector<LabeledExample> examples;
  for (const auto& pair : pairs) {
    const std::string pair_id = pair.passage_id + "-s" + std::to_string(pair.sample_index);
    const Passage* p = passages.find(pair.passage_id);
    if (p == nullptr) {
      throw ValidationError("pair " + pair_id + ": unknown passage '" + pair.passage_id + "'");
    }
    if (!pair.contained) throw ValidationError("pair " + pair_id + ": answer not contained");
    const auto start = text::find_first(p->text, pair.answer);
    if (!start) throw ValidationError("pair " + pair_id + ": answer not found in passage");
    if (pair.question.empty()) throw ValidationError("pair " + pair_id + ": empty question");
    if (seen_passages.insert(p->id).second) used.push_back(*p);
    std::string qid = pair_id;
    for (int k = 1; !seen_ids.insert(qid).second; ++k) qid = pair_id + "." + std::to_string(k);
    examples.push_back({qid, p->id, pair.question, pair.answer, *start});
  }
  return Corpus(std::move(used), std::move(examples), CorpusFormat::synthetic);
}

std::string squad_json(const Corpus& corpus) {
  json paragraphs = json::array();
  std::unordered_set<std::string> emitted;
  const auto& ex = corpus.examples();
  for (std::size_t i = 0; i < ex.size();) {
    const Passage& p = corpus.at(ex[i].passage_id);
    json qas = json::array();
    std::size_t j = i;
    for (; j < ex.size() && ex[j].passage_id == ex[i].passage_id; ++j) {
      const auto start = ex[j].answer_char_start;
      qas.push_back({{"id", ex[j].id},
                     {"question", ex[j].question},
                     {"answers", json::array({{{"text", ex[j].answer_text}, {"answer_start", start}}})}});
    }
    paragraphs.push_back({{"passage_id", p.id}, {"domain", p.domain}, {"context", p.text}, {"qas", qas}});
    emitted.insert(p.id);
    i = j;
  }
  for (const auto& p : corpus.passages()) {
    if (emitted.contains(p.id)) continue;
    paragraphs.push_back(
        {{"passage_id", p.id}, {"domain", p.domain}, {"context", p.text}, {"qas", json::array()}});
  }
  json data = json::array();
  if (!paragraphs.empty()) data.push_back({{"title", to_string(corpus.format_origin())}, {"paragraphs", paragraphs}});
  return dump(json{{"version", "1.1"}, {"data", data}}) + "\n";
}

std::string mrqa_jsonl(const Corpus& corpus) {
  std::string out = dump(json{{"header", {{"dataset", to_string(corpus.format_origin())}, {"split", "train"}}}}) + "\n";
  std::unordered_set<std::string> emitted;
  const auto& ex = corpus.examples();
  auto emit = [&](const Passage& p, std::size_t begin, std::size_t end) {
    json qas = json::array();
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t s = ex[k].answer_char_start;
      const std::size_t e = s + text::utf8_length(ex[k].answer_text) - 1;
      qas.push_back({{"qid", ex[k].id},
                     {"question", ex[k].question},
                     {"answers", json::array({ex[k].answer_text})},
                     {"detected_answers",
                      json::array({{{"text", ex[k].answer_text}, {"char_spans", json::array({json::array({s, e})})}}})}});
    }
    out += dump(json{{"passage_id", p.id}, {"context", p.text}, {"qas", qas}}) + "\n";
    emitted.insert(p.id);
  };
  for (std::size_t i = 0; i < ex.size();) {
    std::size_t j = i;
    while (j < ex.size() && ex[j].passage_id == ex[i].passage_id) ++j;
    emit(corpus.at(ex[i].passage_id), i, j);
    i = j;
  }
  for (const auto& p : corpus.passages()) {
    if (!emitted.contains(p.id)) emit(p, 0, 0);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path, SyntheticFormat format) {
  for (const auto& e : corpus.examples()) {
    if (e.answer_text.empty()) throw ValidationError("example " + e.id + ": empty answer");
  }
  const std::string body = format == SyntheticFormat::squad ? squad_json(corpus) : mrqa_jsonl(corpus);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_synthetic(const std::vector<GeneratedPair>& pairs, const Corpus& passages,
                     const std::filesystem::path& path, SyntheticFormat format) {
  write_corpus(synthetic_corpus(pairs, passages), path, format);
}

Corpus mix_datasets(const Corpus& synthetic, const Corpus& supervised, std::uint64_t seed) {
  std::unordered_set<std::string> taken_passages;
  std::unordered_set<std::string> taken_qids;
  for (const auto& p : supervised.passages()) taken_passages.insert(p.id);
  for (const auto& e : supervised.examples()) taken_qids.insert(e.id);

  auto fresh = [](std::string id, std::unordered_set<std::string>& taken) {
    while (taken.contains(id)) id = "syn:" + id;
    taken.insert(id);
    return id;
  };

  std::unordered_map<std::string, std::string> renamed;
  std::vector<Passage> passages = supervised.passages();
  for (Passage p : synthetic.passages()) {
    const std::string original = p.id;
    p.id = fresh(p.id, taken_passages);
    renamed.emplace(original, p.id);
    passages.push_back(std::move(p));
  }
  std::vector<LabeledExample> examples;
  examples.reserve(synthetic.examples().size() + supervised.examples().size());
  for (LabeledExample e : synthetic.examples()) {
    e.passage_id = renamed.at(e.passage_id);
    e.id = fresh(e.id, taken_qids);
    examples.push_back(std::move(e));
  }
  for (const auto& e : supervised.examples()) examples.push_back(e);

  Rng rng(splitmix64(seed));
  for (std::size_t i = examples.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(examples[i - 1], examples[j]);
  }
  return Corpus(std::move(passages), std::move(examples), CorpusFormat::synthetic);
}

std::string to_string(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::squad:
      return "squad";
    case CorpusFormat::mrqa:
      return "mrqa";
    case CorpusFormat::synthetic:
      return "synthetic";
  }
  return "squad";
}

CorpusFormat corpus_format_from_string(const std::string& s) {
  if (s == "squad") return CorpusFormat::squad;
  if (s == "mrqa") return CorpusFormat::mrqa;
  if (s == "synthetic") return CorpusFormat::synthetic;
  throw UsageError("unknown corpus format '" + s + "'");
}

}  // namespace qagen

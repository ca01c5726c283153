#include "qagen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qagen/error.hpp"
#include "qagen/text.hpp"

namespace qagen {

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i])) ++i;
    const std::size_t b = i;
    while (i < s.size() && !text::is_space(s[i])) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

std::string normalize_answer(std::string_view input) {
  std::string s = text::lower(input);
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return text::is_ascii_punct(c); }),
          s.end());
  std::string out;
  for (const auto& w : split_ws(s)) {
    if (is_article(w)) continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

int exact_match(std::string_view prediction, std::string_view gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

double f1_score(std::string_view prediction, std::string_view gold) {
  const auto pred = split_ws(normalize_answer(prediction));
  const auto ref = split_ws(normalize_answer(gold));
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;
  std::map<std::string, long> counts;
  for (const auto& w : ref) ++counts[w];
  long common = 0;
  for (const auto& w : pred) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

double EvalResult::em_percent() const { return round2(em * 100.0); }
double EvalResult::f1_percent() const { return round2(f1 * 100.0); }

EvalResult corpus_eval(const std::map<std::string, std::string>& predictions, const Corpus& gold) {
  std::vector<std::string> missing;
  std::vector<std::string> preds, golds;
  for (const auto& ex : gold.examples()) {
    const auto it = predictions.find(ex.id);
    if (it == predictions.end()) {
      missing.push_back(ex.id);
      continue;
    }
    preds.push_back(it->second);
    golds.push_back(ex.answer_text);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("predictions missing for qids: " + list);
  }
  if (golds.empty()) throw ValidationError("gold corpus has no examples");
  return evaluate_pairs(preds, golds);
}

EvalResult evaluate_pairs(std::span<const std::string> predictions,
                          std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("evaluate_pairs: length mismatch");
  }
  EvalResult r;
  r.count = golds.size();
  if (r.count == 0) return r;
  double em = 0.0, f1 = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    em += exact_match(predictions[i], golds[i]);
    f1 += f1_score(predictions[i], golds[i]);
  }
  r.em = em / static_cast<double>(r.count);
  r.f1 = f1 / static_cast<double>(r.count);
  return r;
}

double bleu(std::span<const std::string> candidates, std::span<const std::string> references,
            const BleuOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu: candidate and reference counts differ");
  }
  const std::size_t N = options.max_order;
  std::vector<double> matched(N, 0.0), total(N, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto c = split_ws(candidates[s]);
    const auto r = split_ws(references[s]);
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= N; ++n) {
      std::map<std::vector<std::string>, long> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) {
        ++ref_counts[std::vector<std::string>(r.begin() + static_cast<std::ptrdiff_t>(i),
                                              r.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
      std::map<std::vector<std::string>, long> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i) {
        ++cand_counts[std::vector<std::string>(c.begin() + static_cast<std::ptrdiff_t>(i),
                                               c.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
      for (const auto& [gram, count] : cand_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += static_cast<double>(std::min(count, it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    double m = matched[n], t = total[n];
    if (options.smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_precision += std::log(m / t);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_precision / static_cast<double>(N));
}

std::vector<BucketRow> bucket_analysis(std::span<const ScoredItem> items, std::size_t bucket_size) {
  if (bucket_size == 0) throw std::invalid_argument("bucket_analysis: bucket_size must be >= 1");
  if (items.empty()) throw std::invalid_argument("bucket_analysis: no items");
  std::vector<ScoredItem> sorted(items.begin(), items.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredItem& a, const ScoredItem& b) { return a.lm_score > b.lm_score; });
  std::vector<BucketRow> rows;
  for (std::size_t b = 0; b < sorted.size(); b += bucket_size) {
    const std::size_t e = std::min(sorted.size(), b + bucket_size);
    BucketRow row;
    row.bucket_index = rows.size();
    row.size = e - b;
    for (std::size_t i = b; i < e; ++i) {
      row.mean_score += sorted[i].lm_score;
      row.mean_f1 += sorted[i].rc_f1;
    }
    row.mean_score /= static_cast<double>(row.size);
    row.mean_f1 /= static_cast<double>(row.size);
    rows.push_back(row);
  }
  return rows;
}

std::string buckets_csv(std::span<const BucketRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "bucket_index,mean_score,mean_f1,size\n";
  for (const auto& r : rows) {
    out << r.bucket_index << ',' << r.mean_score << ',' << r.mean_f1 << ',' << r.size << '\n';
  }
  return out.str();
}

}  // namespace qagen

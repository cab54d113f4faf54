#include "ssnt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "ssnt/corpus.hpp"
#include "ssnt/error.hpp"

namespace ssnt {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::map<Tokens, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t k = 0; k + n <= tokens.size(); ++k) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(k),
                    tokens.begin() + static_cast<std::ptrdiff_t>(k + n))];
  }
  return counts;
}

PrecisionRecall from_counts(std::size_t overlap, std::size_t pred, std::size_t ref) {
  PrecisionRecall pr;
  pr.overlap = overlap;
  pr.prediction_count = pred;
  pr.reference_count = ref;
  pr.precision = pred == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(pred);
  pr.recall = ref == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(ref);
  pr.f1 = f1_score(pr.precision, pr.recall);
  return pr;
}

void check_counts(std::size_t predictions, std::size_t references) {
  if (predictions != references) {
    throw DataError("prediction count " + std::to_string(predictions) +
                    " differs from reference count " + std::to_string(references));
  }
}

std::string format_value(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, p);
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

}  // namespace

Tokens split_tokens(std::string_view line) {
  Tokens out;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && is_space(line[k])) ++k;
    const std::size_t start = k;
    while (k < line.size() && !is_space(line[k])) ++k;
    if (k > start) out.emplace_back(line.substr(start, k - start));
  }
  return out;
}

double f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

PrecisionRecall rouge_n(const Tokens& prediction, const Tokens& reference, std::size_t n) {
  if (n != 1 && n != 2) throw ConfigError("ROUGE-N supports n = 1 or 2");
  const auto pred = ngram_counts(prediction, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0, pred_total = 0, ref_total = 0;
  for (const auto& [gram, c] : pred) {
    pred_total += c;
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [gram, c] : ref) ref_total += c;
  return from_counts(overlap, pred_total, ref_total);
}

double rouge_n_f1(const Tokens& prediction, const Tokens& reference, std::size_t n) {
  return rouge_n(prediction, reference, n).f1;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PrecisionRecall rouge_l(const Tokens& prediction, const Tokens& reference) {
  return from_counts(lcs_length(prediction, reference), prediction.size(), reference.size());
}

double rouge_l_f1(const Tokens& prediction, const Tokens& reference) {
  return rouge_l(prediction, reference).f1;
}

Metric parse_metric(std::string_view name) {
  if (name == "exact") return Metric::kExact;
  if (name == "rouge1") return Metric::kRouge1;
  if (name == "rouge2") return Metric::kRouge2;
  if (name == "rougeL") return Metric::kRougeL;
  throw ConfigError("unknown metric '" + std::string(name) + "' (exact, rouge1, rouge2, rougeL)");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::kExact: return "exact";
    case Metric::kRouge1: return "rouge1";
    case Metric::kRouge2: return "rouge2";
    case Metric::kRougeL: return "rougeL";
  }
  return "unknown";
}

std::string ScoreReport::to_tsv() const {
  return "# aggregation: per-example mean\n" + metric + "\t" + format_value(value) + "\t" +
         std::to_string(matched) + "\t" + std::to_string(total) + "\n";
}

ScoreReport exact_match(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references) {
  check_counts(predictions.size(), references.size());
  ScoreReport r;
  r.metric = "exact";
  r.total = predictions.size();
  double sum = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const bool hit = predictions[k] == references[k];
    r.per_example.push_back(hit ? 1.0 : 0.0);
    r.matched += hit ? 1 : 0;
    sum += r.per_example.back();
  }
  r.value = predictions.empty() ? 0.0 : sum / static_cast<double>(predictions.size());
  return r;
}

ScoreReport score(Metric metric, const std::vector<Tokens>& predictions,
                  const std::vector<Tokens>& references) {
  if (metric == Metric::kExact) return exact_match(predictions, references);
  check_counts(predictions.size(), references.size());
  ScoreReport r;
  r.metric = metric_name(metric);
  double sum = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    PrecisionRecall pr = metric == Metric::kRougeL ? rouge_l(predictions[k], references[k])
                         : rouge_n(predictions[k], references[k], metric == Metric::kRouge1 ? 1 : 2);
    r.per_example.push_back(pr.f1);
    r.matched += pr.overlap;
    r.total += pr.reference_count;
    sum += pr.f1;
  }
  r.value = predictions.empty() ? 0.0 : sum / static_cast<double>(predictions.size());
  return r;
}

ScoreReport score_files(Metric metric, const std::string& prediction_path,
                        const std::string& reference_path) {
  std::vector<Tokens> pred, ref;
  for (const auto& line : read_lines(prediction_path)) pred.push_back(split_tokens(line));
  for (const auto& line : read_lines(reference_path)) ref.push_back(split_tokens(line));
  return score(metric, pred, ref);
}

}  // namespace ssnt

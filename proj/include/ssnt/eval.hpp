#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ssnt {

using Tokens = std::vector<std::string>;

// Splits on ASCII whitespace; runs of whitespace collapse.
Tokens split_tokens(std::string_view line);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t overlap = 0;
  std::size_t prediction_count = 0;
  std::size_t reference_count = 0;
};

// 2PR / (P + R), 0 when both are 0.
double f1_score(double precision, double recall);

// Clipped n-gram overlap.
PrecisionRecall rouge_n(const Tokens& prediction, const Tokens& reference, std::size_t n);
double rouge_n_f1(const Tokens& prediction, const Tokens& reference, std::size_t n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
PrecisionRecall rouge_l(const Tokens& prediction, const Tokens& reference);
double rouge_l_f1(const Tokens& prediction, const Tokens& reference);

enum class Metric { kExact, kRouge1, kRouge2, kRougeL };

Metric parse_metric(std::string_view name);  // exact | rouge1 | rouge2 | rougeL
std::string metric_name(Metric metric);

// Corpus value is the mean of the per-example values. For exact match,
// matched/total count identical examples; for ROUGE they count overlapping
// units against reference units summed over the corpus.
struct ScoreReport {
  std::string metric;
  double value = 0.0;
  std::vector<double> per_example;
  std::size_t matched = 0;
  std::size_t total = 0;

  // "# aggregation: per-example mean" header, then
  // "metric<TAB>value<TAB>matched<TAB>total".
  std::string to_tsv() const;
};

ScoreReport exact_match(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references);
ScoreReport score(Metric metric, const std::vector<Tokens>& predictions,
                  const std::vector<Tokens>& references);

// Reads two files line by line and scores them.
ScoreReport score_files(Metric metric, const std::string& prediction_path,
                        const std::string& reference_path);

}  // namespace ssnt

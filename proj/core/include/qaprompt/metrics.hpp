#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qap {

/// Lowercased word tokens. Never contains an empty token.
using TokenList = std::vector<std::string>;

enum class Method { kVanilla, kIcl, kQa };
enum class ParseStatus { kOk, kFallback, kFailed };

std::string_view to_string(Method method);
std::string_view to_string(ParseStatus status);
Method parse_method(std::string_view name);
ParseStatus parse_parse_status(std::string_view name);

/// Lowercases ASCII letters and splits on every maximal run of characters
/// that are not ASCII alphanumerics. Bytes >= 0x80 are kept as word
/// characters so UTF-8 words stay intact.
TokenList tokenize(std::string_view text);

enum class OverlapMode {
  kMultiset,  // per-word counts clipped to the reference's counts
  kSet,       // distinct words only
};

/// Fraction of the answer's words that also occur in the reference.
/// Throws EmptyAnswer when the answer has no words.
double overlap_precision(std::string_view answer, std::string_view reference,
                         OverlapMode mode = OverlapMode::kMultiset);
double overlap_precision(std::span<const std::string> answer,
                         std::span<const std::string> reference,
                         OverlapMode mode = OverlapMode::kMultiset);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const RougeScore&, const RougeScore&) = default;
};

/// Harmonic mean; 0 when precision + recall == 0.
double f1_score(double precision, double recall);

/// Builds a score from match counts. A zero denominator yields 0 for that component.
RougeScore score_from_counts(std::size_t matched, std::size_t candidate_total,
                             std::size_t reference_total);

struct NgramOverlap {
  std::size_t matched = 0;
  std::size_t candidate_total = 0;
  std::size_t reference_total = 0;
};

NgramOverlap ngram_overlap(std::span<const std::string> candidate,
                           std::span<const std::string> reference, std::size_t n);

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

RougeScore rouge_l(std::string_view candidate, std::string_view reference);
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

struct RougeTriple {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;

  friend bool operator==(const RougeTriple&, const RougeTriple&) = default;
};

/// ROUGE-1, ROUGE-2 and ROUGE-L of a candidate against a reference, tokenizing once.
RougeTriple score_summary(std::string_view candidate, std::string_view reference);

struct ScoreRow {
  std::string id;
  Method method = Method::kVanilla;
  std::string model;
  std::string domain;
  int k = 0;
  RougeTriple scores;
  ParseStatus parse_status = ParseStatus::kOk;

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

struct GroupBy {
  bool method = false;
  bool model = false;
  bool domain = false;
  bool k = false;
};

struct AggregateRow {
  std::optional<Method> method;
  std::optional<std::string> model;
  std::optional<std::string> domain;
  std::optional<int> k;
  std::size_t n = 0;
  RougeTriple mean;
};

/// Arithmetic mean of precision, recall and F1 per group. Groups come out
/// sorted by (method, model, domain, k) over the selected keys.
/// Throws EmptyInput on an empty row list.
std::vector<AggregateRow> aggregate(std::span<const ScoreRow> rows, GroupBy group_by);

/// Renders a fraction on the 0-100 scale with two decimals ("66.67").
std::string format_score(double fraction);

}  // namespace qap

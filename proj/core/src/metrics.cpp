#include "qaprompt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "qaprompt/error.hpp"

namespace qap {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kVanilla:
      return "vanilla";
    case Method::kIcl:
      return "icl";
    case Method::kQa:
      return "qa";
  }
  return "?";
}

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::kOk:
      return "ok";
    case ParseStatus::kFallback:
      return "fallback";
    case ParseStatus::kFailed:
      return "failed";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "vanilla") return Method::kVanilla;
  if (name == "icl") return Method::kIcl;
  if (name == "qa") return Method::kQa;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

ParseStatus parse_parse_status(std::string_view name) {
  if (name == "ok") return ParseStatus::kOk;
  if (name == "fallback") return ParseStatus::kFallback;
  if (name == "failed") return ParseStatus::kFailed;
  throw InvalidArgument("unknown parse status '" + std::string(name) + "'");
}

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

// n-grams are joined with a unit separator, which tokenize never emits.
std::unordered_map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens,
                                                          std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double overlap_precision(std::string_view answer, std::string_view reference, OverlapMode mode) {
  const auto a = tokenize(answer);
  const auto r = tokenize(reference);
  return overlap_precision(a, r, mode);
}

double overlap_precision(std::span<const std::string> answer,
                         std::span<const std::string> reference, OverlapMode mode) {
  if (answer.empty()) throw EmptyAnswer();
  if (mode == OverlapMode::kSet) {
    std::unordered_set<std::string_view> ref(reference.begin(), reference.end());
    std::unordered_set<std::string_view> ans(answer.begin(), answer.end());
    std::size_t shared = 0;
    for (auto w : ans) shared += ref.count(w);
    return static_cast<double>(shared) / static_cast<double>(ans.size());
  }
  const auto overlap = ngram_overlap(answer, reference, 1);
  return static_cast<double>(overlap.matched) / static_cast<double>(answer.size());
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

RougeScore score_from_counts(std::size_t matched, std::size_t candidate_total,
                             std::size_t reference_total) {
  RougeScore s;
  s.precision = candidate_total ? static_cast<double>(matched) / static_cast<double>(candidate_total)
                                : 0.0;
  s.recall = reference_total ? static_cast<double>(matched) / static_cast<double>(reference_total)
                             : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

NgramOverlap ngram_overlap(std::span<const std::string> candidate,
                           std::span<const std::string> reference, std::size_t n) {
  if (n == 0) throw InvalidArgument("n-gram order must be >= 1");
  NgramOverlap out;
  out.candidate_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  out.reference_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  if (out.candidate_total == 0 || out.reference_total == 0) return out;
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  for (const auto& [gram, count] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) out.matched += std::min(count, it->second);
  }
  return out;
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_n(c, r, n);
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n) {
  const auto o = ngram_overlap(candidate, reference, n);
  return score_from_counts(o.matched, o.candidate_total, o.reference_total);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_l(c, r);
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return score_from_counts(lcs_length(candidate, reference), candidate.size(), reference.size());
}

RougeTriple score_summary(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return {rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r)};
}

namespace {

struct GroupKeyTuple {
  int method = -1;
  std::string model;
  std::string domain;
  int k = -1;

  auto tie() const { return std::tie(method, model, domain, k); }
  bool operator<(const GroupKeyTuple& o) const { return tie() < o.tie(); }
};

struct Accumulator {
  std::size_t n = 0;
  double sums[9] = {};

  void add(const RougeTriple& t) {
    const RougeScore* parts[3] = {&t.rouge1, &t.rouge2, &t.rougeL};
    for (int i = 0; i < 3; ++i) {
      sums[i * 3 + 0] += parts[i]->precision;
      sums[i * 3 + 1] += parts[i]->recall;
      sums[i * 3 + 2] += parts[i]->f1;
    }
    ++n;
  }

  RougeTriple mean() const {
    RougeTriple t;
    RougeScore* parts[3] = {&t.rouge1, &t.rouge2, &t.rougeL};
    const auto d = static_cast<double>(n);
    for (int i = 0; i < 3; ++i) {
      parts[i]->precision = sums[i * 3 + 0] / d;
      parts[i]->recall = sums[i * 3 + 1] / d;
      parts[i]->f1 = sums[i * 3 + 2] / d;
    }
    return t;
  }
};

}  // namespace

std::vector<AggregateRow> aggregate(std::span<const ScoreRow> rows, GroupBy group_by) {
  if (rows.empty()) throw EmptyInput();
  std::map<GroupKeyTuple, Accumulator> groups;
  for (const auto& row : rows) {
    GroupKeyTuple key;
    if (group_by.method) key.method = static_cast<int>(row.method);
    if (group_by.model) key.model = row.model;
    if (group_by.domain) key.domain = row.domain;
    if (group_by.k) key.k = row.k;
    groups[key].add(row.scores);
  }
  std::vector<AggregateRow> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups) {
    AggregateRow row;
    if (group_by.method) row.method = static_cast<Method>(key.method);
    if (group_by.model) row.model = key.model;
    if (group_by.domain) row.domain = key.domain;
    if (group_by.k) row.k = key.k;
    row.n = acc.n;
    row.mean = acc.mean();
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_score(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

}  // namespace qap

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaprompt/metrics.hpp"

namespace qap {

class LmClient;
struct TaskInstance;
struct PromptTemplates;

struct QuestionSpec {
  std::string key;
  std::string text;

  friend bool operator==(const QuestionSpec&, const QuestionSpec&) = default;
};

/// The ten candidate questions, in canonical order.
const std::vector<QuestionSpec>& builtin_bank();

/// Position of `key` in `bank`; throws InvalidArgument when absent.
std::size_t bank_index(std::string_view key, std::span<const QuestionSpec> bank = builtin_bank());

struct RankEntry {
  std::string key;
  double mean_precision = 0.0;
  std::size_t n = 0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

/// Per-domain question orderings for one model, best first.
struct RankingTable {
  std::string model;
  std::string created_at;
  std::uint64_t seed = 0;
  std::optional<std::size_t> subsample_per_domain;
  std::map<std::string, std::vector<RankEntry>> domains;

  friend bool operator==(const RankingTable&, const RankingTable&) = default;
};

enum class GlobalMode {
  kPrecisionMean,  // unweighted mean of per-domain mean precisions, descending
  kRankMean,       // mean 1-based rank across domains, ascending
};

struct GlobalEntry {
  std::string key;
  double score = 0.0;
};

struct GlobalRanking {
  std::string model;
  GlobalMode mode = GlobalMode::kPrecisionMean;
  std::vector<GlobalEntry> entries;  // best first
};

struct RankOptions {
  OverlapMode overlap = OverlapMode::kMultiset;
  int answer_max_tokens = 512;
  std::uint64_t seed = 0;                             // recorded in the table
  std::optional<std::size_t> subsample_per_domain;    // recorded in the table
  std::string created_at;
};

/// Asks every question about every instance, scores each answer by overlap
/// precision against the instance's reference (no words -> 0) and sorts
/// questions per domain by mean precision, ties in bank order.
///
/// A failed LM call removes that sample from its cell's mean. A cell left
/// with no samples rethrows the last failure. ReplayMiss always propagates.
RankingTable rank_questions(const LmClient& client, std::span<const TaskInstance> instances,
                            std::span<const QuestionSpec> bank, const RankOptions& options,
                            const PromptTemplates& templates);
RankingTable rank_questions(const LmClient& client, std::span<const TaskInstance> instances,
                            std::span<const QuestionSpec> bank = builtin_bank(),
                            const RankOptions& options = {});

/// Sorts each domain's entries by mean precision, descending, ties in bank order.
void sort_rankings(RankingTable& table, std::span<const QuestionSpec> bank = builtin_bank());

GlobalRanking global_ranking(const RankingTable& table, GlobalMode mode = GlobalMode::kPrecisionMean,
                             std::span<const QuestionSpec> bank = builtin_bank());

/// First k questions of the domain's ordering. Throws UnknownDomain or KOutOfRange.
std::vector<QuestionSpec> top_k(const RankingTable& table, std::string_view domain, std::size_t k,
                                std::span<const QuestionSpec> bank = builtin_bank());
std::vector<QuestionSpec> top_k(const GlobalRanking& ranking, std::size_t k,
                                std::span<const QuestionSpec> bank = builtin_bank());

/// Throws ModelMismatch unless the models agree or `allow_mismatch` is set.
void check_model(const RankingTable& table, std::string_view model, bool allow_mismatch = false);

std::string serialize_ranking(const RankingTable& table);
/// Validates that each domain lists every key once with precision in [0, 1].
RankingTable parse_ranking(std::string_view text, std::span<const QuestionSpec> bank = builtin_bank());
void save_ranking(const RankingTable& table, const std::filesystem::path& path);
RankingTable load_ranking(const std::filesystem::path& path,
                          std::span<const QuestionSpec> bank = builtin_bank());

/// Markdown matrix: one row per domain, one column per question, cells are 1-based ranks.
std::string render_rank_matrix(const RankingTable& table,
                               std::span<const QuestionSpec> bank = builtin_bank());

}  // namespace qap

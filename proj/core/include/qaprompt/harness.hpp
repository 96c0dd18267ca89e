#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qaprompt/corpus.hpp"
#include "qaprompt/lm.hpp"
#include "qaprompt/metrics.hpp"
#include "qaprompt/prompting.hpp"
#include "qaprompt/questions.hpp"

namespace qap {

enum class RankingScope { kDomainSpecific, kGlobal };
enum class QuestionOrder { kBestFirst, kWorstFirst };

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  LmConfig lm;
  Method method = Method::kQa;
  std::vector<int> k_values{0, 1, 2, 3, 4, 5};
  std::filesystem::path ranking_path;
  RankingScope scope = RankingScope::kDomainSpecific;
  GlobalMode global_mode = GlobalMode::kPrecisionMean;
  QuestionOrder question_order = QuestionOrder::kBestFirst;
  std::size_t icl_examples = 1;
  std::uint64_t seed = 0;
  double pool_fraction = 0.2;
  std::optional<std::size_t> eval_subsample_per_domain;
  std::optional<std::size_t> rank_subsample_per_domain;
  int rank_answer_max_tokens = 512;
  OverlapMode overlap = OverlapMode::kMultiset;
  bool allow_model_mismatch = false;
  std::filesystem::path output_dir;
  std::vector<std::string> extra_domains;
  PromptTemplates templates;
  std::string created_at;  // fixed ranking timestamp; empty: SOURCE_DATE_EPOCH or now
  std::string label;       // run name in comparisons; empty: derived from method and scope
};

void to_json(nlohmann::json& j, const ExperimentConfig& config);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ExperimentConfig& config);

/// Reads a JSON config. Relative paths inside it resolve against the file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Throws InvalidArgument on inconsistent settings.
void validate(const ExperimentConfig& config);

/// k values actually run: {0} for vanilla and icl, the configured list for qa.
std::vector<int> effective_k_values(const ExperimentConfig& config);

std::string run_label(const ExperimentConfig& config);

struct RunManifest {
  std::string label;
  nlohmann::json config;
  std::vector<ScoreRow> rows;  // sorted by (id, k)
  CacheStats cache;
  double wall_clock_s = 0.0;
  std::map<std::string, std::size_t> parse_status_counts;

  std::vector<std::string> eval_ids() const;
};

void to_json(nlohmann::json& j, const RunManifest& manifest);
void from_json(const nlohmann::json& j, RunManifest& manifest);
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest_file(const std::filesystem::path& path);

// ---- commands ---------------------------------------------------------------

struct RankResult {
  RankingTable table;
  std::string rank_matrix;  // markdown
  CacheStats cache;
};

/// Ranks questions on the ICL pool of the configured split and writes the
/// ranking file to `out`.
RankResult cmd_rank(const ExperimentConfig& config, const LmClient& client,
                    const std::filesystem::path& out);
RankResult cmd_rank(const ExperimentConfig& config, const std::filesystem::path& out);

/// Scores every eval instance for every k. Writes manifest.json,
/// per_instance.csv, aggregate_method_k.csv and aggregate_domain_k.csv into
/// config.output_dir. LM failures on single instances become failed rows.
RunManifest cmd_eval(const ExperimentConfig& config, const LmClient& client);
RunManifest cmd_eval(const ExperimentConfig& config);

struct ComparisonRow {
  std::string label;
  Method method = Method::kQa;
  std::string model;
  int best_k = 0;
  std::size_t n = 0;
  RougeTriple mean;
  std::map<std::string, double> domain_rouge_l;  // mean ROUGE-L F1 per domain at best_k
  std::optional<double> delta_percent;           // ROUGE-L F1 vs the baseline
};

struct Comparison {
  std::string baseline_label;
  std::vector<ComparisonRow> rows;  // ROUGE-L F1 descending
  std::string markdown;
  std::string csv;
};

/// The first manifest is the baseline. Throws MismatchedEvalSets when the
/// manifests were not scored on the same instance ids.
Comparison compare_manifests(std::span<const RunManifest> manifests);
/// Writes the markdown table to `out` and the CSV next to it.
Comparison cmd_compare(std::span<const std::filesystem::path> manifests,
                       const std::filesystem::path& out);

struct Report {
  std::string overall_markdown;
  std::string overall_csv;
  std::string domain_k_csv;
  std::string parse_status_csv;
  std::string parse_status_markdown;
};

Report build_report(const RunManifest& manifest);
/// Writes overall.md, overall.csv, domain_k.csv, parse_status.csv and parse_status.md.
Report cmd_report(const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

// ---- CSV rendering ------------------------------------------------------------

std::string per_instance_csv(std::span<const ScoreRow> rows);
/// Header is the selected group keys followed by n and the nine mean columns.
std::string aggregate_csv(std::span<const AggregateRow> rows, GroupBy group_by);

/// Relative change in percent with one decimal and a sign ("+17.1%"); "n/a" for a zero base.
std::string format_delta_percent(double base, double value);

}  // namespace qap

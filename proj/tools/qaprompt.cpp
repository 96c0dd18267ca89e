// qaprompt: question ranking, QA-prompted summarization runs and ROUGE reports.
//
//   qaprompt rank    --corpus PATH --config PATH --out PATH [--subsample N] [--seed S]
//   qaprompt eval    --corpus PATH --config PATH --method {vanilla|icl|qa}
//                    [--ranking PATH] [--scope {ds|global}] [--k LIST] [--icl-n N] [--seed S] --out DIR
//   qaprompt compare MANIFEST... --out PATH
//   qaprompt report  MANIFEST --out DIR

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qaprompt/error.hpp"
#include "qaprompt/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string corpus;
  std::string config;
  std::optional<std::uint64_t> seed;
};

qap::ExperimentConfig load_config(const CommonArgs& args) {
  auto config = args.config.empty() ? qap::ExperimentConfig{} : qap::load_experiment_config(args.config);
  if (!args.corpus.empty()) config.corpus_path = args.corpus;
  if (args.seed) config.seed = *args.seed;
  return config;
}

void print_cache(const qap::CacheStats& stats) {
  const auto total = stats.hits + stats.misses;
  std::cerr << "cache: " << stats.hits << " hits, " << stats.misses << " misses, " << stats.entries
            << " entries";
  if (total > 0) std::cerr << " (" << (100 * stats.hits / total) << "% hits)";
  std::cerr << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QA-prompting summarization harness"};
  app.require_subcommand(1);

  CommonArgs rank_args;
  std::string rank_out;
  std::optional<std::size_t> rank_subsample;
  std::string created_at;
  auto* rank = app.add_subcommand("rank", "Rank candidate questions per domain and write a ranking file");
  rank->add_option("--corpus", rank_args.corpus, "Corpus file (JSON lines)")->required();
  rank->add_option("--config", rank_args.config, "Experiment config (JSON)")->required();
  rank->add_option("--out", rank_out, "Ranking file to write")->required();
  rank->add_option("--subsample", rank_subsample, "Instances per domain used for ranking");
  rank->add_option("--seed", rank_args.seed, "Split and subsample seed");
  rank->add_option("--created-at", created_at, "Timestamp recorded in the ranking file");

  CommonArgs eval_args;
  std::string method, ranking, scope, eval_out;
  std::vector<int> ks;
  std::optional<std::size_t> icl_n;
  auto* eval = app.add_subcommand("eval", "Generate and score summaries for the eval set");
  eval->add_option("--corpus", eval_args.corpus, "Corpus file (JSON lines)")->required();
  eval->add_option("--config", eval_args.config, "Experiment config (JSON)")->required();
  eval->add_option("--method", method, "vanilla, icl or qa")
      ->required()
      ->check(CLI::IsMember({"vanilla", "icl", "qa"}));
  eval->add_option("--ranking", ranking, "Ranking file (qa only)");
  eval->add_option("--scope", scope, "Question set: ds (per domain) or global")
      ->check(CLI::IsMember({"ds", "global", "domain_specific", "g"}));
  eval->add_option("--k", ks, "Comma-separated k values")->delimiter(',');
  eval->add_option("--icl-n", icl_n, "In-context examples per prompt");
  eval->add_option("--seed", eval_args.seed, "Split, subsample and example seed");
  eval->add_option("--out", eval_out, "Output directory")->required();

  std::vector<std::string> compare_inputs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Side-by-side comparison of run manifests");
  compare->add_option("manifests", compare_inputs, "Run manifests; the first is the baseline")
      ->required()
      ->expected(2, -1);
  compare->add_option("--out", compare_out, "Markdown output (a .csv is written alongside)")->required();

  std::string report_input, report_out;
  auto* report = app.add_subcommand("report", "Render tables from a run manifest");
  report->add_option("manifest", report_input, "Run manifest")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(qap::ErrorCode::kUsage);
  }

  try {
    if (*rank) {
      auto config = load_config(rank_args);
      if (rank_subsample) config.rank_subsample_per_domain = rank_subsample;
      if (!created_at.empty()) config.created_at = created_at;
      const auto result = qap::cmd_rank(config, rank_out);
      std::cout << result.rank_matrix;
      print_cache(result.cache);
    } else if (*eval) {
      auto config = load_config(eval_args);
      config.method = qap::parse_method(method);
      if (!ranking.empty()) config.ranking_path = ranking;
      if (!scope.empty())
        config.scope = (scope == "global" || scope == "g") ? qap::RankingScope::kGlobal
                                                           : qap::RankingScope::kDomainSpecific;
      if (!ks.empty()) config.k_values = ks;
      if (icl_n) config.icl_examples = *icl_n;
      config.output_dir = eval_out;
      const auto manifest = qap::cmd_eval(config);
      std::cerr << "scored " << manifest.rows.size() << " rows (ok " << manifest.parse_status_counts.at("ok")
                << ", fallback " << manifest.parse_status_counts.at("fallback") << ", failed "
                << manifest.parse_status_counts.at("failed") << ") in " << manifest.wall_clock_s << " s\n";
      print_cache(manifest.cache);
    } else if (*compare) {
      std::vector<fs::path> paths(compare_inputs.begin(), compare_inputs.end());
      std::cout << qap::cmd_compare(paths, compare_out).markdown;
    } else if (*report) {
      std::cout << qap::cmd_report(report_input, report_out).overall_markdown;
    }
  } catch (const qap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

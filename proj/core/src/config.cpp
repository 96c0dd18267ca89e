#include <algorithm>
#include <fstream>
#include <set>

#include "qaprompt/error.hpp"
#include "qaprompt/harness.hpp"

namespace qap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RankingScope parse_scope(const std::string& s) {
  if (s == "domain_specific" || s == "ds") return RankingScope::kDomainSpecific;
  if (s == "global" || s == "g") return RankingScope::kGlobal;
  throw InvalidArgument("scope must be 'domain_specific' or 'global', got '" + s + "'");
}

GlobalMode parse_global_mode(const std::string& s) {
  if (s == "precision_mean") return GlobalMode::kPrecisionMean;
  if (s == "rank_mean") return GlobalMode::kRankMean;
  throw InvalidArgument("global_mode must be 'precision_mean' or 'rank_mean', got '" + s + "'");
}

QuestionOrder parse_order(const std::string& s) {
  if (s == "best_first") return QuestionOrder::kBestFirst;
  if (s == "worst_first") return QuestionOrder::kWorstFirst;
  throw InvalidArgument("question_order must be 'best_first' or 'worst_first', got '" + s + "'");
}

OverlapMode parse_overlap(const std::string& s) {
  if (s == "multiset") return OverlapMode::kMultiset;
  if (s == "set") return OverlapMode::kSet;
  throw InvalidArgument("overlap must be 'multiset' or 'set', got '" + s + "'");
}

json optional_size(const std::optional<std::size_t>& v) { return v ? json(*v) : json(); }

std::optional<std::size_t> read_optional_size(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::size_t>();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  j = json{
      {"corpus", c.corpus_path.string()},
      {"lm", c.lm},
      {"method", std::string(to_string(c.method))},
      {"k_values", c.k_values},
      {"ranking", c.ranking_path.string()},
      {"scope", c.scope == RankingScope::kDomainSpecific ? "domain_specific" : "global"},
      {"global_mode", c.global_mode == GlobalMode::kPrecisionMean ? "precision_mean" : "rank_mean"},
      {"question_order", c.question_order == QuestionOrder::kBestFirst ? "best_first" : "worst_first"},
      {"icl_examples", c.icl_examples},
      {"seed", c.seed},
      {"pool_fraction", c.pool_fraction},
      {"eval_subsample_per_domain", optional_size(c.eval_subsample_per_domain)},
      {"rank_subsample_per_domain", optional_size(c.rank_subsample_per_domain)},
      {"rank_answer_max_tokens", c.rank_answer_max_tokens},
      {"overlap", c.overlap == OverlapMode::kMultiset ? "multiset" : "set"},
      {"allow_model_mismatch", c.allow_model_mismatch},
      {"output_dir", c.output_dir.string()},
      {"domains", c.extra_domains},
      {"templates",
       {{"qa_instruction", c.templates.qa_instruction},
        {"single_qa_instruction", c.templates.single_qa_instruction},
        {"summarize_instruction", c.templates.summarize_instruction}}},
      {"created_at", c.created_at},
      {"label", c.label},
  };
}

void from_json(const json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{
      "corpus", "lm", "method", "k_values", "ranking", "scope", "global_mode", "question_order",
      "icl_examples", "seed", "pool_fraction", "eval_subsample_per_domain", "rank_subsample_per_domain",
      "rank_answer_max_tokens", "overlap", "allow_model_mismatch", "output_dir", "domains", "templates",
      "created_at", "label"};
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw InvalidArgument("unknown config key '" + key + "'");
  }
  try {
    ExperimentConfig d;
    c.corpus_path = j.value("corpus", std::string());
    if (j.contains("lm")) c.lm = j.at("lm").get<LmConfig>();
    c.method = parse_method(j.value("method", std::string(to_string(d.method))));
    c.k_values = j.value("k_values", d.k_values);
    c.ranking_path = j.value("ranking", std::string());
    c.scope = parse_scope(j.value("scope", std::string("domain_specific")));
    c.global_mode = parse_global_mode(j.value("global_mode", std::string("precision_mean")));
    c.question_order = parse_order(j.value("question_order", std::string("best_first")));
    c.icl_examples = j.value("icl_examples", d.icl_examples);
    c.seed = j.value("seed", d.seed);
    c.pool_fraction = j.value("pool_fraction", d.pool_fraction);
    c.eval_subsample_per_domain = read_optional_size(j, "eval_subsample_per_domain");
    c.rank_subsample_per_domain = read_optional_size(j, "rank_subsample_per_domain");
    c.rank_answer_max_tokens = j.value("rank_answer_max_tokens", d.rank_answer_max_tokens);
    c.overlap = parse_overlap(j.value("overlap", std::string("multiset")));
    c.allow_model_mismatch = j.value("allow_model_mismatch", d.allow_model_mismatch);
    c.output_dir = j.value("output_dir", std::string());
    c.extra_domains = j.value("domains", d.extra_domains);
    if (auto t = j.find("templates"); t != j.end()) {
      c.templates.qa_instruction = t->value("qa_instruction", d.templates.qa_instruction);
      c.templates.single_qa_instruction = t->value("single_qa_instruction", d.templates.single_qa_instruction);
      c.templates.summarize_instruction = t->value("summarize_instruction", d.templates.summarize_instruction);
    }
    c.created_at = j.value("created_at", std::string());
    c.label = j.value("label", std::string());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto config = doc.get<ExperimentConfig>();
  const auto base = path.parent_path();
  config.corpus_path = resolve(base, config.corpus_path);
  config.ranking_path = resolve(base, config.ranking_path);
  config.output_dir = resolve(base, config.output_dir);
  config.lm.cache_dir = resolve(base, config.lm.cache_dir);
  config.lm.replay_dir = resolve(base, config.lm.replay_dir);
  return config;
}

void validate(const ExperimentConfig& c) {
  validate(c.lm);
  if (!(c.pool_fraction > 0.0 && c.pool_fraction < 1.0))
    throw InvalidArgument("pool_fraction must lie in (0, 1)");
  if (c.method == Method::kQa) {
    if (c.k_values.empty()) throw InvalidArgument("k_values must not be empty");
    for (int k : c.k_values) {
      if (k < 0) throw InvalidArgument("k values must be >= 0");
      if (k > 10) throw KOutOfRange(static_cast<std::size_t>(k), 10);
    }
  }
  if (c.rank_answer_max_tokens <= 0) throw InvalidArgument("rank_answer_max_tokens must be positive");
}

std::vector<int> effective_k_values(const ExperimentConfig& config) {
  if (config.method != Method::kQa) return {0};
  auto ks = config.k_values;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::string run_label(const ExperimentConfig& config) {
  if (!config.label.empty()) return config.label;
  if (config.method != Method::kQa) return std::string(to_string(config.method));
  return config.scope == RankingScope::kDomainSpecific ? "qa-ds" : "qa-g";
}

}  // namespace qap

#include "qaprompt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <tuple>

#include "qaprompt/detail/parallel.hpp"
#include "qaprompt/detail/rng.hpp"
#include "qaprompt/detail/time.hpp"
#include "qaprompt/error.hpp"

namespace qap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

json score_json(const RougeScore& s) { return {{"p", s.precision}, {"r", s.recall}, {"f", s.f1}}; }

RougeScore score_from_json(const json& j) {
  return {j.at("p").get<double>(), j.at("r").get<double>(), j.at("f").get<double>()};
}

std::string ranking_timestamp(const ExperimentConfig& config) {
  if (!config.created_at.empty()) return config.created_at;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    const auto t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }
  return detail::utc_now_iso8601();
}

DomainRegistry registry_for(const ExperimentConfig& config) {
  auto registry = DomainRegistry::defaults();
  for (const auto& d : config.extra_domains) registry.add(d);
  return registry;
}

std::map<std::string, std::size_t> count_statuses(std::span<const ScoreRow> rows) {
  std::map<std::string, std::size_t> counts{{"ok", 0}, {"fallback", 0}, {"failed", 0}};
  for (const auto& r : rows) ++counts[std::string(to_string(r.parse_status))];
  return counts;
}

}  // namespace

// ---- manifest -----------------------------------------------------------------

std::vector<std::string> RunManifest::eval_ids() const {
  std::set<std::string> ids;
  for (const auto& r : rows) ids.insert(r.id);
  return {ids.begin(), ids.end()};
}

void to_json(json& j, const RunManifest& m) {
  json rows = json::array();
  for (const auto& r : m.rows) {
    rows.push_back({{"id", r.id},
                    {"method", std::string(to_string(r.method))},
                    {"model", r.model},
                    {"domain", r.domain},
                    {"k", r.k},
                    {"parse_status", std::string(to_string(r.parse_status))},
                    {"rouge1", score_json(r.scores.rouge1)},
                    {"rouge2", score_json(r.scores.rouge2)},
                    {"rougeL", score_json(r.scores.rougeL)}});
  }
  j = json{{"label", m.label},
           {"config", m.config},
           {"rows", std::move(rows)},
           {"cache", {{"hits", m.cache.hits}, {"misses", m.cache.misses}, {"entries", m.cache.entries}}},
           {"wall_clock_s", m.wall_clock_s},
           {"parse_status", m.parse_status_counts}};
}

void from_json(const json& j, RunManifest& m) {
  m.label = j.value("label", std::string());
  m.config = j.value("config", json::object());
  m.rows.clear();
  for (const auto& r : j.at("rows")) {
    ScoreRow row;
    row.id = r.at("id").get<std::string>();
    row.method = parse_method(r.at("method").get<std::string>());
    row.model = r.at("model").get<std::string>();
    row.domain = r.at("domain").get<std::string>();
    row.k = r.at("k").get<int>();
    row.parse_status = parse_parse_status(r.at("parse_status").get<std::string>());
    row.scores = {score_from_json(r.at("rouge1")), score_from_json(r.at("rouge2")),
                  score_from_json(r.at("rougeL"))};
    m.rows.push_back(std::move(row));
  }
  if (auto c = j.find("cache"); c != j.end()) {
    m.cache = {c->value("hits", std::size_t{0}), c->value("misses", std::size_t{0}),
               c->value("entries", std::size_t{0})};
  }
  m.wall_clock_s = j.value("wall_clock_s", 0.0);
  m.parse_status_counts = j.value("parse_status", std::map<std::string, std::size_t>{});
}

void save_manifest(const RunManifest& manifest, const fs::path& path) {
  write_text(path, json(manifest).dump(2) + "\n");
}

RunManifest load_manifest_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  try {
    return json::parse(in).get<RunManifest>();
  } catch (const json::exception& e) {
    throw InvalidArgument("invalid manifest " + path.string() + ": " + e.what());
  }
}

// ---- rank ---------------------------------------------------------------------

RankResult cmd_rank(const ExperimentConfig& config, const fs::path& out) {
  validate(config);
  return cmd_rank(config, LmClient::from_config(config.lm), out);
}

RankResult cmd_rank(const ExperimentConfig& config, const LmClient& client, const fs::path& out) {
  const auto corpus = load_corpus(config.corpus_path, registry_for(config));
  const auto split = split_corpus(corpus, config.pool_fraction, config.seed);
  auto ids = split.icl_pool;
  if (config.rank_subsample_per_domain)
    ids = subsample_per_domain(corpus, std::move(ids), *config.rank_subsample_per_domain, config.seed);
  std::vector<TaskInstance> instances;
  instances.reserve(ids.size());
  for (const auto& id : ids) instances.push_back(corpus.at(id));

  RankOptions options;
  options.overlap = config.overlap;
  options.answer_max_tokens = config.rank_answer_max_tokens;
  options.seed = config.seed;
  options.subsample_per_domain = config.rank_subsample_per_domain;
  options.created_at = ranking_timestamp(config);

  RankResult result;
  result.table = rank_questions(client, instances, builtin_bank(), options, config.templates);
  result.rank_matrix = render_rank_matrix(result.table);
  result.cache = client.cache_stats();
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_ranking(result.table, out);
  }
  return result;
}

// ---- eval ---------------------------------------------------------------------

RunManifest cmd_eval(const ExperimentConfig& config) {
  validate(config);
  return cmd_eval(config, LmClient::from_config(config.lm));
}

RunManifest cmd_eval(const ExperimentConfig& config, const LmClient& client) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const auto corpus = load_corpus(config.corpus_path, registry_for(config));
  const auto split = split_corpus(corpus, config.pool_fraction, config.seed);
  auto eval_ids = split.eval_set;
  if (config.eval_subsample_per_domain)
    eval_ids = subsample_per_domain(corpus, std::move(eval_ids), *config.eval_subsample_per_domain,
                                    config.seed);

  const auto ks = effective_k_values(config);
  std::optional<RankingTable> ranking;
  std::optional<GlobalRanking> global;
  if (config.method == Method::kQa) {
    if (config.ranking_path.empty()) throw InvalidArgument("method qa needs a ranking file");
    ranking = load_ranking(config.ranking_path);
    check_model(*ranking, config.lm.model, config.allow_model_mismatch);
    if (config.scope == RankingScope::kGlobal) global = global_ranking(*ranking, config.global_mode);
  }

  const auto& templates = config.templates;
  auto questions_for = [&](const TaskInstance& inst, int k) {
    auto qs = global ? top_k(*global, static_cast<std::size_t>(k))
                     : top_k(*ranking, inst.domain, static_cast<std::size_t>(k));
    if (config.question_order == QuestionOrder::kWorstFirst) std::reverse(qs.begin(), qs.end());
    return qs;
  };
  // In-context answers come from the same single-question prompts the ranking
  // phase issues, so a shared cache serves them without new LM calls.
  auto example_answers = [&](const TaskInstance& ex, std::span<const QuestionSpec> qs) {
    std::vector<std::string> answers;
    for (const auto& q : qs) {
      const auto prompt = build_single_qa(ex.article, q, templates);
      DecodeParams params{config.rank_answer_max_tokens, config.lm.greedy, prompt.stop_sequences};
      answers.push_back(parse_single_answer(client.generate(prompt.text, params).completion, prompt));
    }
    return answers;
  };

  struct WorkItem {
    const TaskInstance* instance;
    int k;
  };
  std::vector<WorkItem> work;
  for (const auto& id : eval_ids) {
    for (int k : ks) work.push_back({&corpus.at(id), k});
  }
  std::vector<ScoreRow> rows(work.size());

  detail::parallel_for(work.size(), static_cast<std::size_t>(config.lm.max_in_flight), [&](std::size_t i) {
    const auto& inst = *work[i].instance;
    const int k = work[i].k;
    auto& row = rows[i];
    row.id = inst.id;
    row.method = config.method;
    row.model = config.lm.model;
    row.domain = inst.domain;
    row.k = k;

    std::vector<TaskInstance> examples;
    if (config.method != Method::kVanilla && config.icl_examples > 0) {
      examples = sample_icl_examples(split, corpus, inst.domain, inst.task, config.icl_examples,
                                     detail::mix_seed(config.seed, inst.id));
    }

    PromptBundle bundle;
    try {
      std::vector<IclExample> icl;
      if (config.method == Method::kVanilla) {
        bundle = build_vanilla(inst.article, templates);
      } else if (config.method == Method::kIcl) {
        for (const auto& ex : examples) icl.push_back({ex.article, {}, ex.reference});
        bundle = build_icl_prompt(inst.article, icl, templates);
      } else {
        const auto qs = questions_for(inst, k);
        for (const auto& ex : examples) icl.push_back({ex.article, example_answers(ex, qs), ex.reference});
        bundle = build_qa_prompt(inst.article, qs, icl, templates);
      }
      DecodeParams params{compute_max_tokens(k), config.lm.greedy, bundle.stop_sequences};
      const auto gen = client.generate(bundle.text, params);
      const auto parsed = parse_output(gen.completion, bundle);
      row.parse_status = parsed.status;
      row.scores = score_summary(parsed.summary, inst.reference);
    } catch (const ReplayMiss&) {
      throw;
    } catch (const BackendUnreachable&) {
      row.parse_status = ParseStatus::kFailed;
    } catch (const RateLimited&) {
      row.parse_status = ParseStatus::kFailed;
    } catch (const BackendError&) {
      row.parse_status = ParseStatus::kFailed;
    }
  });

  std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
    return std::tie(a.id, a.k) < std::tie(b.id, b.k);
  });

  RunManifest manifest;
  manifest.label = run_label(config);
  manifest.config = config;
  manifest.rows = std::move(rows);
  manifest.cache = client.cache_stats();
  manifest.parse_status_counts = count_statuses(manifest.rows);
  manifest.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!config.output_dir.empty()) {
    fs::create_directories(config.output_dir);
    save_manifest(manifest, config.output_dir / "manifest.json");
    write_text(config.output_dir / "per_instance.csv", per_instance_csv(manifest.rows));
    if (!manifest.rows.empty()) {
      const GroupBy by_method{.method = true, .k = true};
      const GroupBy by_domain{.domain = true, .k = true};
      write_text(config.output_dir / "aggregate_method_k.csv",
                 aggregate_csv(aggregate(manifest.rows, by_method), by_method));
      write_text(config.output_dir / "aggregate_domain_k.csv",
                 aggregate_csv(aggregate(manifest.rows, by_domain), by_domain));
    }
  }
  return manifest;
}

// ---- CSV ------------------------------------------------------------------------

namespace {

void append_triple(std::string& out, const RougeTriple& t) {
  for (const auto* s : {&t.rouge1, &t.rouge2, &t.rougeL}) {
    out += ',' + format_score(s->precision);
    out += ',' + format_score(s->recall);
    out += ',' + format_score(s->f1);
  }
}

constexpr const char* kMetricColumns = "r1_p,r1_r,r1_f,r2_p,r2_r,r2_f,rl_p,rl_r,rl_f";

// RFC 4180 quoting for free-text fields.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string per_instance_csv(std::span<const ScoreRow> rows) {
  std::string out = std::string("id,domain,method,k,parse_status,") + kMetricColumns + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.id) + ',' + csv_field(r.domain) + ',' + std::string(to_string(r.method)) + ',' +
           std::to_string(r.k) + ',' + std::string(to_string(r.parse_status));
    append_triple(out, r.scores);
    out += '\n';
  }
  return out;
}

std::string aggregate_csv(std::span<const AggregateRow> rows, GroupBy g) {
  std::string out;
  if (g.method) out += "method,";
  if (g.model) out += "model,";
  if (g.domain) out += "domain,";
  if (g.k) out += "k,";
  out += std::string("n,") + kMetricColumns + "\n";
  for (const auto& r : rows) {
    if (g.method) out += std::string(to_string(*r.method)) + ',';
    if (g.model) out += csv_field(*r.model) + ',';
    if (g.domain) out += csv_field(*r.domain) + ',';
    if (g.k) out += std::to_string(*r.k) + ',';
    out += std::to_string(r.n);
    append_triple(out, r.mean);
    out += '\n';
  }
  return out;
}

std::string format_delta_percent(double base, double value) {
  if (base == 0.0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", (value - base) / base * 100.0);
  return buf;
}

}  // namespace qap

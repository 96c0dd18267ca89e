#include "qaprompt/questions.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qaprompt/corpus.hpp"
#include "qaprompt/detail/parallel.hpp"
#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"
#include "qaprompt/prompting.hpp"

namespace qap {

using nlohmann::json;

const std::vector<QuestionSpec>& builtin_bank() {
  static const std::vector<QuestionSpec> bank{
      {"topic", "What is the main topic or focus of the content?"},
      {"key_pts", "What are the key points or arguments presented?"},
      {"entities", "Who are the 3 main entities or individuals involved, and what roles do they play?"},
      {"timeline", "Which timeline, if any, is being discussed here?"},
      {"details", "What are the supporting details, examples, or evidence provided?"},
      {"conclude", "What conclusions, impacts, or implications are mentioned, if any?"},
      {"tone", "What is the overall tone or sentiment (e.g., objective, critical, positive, etc.)?"},
      {"challenges", "What questions or challenges does the content raise?"},
      {"insights", "What unique insights or perspectives are offered?"},
      {"audience", "What audience is the content aimed at, and how does this affect its presentation?"},
  };
  return bank;
}

std::size_t bank_index(std::string_view key, std::span<const QuestionSpec> bank) {
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (bank[i].key == key) return i;
  }
  throw InvalidArgument("unknown question key '" + std::string(key) + "'");
}

void sort_rankings(RankingTable& table, std::span<const QuestionSpec> bank) {
  for (auto& [_, entries] : table.domains) {
    std::stable_sort(entries.begin(), entries.end(), [&](const RankEntry& a, const RankEntry& b) {
      if (a.mean_precision != b.mean_precision) return a.mean_precision > b.mean_precision;
      return bank_index(a.key, bank) < bank_index(b.key, bank);
    });
  }
}

RankingTable rank_questions(const LmClient& client, std::span<const TaskInstance> instances,
                            std::span<const QuestionSpec> bank, const RankOptions& options) {
  return rank_questions(client, instances, bank, options, PromptTemplates{});
}

RankingTable rank_questions(const LmClient& client, std::span<const TaskInstance> instances,
                            std::span<const QuestionSpec> bank, const RankOptions& options,
                            const PromptTemplates& templates) {
  if (instances.empty()) throw InvalidArgument("ranking needs at least one instance");
  if (bank.empty()) throw InvalidArgument("ranking needs at least one question");

  const std::size_t nq = bank.size();
  struct Sample {
    bool ok = false;
    double precision = 0.0;
    std::exception_ptr error;
  };
  std::vector<Sample> samples(instances.size() * nq);

  detail::parallel_for(samples.size(), static_cast<std::size_t>(client.config().max_in_flight),
                       [&](std::size_t cell) {
    const auto& inst = instances[cell / nq];
    const auto& question = bank[cell % nq];
    const auto prompt = build_single_qa(inst.article, question, templates);
    DecodeParams params{options.answer_max_tokens, client.config().greedy, prompt.stop_sequences};
    auto& sample = samples[cell];
    try {
      const auto gen = client.generate(prompt.text, params);
      const auto answer = parse_single_answer(gen.completion, prompt);
      try {
        sample.precision = overlap_precision(answer, inst.reference, options.overlap);
      } catch (const EmptyAnswer&) {
        sample.precision = 0.0;
      }
      sample.ok = true;
    } catch (const ReplayMiss&) {
      throw;
    } catch (const Error&) {
      sample.error = std::current_exception();
    }
  });

  RankingTable table;
  table.model = client.config().model;
  table.created_at = options.created_at;
  table.seed = options.seed;
  table.subsample_per_domain = options.subsample_per_domain;

  std::set<std::string> domains;
  for (const auto& inst : instances) domains.insert(inst.domain);
  for (const auto& domain : domains) {
    auto& entries = table.domains[domain];
    for (std::size_t q = 0; q < nq; ++q) {
      double sum = 0.0;
      std::size_t n = 0;
      std::exception_ptr last_error;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].domain != domain) continue;
        const auto& s = samples[i * nq + q];
        if (s.ok) {
          sum += s.precision;
          ++n;
        } else {
          last_error = s.error;
        }
      }
      if (n == 0) {
        if (last_error) std::rethrow_exception(last_error);
        throw RankingError("no successful samples for (" + domain + ", " + bank[q].key + ")");
      }
      entries.push_back({bank[q].key, sum / static_cast<double>(n), n});
    }
  }
  sort_rankings(table, bank);
  return table;
}

GlobalRanking global_ranking(const RankingTable& table, GlobalMode mode,
                             std::span<const QuestionSpec> bank) {
  if (table.domains.empty()) throw InvalidArgument("ranking table has no domains");
  std::vector<double> sums(bank.size(), 0.0);
  std::vector<std::size_t> counts(bank.size(), 0);
  for (const auto& [_, entries] : table.domains) {
    for (std::size_t r = 0; r < entries.size(); ++r) {
      const auto q = bank_index(entries[r].key, bank);
      sums[q] += mode == GlobalMode::kPrecisionMean ? entries[r].mean_precision
                                                     : static_cast<double>(r + 1);
      ++counts[q];
    }
  }
  GlobalRanking out;
  out.model = table.model;
  out.mode = mode;
  for (std::size_t q = 0; q < bank.size(); ++q) {
    if (counts[q] > 0) out.entries.push_back({bank[q].key, sums[q] / static_cast<double>(counts[q])});
  }
  std::stable_sort(out.entries.begin(), out.entries.end(), [&](const GlobalEntry& a, const GlobalEntry& b) {
    if (a.score != b.score)
      return mode == GlobalMode::kPrecisionMean ? a.score > b.score : a.score < b.score;
    return bank_index(a.key, bank) < bank_index(b.key, bank);
  });
  return out;
}

namespace {

template <typename Entries>
std::vector<QuestionSpec> first_k(const Entries& entries, std::size_t k,
                                  std::span<const QuestionSpec> bank) {
  const std::size_t max = std::min<std::size_t>(entries.size(), 10);
  if (k > max) throw KOutOfRange(k, max);
  std::vector<QuestionSpec> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(bank[bank_index(entries[i].key, bank)]);
  return out;
}

}  // namespace

std::vector<QuestionSpec> top_k(const RankingTable& table, std::string_view domain, std::size_t k,
                                std::span<const QuestionSpec> bank) {
  auto it = table.domains.find(std::string(domain));
  if (it == table.domains.end()) throw UnknownDomain(std::string(domain));
  return first_k(it->second, k, bank);
}

std::vector<QuestionSpec> top_k(const GlobalRanking& ranking, std::size_t k,
                                std::span<const QuestionSpec> bank) {
  return first_k(ranking.entries, k, bank);
}

void check_model(const RankingTable& table, std::string_view model, bool allow_mismatch) {
  if (!allow_mismatch && table.model != model) throw ModelMismatch(table.model, std::string(model));
}

std::string serialize_ranking(const RankingTable& table) {
  json domains = json::object();
  for (const auto& [domain, entries] : table.domains) {
    json arr = json::array();
    for (const auto& e : entries)
      arr.push_back({{"key", e.key}, {"mean_precision", e.mean_precision}, {"n", e.n}});
    domains[domain] = std::move(arr);
  }
  json doc{{"model", table.model},
           {"created_at", table.created_at},
           {"seed", table.seed},
           {"subsample_per_domain", table.subsample_per_domain ? json(*table.subsample_per_domain) : json()},
           {"domains", std::move(domains)}};
  return doc.dump(2) + "\n";
}

RankingTable parse_ranking(std::string_view text, std::span<const QuestionSpec> bank) {
  RankingTable table;
  try {
    const auto doc = json::parse(text);
    table.model = doc.at("model").get<std::string>();
    table.created_at = doc.value("created_at", "");
    table.seed = doc.value("seed", std::uint64_t{0});
    if (auto s = doc.find("subsample_per_domain"); s != doc.end() && !s->is_null())
      table.subsample_per_domain = s->get<std::size_t>();
    for (const auto& [domain, arr] : doc.at("domains").items()) {
      auto& entries = table.domains[domain];
      std::set<std::string> seen;
      for (const auto& e : arr) {
        RankEntry entry{e.at("key").get<std::string>(), e.at("mean_precision").get<double>(),
                        e.at("n").get<std::size_t>()};
        bank_index(entry.key, bank);
        if (!seen.insert(entry.key).second)
          throw RankingError("domain '" + domain + "' lists '" + entry.key + "' twice");
        if (entry.mean_precision < 0.0 || entry.mean_precision > 1.0)
          throw RankingError("mean precision outside [0, 1] for '" + entry.key + "'");
        entries.push_back(std::move(entry));
      }
      if (seen.size() != bank.size())
        throw RankingError("domain '" + domain + "' does not rank every question");
    }
  } catch (const json::exception& e) {
    throw RankingError(std::string("invalid ranking file: ") + e.what());
  }
  return table;
}

void save_ranking(const RankingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_ranking(table);
}

RankingTable load_ranking(const std::filesystem::path& path, std::span<const QuestionSpec> bank) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ranking(ss.str(), bank);
}

std::string render_rank_matrix(const RankingTable& table, std::span<const QuestionSpec> bank) {
  std::string out = "| Domain |";
  std::string rule = "|---|";
  for (const auto& q : bank) {
    out += " " + q.key + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& [domain, entries] : table.domains) {
    std::vector<std::string> cells(bank.size(), "-");
    for (std::size_t r = 0; r < entries.size(); ++r)
      cells[bank_index(entries[r].key, bank)] = std::to_string(r + 1);
    out += "| " + domain + " |";
    for (const auto& c : cells) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

}  // namespace qap

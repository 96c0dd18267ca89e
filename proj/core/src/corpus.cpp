#include "qaprompt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qaprompt/detail/rng.hpp"
#include "qaprompt/error.hpp"
#include "qaprompt/metrics.hpp"

namespace qap {

using nlohmann::json;

DomainRegistry DomainRegistry::defaults() {
  return DomainRegistry({"Commonsense", "Dialogue", "News", "Public Places", "Reviews", "Research"});
}

DomainRegistry::DomainRegistry(std::vector<std::string> names) {
  for (auto& n : names) add(std::move(n));
}

void DomainRegistry::add(std::string name) {
  if (!contains(name)) names_.push_back(std::move(name));
}

bool DomainRegistry::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const std::map<std::string, std::size_t>& replication_domain_counts() {
  static const std::map<std::string, std::size_t> counts{
      {"Commonsense", 600}, {"Dialogue", 1200}, {"News", 3000},
      {"Public Places", 600}, {"Reviews", 1200}, {"Research", 600},
  };
  return counts;
}

namespace {

void validate(const TaskInstance& inst, std::size_t line, const DomainRegistry& registry) {
  if (inst.id.empty()) throw MalformedRecord(line, "empty id");
  if (tokenize(inst.article).empty()) throw MalformedRecord(line, "article has no words");
  if (tokenize(inst.reference).empty()) throw MalformedRecord(line, "reference has no words");
  if (!registry.contains(inst.domain)) throw UnknownDomain(line, inst.domain);
}

std::string required_string(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw MalformedRecord(line, std::string("missing field '") + field + "'");
  if (!it->is_string()) throw MalformedRecord(line, std::string("field '") + field + "' is not a string");
  return it->get<std::string>();
}

void reject_unknown_fields(const json& obj, std::initializer_list<std::string_view> allowed,
                           std::size_t line) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw MalformedRecord(line, "unexpected field '" + key + "'");
  }
}

json parse_line(std::string_view text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(line, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw MalformedRecord(line, "record is not a JSON object");
  return obj;
}

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(pos, end - pos);
    if (!is_blank(line)) fn(line, line_no);
    pos = end + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using GroupKey = std::pair<std::string, std::string>;

std::map<GroupKey, std::vector<std::string>> group_ids(const Corpus& corpus) {
  std::map<GroupKey, std::vector<std::string>> groups;
  for (const auto& inst : corpus.instances()) groups[{inst.domain, inst.task}].push_back(inst.id);
  for (auto& [_, ids] : groups) std::sort(ids.begin(), ids.end());
  return groups;
}

std::string group_salt(std::string_view domain, std::string_view task) {
  std::string salt(domain);
  salt.push_back('\x1f');
  salt.append(task);
  return salt;
}

}  // namespace

Corpus::Corpus(std::vector<TaskInstance> instances, DomainRegistry registry)
    : instances_(std::move(instances)), registry_(std::move(registry)) {
  index_.reserve(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& inst = instances_[i];
    validate(inst, i + 1, registry_);
    if (!index_.emplace(inst.id, i).second) throw DuplicateId(i + 1, inst.id);
    ++domain_counts_[inst.domain];
  }
}

const TaskInstance& Corpus::at(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw InvalidArgument("unknown instance id '" + std::string(id) + "'");
  return instances_[it->second];
}

bool Corpus::contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }

Corpus parse_corpus(std::string_view jsonl, const DomainRegistry& registry) {
  std::vector<TaskInstance> instances;
  std::set<std::string> seen;
  for_each_line(jsonl, [&](std::string_view text, std::size_t line) {
    const auto obj = parse_line(text, line);
    reject_unknown_fields(obj, {"id", "domain", "task", "article", "reference"}, line);
    TaskInstance inst{required_string(obj, "id", line), required_string(obj, "domain", line),
                      required_string(obj, "task", line), required_string(obj, "article", line),
                      required_string(obj, "reference", line)};
    validate(inst, line, registry);
    if (!seen.insert(inst.id).second) throw DuplicateId(line, inst.id);
    instances.push_back(std::move(inst));
  });
  return Corpus(std::move(instances), registry);
}

Corpus load_corpus(const std::filesystem::path& path, const DomainRegistry& registry) {
  return parse_corpus(read_file(path), registry);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& inst : corpus.instances()) {
    json obj = {{"id", inst.id},
                {"domain", inst.domain},
                {"task", inst.task},
                {"article", inst.article},
                {"reference", inst.reference}};
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_corpus(corpus);
}

std::vector<ManifestEntry> parse_manifest(std::string_view jsonl, const DomainRegistry& registry) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for_each_line(jsonl, [&](std::string_view text, std::size_t line) {
    const auto obj = parse_line(text, line);
    reject_unknown_fields(obj, {"id", "domain", "task", "count"}, line);
    ManifestEntry e{required_string(obj, "id", line), required_string(obj, "domain", line),
                    required_string(obj, "task", line), 0};
    auto count = obj.find("count");
    if (count == obj.end()) throw MalformedRecord(line, "missing field 'count'");
    if (!count->is_number_unsigned()) throw MalformedRecord(line, "field 'count' is not a non-negative integer");
    e.count = count->get<std::size_t>();
    if (!registry.contains(e.domain)) throw UnknownDomain(line, e.domain);
    if (!seen.insert(e.id).second) throw DuplicateId(line, e.id);
    entries.push_back(std::move(e));
  });
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path,
                                         const DomainRegistry& registry) {
  return parse_manifest(read_file(path), registry);
}

std::map<std::string, std::size_t> manifest_domain_totals(const std::vector<ManifestEntry>& manifest) {
  std::map<std::string, std::size_t> totals;
  for (const auto& e : manifest) totals[e.domain] += e.count;
  return totals;
}

void check_domain_counts(const std::map<std::string, std::size_t>& actual,
                         const std::map<std::string, std::size_t>& expected) {
  std::set<std::string> names;
  for (const auto& [d, _] : actual) names.insert(d);
  for (const auto& [d, _] : expected) names.insert(d);
  for (const auto& d : names) {
    auto a = actual.count(d) ? actual.at(d) : 0;
    auto e = expected.count(d) ? expected.at(d) : 0;
    if (a != e)
      throw CorpusError("domain '" + d + "' has " + std::to_string(a) + " instances, expected " +
                        std::to_string(e));
  }
}

bool CorpusSplit::in_pool(std::string_view id) const {
  return std::binary_search(icl_pool.begin(), icl_pool.end(), id);
}

bool CorpusSplit::in_eval(std::string_view id) const {
  return std::binary_search(eval_set.begin(), eval_set.end(), id);
}

CorpusSplit split_corpus(const Corpus& corpus, double pool_fraction, std::uint64_t seed) {
  if (!(pool_fraction > 0.0 && pool_fraction < 1.0))
    throw InvalidArgument("pool fraction must lie in (0, 1)");
  CorpusSplit split;
  split.seed = seed;
  split.pool_fraction = pool_fraction;
  for (auto& [key, ids] : group_ids(corpus)) {
    if (ids.size() < 2) throw GroupTooSmall(key.first, key.second);
    auto take = static_cast<std::size_t>(std::ceil(pool_fraction * static_cast<double>(ids.size())));
    take = std::clamp<std::size_t>(take, 1, ids.size() - 1);
    std::mt19937_64 rng(detail::mix_seed(seed, group_salt(key.first, key.second)));
    detail::stable_shuffle(ids, rng);
    split.icl_pool.insert(split.icl_pool.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    split.eval_set.insert(split.eval_set.end(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end());
  }
  std::sort(split.icl_pool.begin(), split.icl_pool.end());
  std::sort(split.eval_set.begin(), split.eval_set.end());
  return split;
}

std::vector<TaskInstance> sample_icl_examples(const CorpusSplit& split, const Corpus& corpus,
                                              std::string_view domain, std::string_view task,
                                              std::size_t count, std::uint64_t seed) {
  if (count == 0) throw InvalidArgument("ICL example count must be >= 1");
  std::vector<std::string> members;
  for (const auto& id : split.icl_pool) {
    const auto& inst = corpus.at(id);
    if (inst.domain == domain && inst.task == task) members.push_back(id);
  }
  if (members.size() < count)
    throw InsufficientPool(std::string(domain), std::string(task), members.size(), count);
  std::mt19937_64 rng(detail::mix_seed(seed, group_salt(domain, task)));
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(detail::uniform_below(rng, members.size() - i));
    std::swap(members[i], members[j]);
  }
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(corpus.at(members[i]));
  return out;
}

std::vector<std::string> subsample_per_domain(const Corpus& corpus, std::vector<std::string> ids,
                                              std::size_t per_domain, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_domain;
  std::sort(ids.begin(), ids.end());
  for (auto& id : ids) by_domain[corpus.at(id).domain].push_back(std::move(id));
  std::vector<std::string> out;
  for (auto& [domain, members] : by_domain) {
    if (members.size() > per_domain) {
      std::mt19937_64 rng(detail::mix_seed(seed, domain));
      detail::stable_shuffle(members, rng);
      members.resize(per_domain);
    }
    out.insert(out.end(), members.begin(), members.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace qap

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qap {

struct TaskInstance {
  std::string id;
  std::string domain;
  std::string task;
  std::string article;
  std::string reference;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

/// Ordered set of known domain names. Case-sensitive.
class DomainRegistry {
 public:
  /// Commonsense, Dialogue, News, Public Places, Reviews, Research.
  static DomainRegistry defaults();

  DomainRegistry() = default;
  explicit DomainRegistry(std::vector<std::string> names);

  /// Appends a name; no-op when already present.
  void add(std::string name);
  bool contains(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

/// Per-domain instance counts of the full replication data set.
const std::map<std::string, std::size_t>& replication_domain_counts();

/// A validated, immutable collection of task instances in file order.
class Corpus {
 public:
  Corpus() = default;
  /// Validates every instance; throws the same errors as load_corpus (line = index + 1).
  Corpus(std::vector<TaskInstance> instances, DomainRegistry registry = DomainRegistry::defaults());

  const std::vector<TaskInstance>& instances() const noexcept { return instances_; }
  std::size_t size() const noexcept { return instances_.size(); }
  const DomainRegistry& registry() const noexcept { return registry_; }
  const std::map<std::string, std::size_t>& domain_counts() const noexcept { return domain_counts_; }

  /// Throws InvalidArgument for an unknown id.
  const TaskInstance& at(std::string_view id) const;
  bool contains(std::string_view id) const;

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.instances_ == b.instances_; }

 private:
  std::vector<TaskInstance> instances_;
  DomainRegistry registry_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::size_t> domain_counts_;
};

/// Reads newline-delimited JSON records. Blank lines are ignored. The first
/// offending record aborts the load with MalformedRecord, DuplicateId or UnknownDomain.
Corpus load_corpus(const std::filesystem::path& path,
                   const DomainRegistry& registry = DomainRegistry::defaults());
Corpus parse_corpus(std::string_view jsonl, const DomainRegistry& registry = DomainRegistry::defaults());

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

/// One line of a sidecar manifest: a (domain, task) group and its size.
struct ManifestEntry {
  std::string id;
  std::string domain;
  std::string task;
  std::size_t count = 0;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path,
                                         const DomainRegistry& registry = DomainRegistry::defaults());
std::vector<ManifestEntry> parse_manifest(std::string_view jsonl,
                                          const DomainRegistry& registry = DomainRegistry::defaults());
std::map<std::string, std::size_t> manifest_domain_totals(const std::vector<ManifestEntry>& manifest);

/// Throws CorpusError naming the first domain whose count differs.
void check_domain_counts(const std::map<std::string, std::size_t>& actual,
                         const std::map<std::string, std::size_t>& expected);

struct CorpusSplit {
  std::vector<std::string> icl_pool;  // sorted
  std::vector<std::string> eval_set;  // sorted
  std::uint64_t seed = 0;
  double pool_fraction = 0.0;

  bool in_pool(std::string_view id) const;
  bool in_eval(std::string_view id) const;
};

/// Stratified by (domain, task). Each group gives ceil(pool_fraction * size)
/// instances to the pool, at least 1 and at most size - 1.
CorpusSplit split_corpus(const Corpus& corpus, double pool_fraction, std::uint64_t seed);

/// `count` distinct pool members of the (domain, task) group, deterministic in seed.
std::vector<TaskInstance> sample_icl_examples(const CorpusSplit& split, const Corpus& corpus,
                                              std::string_view domain, std::string_view task,
                                              std::size_t count, std::uint64_t seed);

/// Keeps at most `per_domain` ids from each domain, seeded. Output is sorted.
std::vector<std::string> subsample_per_domain(const Corpus& corpus, std::vector<std::string> ids,
                                              std::size_t per_domain, std::uint64_t seed);

}  // namespace qap

#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"

namespace qap {

namespace fs = std::filesystem;

std::shared_ptr<ReplayBackend> ReplayBackend::from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("replay directory not found: " + dir.string());
  auto backend = std::make_shared<ReplayBackend>();
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".json") continue;
    auto entry = read_entry(e.path());
    backend->prime(entry.request, std::move(entry.completion), entry.finish);
  }
  return backend;
}

void ReplayBackend::prime(const CompletionRequest& request, std::string completion,
                          FinishReason finish) {
  std::lock_guard lock(mu_);
  recordings_.insert_or_assign(cache_key(request), BackendResponse{std::move(completion), finish});
}

std::size_t ReplayBackend::size() const {
  std::lock_guard lock(mu_);
  return recordings_.size();
}

BackendResponse ReplayBackend::complete(const CompletionRequest& request) {
  const auto digest = cache_key(request);
  std::lock_guard lock(mu_);
  auto it = recordings_.find(digest);
  if (it == recordings_.end()) throw ReplayMiss(digest);
  return it->second;
}

}  // namespace qap

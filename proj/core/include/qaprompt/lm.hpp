#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qap {

enum class BackendKind { kHttp, kReplay };

struct LmConfig {
  BackendKind backend = BackendKind::kHttp;
  std::string endpoint;  // http only, e.g. http://localhost:8000/v1/completions
  std::string model;
  int max_tokens = 512;
  bool greedy = true;
  std::vector<std::string> stop_sequences;
  double timeout_s = 120.0;
  int max_retries = 3;
  int retry_backoff_ms = 500;
  int max_in_flight = 4;
  std::string api_key_env = "QAPROMPT_API_KEY";
  std::filesystem::path replay_dir;  // replay only
  std::filesystem::path cache_dir;   // empty: in-memory cache
};

/// Throws InvalidArgument when a field is out of range.
void validate(const LmConfig& config);

void to_json(nlohmann::json& j, const LmConfig& config);
void from_json(const nlohmann::json& j, LmConfig& config);

/// Generation budget for a prompt with k questions: 512 + 32k.
int compute_max_tokens(int k);

struct CompletionRequest {
  std::string model;
  std::string prompt;
  int max_tokens = 0;
  bool greedy = true;
  std::vector<std::string> stop_sequences;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

/// Lowercase hex SHA-256 over a canonical JSON encoding of every request field.
std::string cache_key(const CompletionRequest& request);

enum class FinishReason { kStop, kLength, kError };
std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view name);

struct BackendResponse {
  std::string text;
  FinishReason finish = FinishReason::kStop;
};

struct Generation {
  std::string prompt;
  std::string completion;
  FinishReason finish = FinishReason::kStop;
  bool from_cache = false;
  double latency_ms = 0.0;
};

/// Cuts `text` at the earliest occurrence of any stop sequence.
/// Returns true when a cut happened.
bool truncate_at_stop(std::string& text, const std::vector<std::string>& stops);

// ---- cache ------------------------------------------------------------------

struct CacheEntry {
  CompletionRequest request;
  std::string completion;
  FinishReason finish = FinishReason::kStop;
  std::string timestamp;  // ISO-8601 UTC
};

void to_json(nlohmann::json& j, const CacheEntry& entry);
void from_json(const nlohmann::json& j, CacheEntry& entry);

/// `<dir>/<first two hex digits>/<digest>.json`
std::filesystem::path entry_path(const std::filesystem::path& dir, std::string_view digest);

/// Writes to a temporary file in the target directory and renames it into
/// place, so readers never observe a partial entry.
void write_entry(const std::filesystem::path& dir, const CacheEntry& entry);
CacheEntry read_entry(const std::filesystem::path& file);

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t entries = 0;

  friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

/// Content-addressed completion cache. With a directory it persists one file
/// per entry; without one it lives in memory. Safe for concurrent use.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<CacheEntry> lookup(const CompletionRequest& request);
  void store(const CacheEntry& entry);
  CacheStats stats() const;
  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, CacheEntry> memory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> entries_{0};
};

// ---- backends ---------------------------------------------------------------

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  /// Must be safe to call concurrently.
  virtual BackendResponse complete(const CompletionRequest& request) = 0;
};

/// POSTs {model, prompt, max_tokens, temperature, stop} as JSON and reads the
/// first completion text from the response.
class HttpBackend : public CompletionBackend {
 public:
  explicit HttpBackend(const LmConfig& config);
  BackendResponse complete(const CompletionRequest& request) override;

  /// Builds the JSON request body.
  static nlohmann::json request_body(const CompletionRequest& request);
  /// Extracts the completion from an OpenAI-style, llama.cpp or Ollama response.
  static BackendResponse parse_response(const nlohmann::json& body);

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  double timeout_s_;
};

/// Serves pre-recorded completions keyed by cache_key. An unknown request
/// throws ReplayMiss and never reaches the network.
class ReplayBackend : public CompletionBackend {
 public:
  ReplayBackend() = default;
  /// Loads every entry file below `dir` (same layout as the cache).
  static std::shared_ptr<ReplayBackend> from_directory(const std::filesystem::path& dir);

  void prime(const CompletionRequest& request, std::string completion,
             FinishReason finish = FinishReason::kStop);
  std::size_t size() const;
  BackendResponse complete(const CompletionRequest& request) override;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, BackendResponse> recordings_;
};

/// Adapts a callable; used for scripted test doubles.
class FunctionBackend : public CompletionBackend {
 public:
  using Fn = std::function<BackendResponse(const CompletionRequest&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  BackendResponse complete(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

/// Forwards to another backend and writes every response as a replay entry.
class RecordingBackend : public CompletionBackend {
 public:
  RecordingBackend(std::shared_ptr<CompletionBackend> inner, std::filesystem::path dir);
  BackendResponse complete(const CompletionRequest& request) override;

 private:
  std::shared_ptr<CompletionBackend> inner_;
  std::filesystem::path dir_;
};

// ---- client -----------------------------------------------------------------

struct DecodeParams {
  int max_tokens = 512;
  bool greedy = true;
  std::vector<std::string> stop_sequences;
};

/// Cache-first completion client with bounded parallelism and retries.
/// Copies share the backend, cache and in-flight limit.
class LmClient {
 public:
  LmClient(LmConfig config, std::shared_ptr<CompletionBackend> backend,
           std::shared_ptr<ResponseCache> cache = nullptr);

  /// Builds the backend and cache that `config` describes.
  static LmClient from_config(const LmConfig& config);

  const LmConfig& config() const noexcept { return config_; }
  DecodeParams default_params() const;

  Generation generate(std::string_view prompt) const;
  Generation generate(std::string_view prompt, const DecodeParams& params) const;

  CacheStats cache_stats() const { return cache_->stats(); }

 private:
  BackendResponse call_with_retries(const CompletionRequest& request) const;

  LmConfig config_;
  std::shared_ptr<CompletionBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace qap

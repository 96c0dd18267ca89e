#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "qaprompt/detail/time.hpp"
#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"

namespace qap {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::kStop:
      return "stop";
    case FinishReason::kLength:
      return "length";
    case FinishReason::kError:
      return "error";
  }
  return "?";
}

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "stop") return FinishReason::kStop;
  if (name == "length") return FinishReason::kLength;
  if (name == "error") return FinishReason::kError;
  throw InvalidArgument("unknown finish reason '" + std::string(name) + "'");
}

namespace {

json key_fields(const CompletionRequest& r) {
  return json{{"model", r.model},
              {"prompt", r.prompt},
              {"max_tokens", r.max_tokens},
              {"greedy", r.greedy},
              {"stop", r.stop_sequences}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string cache_key(const CompletionRequest& request) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const std::string canonical = key_fields(request).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::kIo, "SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

bool truncate_at_stop(std::string& text, const std::vector<std::string>& stops) {
  auto cut = std::string::npos;
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    cut = std::min(cut, text.find(stop));
  }
  if (cut == std::string::npos) return false;
  text.resize(cut);
  return true;
}

void to_json(json& j, const CacheEntry& entry) {
  j = key_fields(entry.request);
  j["completion"] = entry.completion;
  j["finish_reason"] = std::string(to_string(entry.finish));
  j["timestamp"] = entry.timestamp;
}

void from_json(const json& j, CacheEntry& entry) {
  entry.request.model = j.at("model").get<std::string>();
  entry.request.prompt = j.at("prompt").get<std::string>();
  entry.request.max_tokens = j.at("max_tokens").get<int>();
  entry.request.greedy = j.at("greedy").get<bool>();
  entry.request.stop_sequences = j.at("stop").get<std::vector<std::string>>();
  entry.completion = j.at("completion").get<std::string>();
  entry.finish = parse_finish_reason(j.at("finish_reason").get<std::string>());
  entry.timestamp = j.value("timestamp", "");
}

fs::path entry_path(const fs::path& dir, std::string_view digest) {
  return dir / std::string(digest.substr(0, 2)) / (std::string(digest) + ".json");
}

void write_entry(const fs::path& dir, const CacheEntry& entry) {
  const auto digest = cache_key(entry.request);
  const auto target = entry_path(dir, digest);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw IoError("cannot create " + target.parent_path().string() + ": " + ec.message());

  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
         << std::chrono::steady_clock::now().time_since_epoch().count();
  auto tmp = target;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << json(entry).dump(2) << '\n';
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot publish " + target.string() + ": " + ec.message());
  }
}

CacheEntry read_entry(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  try {
    return json::parse(in).get<CacheEntry>();
  } catch (const json::exception& e) {
    throw IoError("corrupt cache entry " + file.string() + ": " + e.what());
  }
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_)) {
    if (e.is_regular_file() && e.path().extension() == ".json") ++n;
  }
  entries_ = n;
}

std::optional<CacheEntry> ResponseCache::lookup(const CompletionRequest& request) {
  const auto digest = cache_key(request);
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(digest); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  if (!dir_.empty()) {
    const auto file = entry_path(dir_, digest);
    if (fs::exists(file)) {
      auto entry = read_entry(file);
      if (entry.request == request) {
        ++hits_;
        std::lock_guard lock(mu_);
        memory_.emplace(digest, entry);
        return entry;
      }
    }
  }
  ++misses_;
  return std::nullopt;
}

void ResponseCache::store(const CacheEntry& entry) {
  const auto digest = cache_key(entry.request);
  std::lock_guard lock(mu_);
  bool fresh = false;
  if (!dir_.empty()) {
    fresh = !fs::exists(entry_path(dir_, digest));
    write_entry(dir_, entry);
  }
  const bool inserted = memory_.insert_or_assign(digest, entry).second;
  if (dir_.empty() ? inserted : fresh) ++entries_;
}

CacheStats ResponseCache::stats() const { return {hits_.load(), misses_.load(), entries_.load()}; }

std::string detail::utc_now_iso8601() { return utc_timestamp(); }

}  // namespace qap

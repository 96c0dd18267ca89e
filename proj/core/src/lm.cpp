#include "qaprompt/lm.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <nlohmann/json.hpp>

#include "qaprompt/detail/time.hpp"
#include "qaprompt/error.hpp"

namespace qap {

using nlohmann::json;

int compute_max_tokens(int k) {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  return 512 + 32 * k;
}

void validate(const LmConfig& c) {
  if (c.model.empty()) throw InvalidArgument("lm.model must be set");
  if (c.max_tokens <= 0) throw InvalidArgument("lm.max_tokens must be positive");
  if (c.max_in_flight < 1) throw InvalidArgument("lm.max_in_flight must be >= 1");
  if (c.max_retries < 0) throw InvalidArgument("lm.max_retries must be >= 0");
  if (c.retry_backoff_ms < 0) throw InvalidArgument("lm.retry_backoff_ms must be >= 0");
  if (c.timeout_s <= 0) throw InvalidArgument("lm.timeout_s must be positive");
  if (c.backend == BackendKind::kHttp && c.endpoint.empty())
    throw InvalidArgument("lm.endpoint is required for the http backend");
  if (c.backend == BackendKind::kReplay && c.replay_dir.empty())
    throw InvalidArgument("lm.replay_dir is required for the replay backend");
}

void to_json(json& j, const LmConfig& c) {
  j = json{{"backend", c.backend == BackendKind::kHttp ? "http" : "replay"},
           {"endpoint", c.endpoint},
           {"model", c.model},
           {"max_tokens", c.max_tokens},
           {"greedy", c.greedy},
           {"stop_sequences", c.stop_sequences},
           {"timeout_s", c.timeout_s},
           {"max_retries", c.max_retries},
           {"retry_backoff_ms", c.retry_backoff_ms},
           {"max_in_flight", c.max_in_flight},
           {"api_key_env", c.api_key_env},
           {"replay_dir", c.replay_dir.string()},
           {"cache_dir", c.cache_dir.string()}};
}

void from_json(const json& j, LmConfig& c) {
  LmConfig d;
  const auto backend = j.value("backend", std::string("http"));
  if (backend == "http") {
    c.backend = BackendKind::kHttp;
  } else if (backend == "replay") {
    c.backend = BackendKind::kReplay;
  } else {
    throw InvalidArgument("lm.backend must be 'http' or 'replay', got '" + backend + "'");
  }
  c.endpoint = j.value("endpoint", d.endpoint);
  c.model = j.value("model", d.model);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.greedy = j.value("greedy", d.greedy);
  c.stop_sequences = j.value("stop_sequences", d.stop_sequences);
  c.timeout_s = j.value("timeout_s", d.timeout_s);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.retry_backoff_ms = j.value("retry_backoff_ms", d.retry_backoff_ms);
  c.max_in_flight = j.value("max_in_flight", d.max_in_flight);
  c.api_key_env = j.value("api_key_env", d.api_key_env);
  c.replay_dir = j.value("replay_dir", std::string());
  c.cache_dir = j.value("cache_dir", std::string());
}

RecordingBackend::RecordingBackend(std::shared_ptr<CompletionBackend> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

BackendResponse RecordingBackend::complete(const CompletionRequest& request) {
  auto response = inner_->complete(request);
  write_entry(dir_, CacheEntry{request, response.text, response.finish, detail::utc_now_iso8601()});
  return response;
}

LmClient::LmClient(LmConfig config, std::shared_ptr<CompletionBackend> backend,
                   std::shared_ptr<ResponseCache> cache)
    : config_(std::move(config)), backend_(std::move(backend)), cache_(std::move(cache)) {
  if (!backend_) throw InvalidArgument("LmClient needs a backend");
  if (config_.max_in_flight < 1) throw InvalidArgument("lm.max_in_flight must be >= 1");
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
  in_flight_ = std::make_shared<std::counting_semaphore<>>(config_.max_in_flight);
}

LmClient LmClient::from_config(const LmConfig& config) {
  validate(config);
  std::shared_ptr<CompletionBackend> backend;
  if (config.backend == BackendKind::kHttp) {
    backend = std::make_shared<HttpBackend>(config);
  } else {
    backend = ReplayBackend::from_directory(config.replay_dir);
  }
  auto cache = config.cache_dir.empty() ? std::make_shared<ResponseCache>()
                                        : std::make_shared<ResponseCache>(config.cache_dir);
  return LmClient(config, std::move(backend), std::move(cache));
}

DecodeParams LmClient::default_params() const {
  return {config_.max_tokens, config_.greedy, config_.stop_sequences};
}

Generation LmClient::generate(std::string_view prompt) const {
  return generate(prompt, default_params());
}

Generation LmClient::generate(std::string_view prompt, const DecodeParams& params) const {
  if (prompt.empty()) throw InvalidArgument("prompt must not be empty");
  const auto start = std::chrono::steady_clock::now();
  CompletionRequest request{config_.model, std::string(prompt), params.max_tokens, params.greedy,
                            params.stop_sequences};
  Generation gen;
  gen.prompt = request.prompt;
  if (auto hit = cache_->lookup(request)) {
    gen.completion = std::move(hit->completion);
    gen.finish = hit->finish;
    gen.from_cache = true;
  } else {
    auto response = call_with_retries(request);
    if (truncate_at_stop(response.text, request.stop_sequences)) response.finish = FinishReason::kStop;
    cache_->store(CacheEntry{request, response.text, response.finish, detail::utc_now_iso8601()});
    gen.completion = std::move(response.text);
    gen.finish = response.finish;
  }
  gen.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return gen;
}

BackendResponse LmClient::call_with_retries(const CompletionRequest& request) const {
  for (int attempt = 0;; ++attempt) {
    try {
      in_flight_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*in_flight_};
      return backend_->complete(request);
    } catch (const BackendUnreachable&) {
      if (attempt >= config_.max_retries) throw;
    } catch (const RateLimited&) {
      if (attempt >= config_.max_retries) throw;
    }
    const auto delay = std::chrono::milliseconds(static_cast<long long>(config_.retry_backoff_ms) << std::min(attempt, 16));
    std::this_thread::sleep_for(delay);
  }
}

}  // namespace qap

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"

namespace qap {

using nlohmann::json;

HttpBackend::HttpBackend(const LmConfig& config) : timeout_s_(config.timeout_s) {
  const auto& url = config.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint must be an http(s) URL: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw InvalidArgument("unsupported URL scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (!config.api_key_env.empty()) {
    if (const char* key = std::getenv(config.api_key_env.c_str())) api_key_ = key;
  }
}

json HttpBackend::request_body(const CompletionRequest& request) {
  json body{{"model", request.model},
            {"prompt", request.prompt},
            {"max_tokens", request.max_tokens}};
  if (request.greedy) body["temperature"] = 0;
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  return body;
}

BackendResponse HttpBackend::parse_response(const json& body) {
  BackendResponse out;
  std::string finish;
  if (auto choices = body.find("choices"); choices != body.end() && choices->is_array() && !choices->empty()) {
    const auto& first = (*choices)[0];
    if (first.contains("text") && first["text"].is_string()) {
      out.text = first["text"].get<std::string>();
    } else if (first.contains("message") && first["message"].contains("content")) {
      out.text = first["message"]["content"].get<std::string>();
    } else {
      throw BackendError("first choice has no text");
    }
    if (first.contains("finish_reason") && first["finish_reason"].is_string())
      finish = first["finish_reason"].get<std::string>();
  } else if (body.contains("content") && body["content"].is_string()) {
    out.text = body["content"].get<std::string>();  // llama.cpp server
    if (body.value("stopped_limit", false)) finish = "length";
  } else if (body.contains("response") && body["response"].is_string()) {
    out.text = body["response"].get<std::string>();  // ollama
    finish = body.value("done_reason", std::string());
  } else {
    throw BackendError("response has no completion text");
  }
  out.finish = finish == "length" ? FinishReason::kLength : FinishReason::kStop;
  return out;
}

BackendResponse HttpBackend::complete(const CompletionRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto result = client.Post(path_, headers, request_body(request).dump(), "application/json");
  if (!result) throw BackendUnreachable(scheme_host_port_ + ": " + httplib::to_string(result.error()));
  const int status = result->status;
  if (status == 429) throw RateLimited(scheme_host_port_);
  if (status >= 500) throw BackendUnreachable(scheme_host_port_ + " returned HTTP " + std::to_string(status));
  if (status < 200 || status >= 300)
    throw BackendError("HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
  json body;
  try {
    body = json::parse(result->body);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("invalid JSON response: ") + e.what());
  }
  return parse_response(body);
}

}  // namespace qap

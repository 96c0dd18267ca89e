#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"
#include "support/fixtures.hpp"

namespace qap {
namespace {

using nlohmann::json;
using testing::TempDir;

LmConfig replay_config() {
  LmConfig c;
  c.backend = BackendKind::kReplay;
  c.model = "mock";
  c.replay_dir = "unused";
  c.retry_backoff_ms = 0;
  return c;
}

// Local completion server; each test installs its own handler.
class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

LmConfig http_config(const std::string& endpoint) {
  LmConfig c;
  c.endpoint = endpoint;
  c.model = "local-model";
  c.timeout_s = 5;
  c.max_retries = 1;
  c.retry_backoff_ms = 1;
  return c;
}

TEST(MaxTokens, Law) {
  EXPECT_EQ(compute_max_tokens(0), 512);
  EXPECT_EQ(compute_max_tokens(2), 576);
  EXPECT_EQ(compute_max_tokens(5), 672);
  for (int k = 0; k <= 10; ++k) EXPECT_EQ(compute_max_tokens(k), 512 + 32 * k);
  EXPECT_THROW(compute_max_tokens(-1), InvalidArgument);
}

TEST(CacheKey, StableHex) {
  const CompletionRequest r{"m", "p", 512, true, {}};
  const auto key = cache_key(r);
  EXPECT_EQ(key.size(), 64u);
  EXPECT_EQ(key.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(key, cache_key(r));
}

TEST(CacheKey, SensitiveToEveryField) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    CompletionRequest base{"model-" + std::to_string(rng() % 5), "prompt " + std::to_string(rng()),
                           static_cast<int>(rng() % 1000) + 1, (rng() & 1) != 0, {}};
    if (rng() & 1) base.stop_sequences.push_back("stop" + std::to_string(rng() % 3));
    const auto key = cache_key(base);
    auto m = base;
    m.model += "x";
    EXPECT_NE(cache_key(m), key);
    auto p = base;
    p.prompt += " ";
    EXPECT_NE(cache_key(p), key);
    auto t = base;
    t.max_tokens += 1;
    EXPECT_NE(cache_key(t), key);
    auto g = base;
    g.greedy = !g.greedy;
    EXPECT_NE(cache_key(g), key);
    auto s = base;
    s.stop_sequences.push_back("\n");
    EXPECT_NE(cache_key(s), key);
  }
}

TEST(TruncateAtStop, EarliestStopWins) {
  std::string text = "abc STOP def END";
  EXPECT_TRUE(truncate_at_stop(text, {"END", "STOP"}));
  EXPECT_EQ(text, "abc ");
  std::string untouched = "abc";
  EXPECT_FALSE(truncate_at_stop(untouched, {"x"}));
  EXPECT_FALSE(truncate_at_stop(untouched, {""}));
}

TEST(Replay, PrimedPromptReturnsRecording) {
  auto replay = std::make_shared<ReplayBackend>();
  replay->prime({"mock", "p", 512, true, {}}, "hello");
  const LmClient client(replay_config(), replay);
  const auto gen = client.generate("p");
  EXPECT_EQ(gen.completion, "hello");
  EXPECT_FALSE(gen.from_cache);
  EXPECT_TRUE(client.generate("p").from_cache);
}

TEST(Replay, UnknownPromptThrowsReplayMiss) {
  auto replay = std::make_shared<ReplayBackend>();
  replay->prime({"mock", "p", 512, true, {}}, "hello");
  const LmClient client(replay_config(), replay);
  EXPECT_THROW(client.generate("q"), ReplayMiss);
  // A different decode budget is a different key.
  EXPECT_THROW(client.generate("p", DecodeParams{513, true, {}}), ReplayMiss);
}

TEST(Replay, LoadsRecordedDirectory) {
  TempDir dir("replay");
  auto inner = std::make_shared<FunctionBackend>(
      [](const CompletionRequest& r) { return BackendResponse{"echo " + r.prompt, FinishReason::kStop}; });
  {
    const LmClient recorder(replay_config(), std::make_shared<RecordingBackend>(inner, dir.path()));
    recorder.generate("one");
    recorder.generate("two");
  }
  auto replay = ReplayBackend::from_directory(dir.path());
  EXPECT_EQ(replay->size(), 2u);
  const LmClient client(replay_config(), replay);
  EXPECT_EQ(client.generate("two").completion, "echo two");
}

TEST(CacheStats, CounterArithmetic) {
  auto backend = std::make_shared<FunctionBackend>(
      [](const CompletionRequest& r) { return BackendResponse{r.prompt, FinishReason::kStop}; });
  {
    const LmClient client(replay_config(), backend);
    EXPECT_EQ(client.cache_stats(), (CacheStats{0, 0, 0}));
  }
  {
    const LmClient client(replay_config(), backend);
    client.generate("a");
    client.generate("a");
    EXPECT_EQ(client.cache_stats(), (CacheStats{1, 1, 1}));
  }
  {
    const LmClient client(replay_config(), backend);
    client.generate("a");
    client.generate("b");
    EXPECT_EQ(client.cache_stats(), (CacheStats{0, 2, 2}));
  }
}

TEST(Cache, DiskLayoutAndReuse) {
  TempDir dir("cache");
  std::atomic<int> calls{0};
  auto backend = std::make_shared<FunctionBackend>([&](const CompletionRequest& r) {
    ++calls;
    return BackendResponse{"out:" + r.prompt, FinishReason::kStop};
  });
  const CompletionRequest req{"mock", "persist me", 512, true, {}};
  {
    const LmClient client(replay_config(), backend, std::make_shared<ResponseCache>(dir.path()));
    client.generate("persist me");
  }
  const auto digest = cache_key(req);
  const auto file = dir.path() / digest.substr(0, 2) / (digest + ".json");
  ASSERT_TRUE(std::filesystem::exists(file));
  EXPECT_EQ(entry_path(dir.path(), digest), file);
  const auto entry = read_entry(file);
  EXPECT_EQ(entry.request, req);
  EXPECT_EQ(entry.completion, "out:persist me");
  const auto j = json::parse(testing::read_file(file));
  for (const char* field : {"model", "prompt", "max_tokens", "greedy", "stop", "completion", "finish_reason", "timestamp"})
    EXPECT_TRUE(j.contains(field)) << field;

  const LmClient reopened(replay_config(), backend, std::make_shared<ResponseCache>(dir.path()));
  EXPECT_EQ(reopened.cache_stats().entries, 1u);
  const auto gen = reopened.generate("persist me");
  EXPECT_TRUE(gen.from_cache);
  EXPECT_EQ(gen.completion, "out:persist me");
  EXPECT_EQ(calls.load(), 1);
}

TEST(Cache, ConcurrentWritersPublishWholeEntries) {
  TempDir dir("cache-concurrent");
  auto cache = std::make_shared<ResponseCache>(dir.path());
  auto backend = std::make_shared<FunctionBackend>(
      [](const CompletionRequest& r) { return BackendResponse{std::string(4096, 'x') + r.prompt, FinishReason::kStop}; });
  LmConfig cfg = replay_config();
  cfg.max_in_flight = 8;
  const LmClient client(cfg, backend, cache);
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&client, t] {
      for (int i = 0; i < 20; ++i) client.generate("p" + std::to_string((i + t) % 25));
    });
  }
  threads.clear();
  EXPECT_EQ(cache->stats().entries, 25u);
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(e.path().extension(), ".json") << e.path();
    EXPECT_NO_THROW(read_entry(e.path()));
  }
}

TEST(InFlight, NeverExceedsLimit) {
  std::atomic<int> current{0}, peak{0};
  auto backend = std::make_shared<FunctionBackend>([&](const CompletionRequest& r) {
    const int now = ++current;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --current;
    return BackendResponse{r.prompt, FinishReason::kStop};
  });
  LmConfig cfg = replay_config();
  cfg.max_in_flight = 3;
  const LmClient client(cfg, backend);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 10; ++t) {
      threads.emplace_back([&client, t] {
        for (int i = 0; i < 10; ++i) client.generate("t" + std::to_string(t) + "-" + std::to_string(i));
      });
    }
  }
  EXPECT_LE(peak.load(), 3);
  EXPECT_GE(peak.load(), 1);
}

TEST(Retries, TransientFailuresAreRetried) {
  std::atomic<int> calls{0};
  auto backend = std::make_shared<FunctionBackend>([&](const CompletionRequest&) -> BackendResponse {
    if (++calls < 3) throw RateLimited("slow down");
    return {"ok", FinishReason::kStop};
  });
  LmConfig cfg = replay_config();
  cfg.max_retries = 2;
  cfg.retry_backoff_ms = 1;
  EXPECT_EQ(LmClient(cfg, backend).generate("p").completion, "ok");
  EXPECT_EQ(calls.load(), 3);

  calls = 0;
  cfg.max_retries = 1;
  EXPECT_THROW(LmClient(cfg, backend).generate("p"), RateLimited);
  EXPECT_EQ(calls.load(), 2);
}

TEST(Retries, ReplayMissIsNotRetried) {
  std::atomic<int> calls{0};
  auto backend = std::make_shared<FunctionBackend>([&](const CompletionRequest&) -> BackendResponse {
    ++calls;
    throw ReplayMiss("abc");
  });
  EXPECT_THROW(LmClient(replay_config(), backend).generate("p"), ReplayMiss);
  EXPECT_EQ(calls.load(), 1);
}

TEST(Generate, StopSequenceTruncates) {
  auto backend = std::make_shared<FunctionBackend>(
      [](const CompletionRequest&) { return BackendResponse{"keep\n\nHEADER drop", FinishReason::kLength}; });
  const auto gen = LmClient(replay_config(), backend).generate("p", DecodeParams{512, true, {"HEADER"}});
  EXPECT_EQ(gen.completion, "keep\n\n");
  EXPECT_EQ(gen.finish, FinishReason::kStop);
}

TEST(Generate, EmptyPromptRejected) {
  auto backend = std::make_shared<FunctionBackend>([](const CompletionRequest&) { return BackendResponse{}; });
  EXPECT_THROW(LmClient(replay_config(), backend).generate(""), InvalidArgument);
}

TEST(Http, SecondCallServedFromCache) {
  std::atomic<int> hits{0};
  json last_body;
  std::mutex mu;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    {
      std::lock_guard lock(mu);
      last_body = json::parse(req.body);
    }
    res.set_content(R"({"choices":[{"text":" hi there","finish_reason":"stop"}]})", "application/json");
  });
  auto cfg = http_config(server.endpoint());
  const auto client = LmClient::from_config(cfg);
  const auto first = client.generate("Say hi", DecodeParams{576, true, {"\n\n"}});
  const auto second = client.generate("Say hi", DecodeParams{576, true, {"\n\n"}});
  EXPECT_EQ(first.completion, " hi there");
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.completion, first.completion);
  EXPECT_EQ(hits.load(), 1);
  std::lock_guard lock(mu);
  EXPECT_EQ(last_body["model"], "local-model");
  EXPECT_EQ(last_body["prompt"], "Say hi");
  EXPECT_EQ(last_body["max_tokens"], 576);
  EXPECT_EQ(last_body["temperature"], 0);
  EXPECT_EQ(last_body["stop"], json::array({"\n\n"}));
}

TEST(Http, RateLimitedAfterRetries) {
  std::atomic<int> hits{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 429;
  });
  const auto client = LmClient::from_config(http_config(server.endpoint()));
  EXPECT_THROW(client.generate("p"), RateLimited);
  EXPECT_EQ(hits.load(), 2);
}

TEST(Http, ClientErrorIsBackendError) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  EXPECT_THROW(LmClient::from_config(http_config(server.endpoint())).generate("p"), BackendError);
}

TEST(Http, UnreachableEndpoint) {
  // Bind then release a port so nothing listens on it.
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = http_config("http://127.0.0.1:" + std::to_string(port) + "/v1/completions");
  cfg.max_retries = 0;
  EXPECT_THROW(LmClient::from_config(cfg).generate("p"), BackendUnreachable);
}

TEST(Http, ParsesCommonResponseShapes) {
  EXPECT_EQ(HttpBackend::parse_response(json::parse(R"({"choices":[{"message":{"content":"a"}}]})")).text, "a");
  EXPECT_EQ(HttpBackend::parse_response(json::parse(R"({"content":"b","stopped_limit":true})")).finish,
            FinishReason::kLength);
  EXPECT_EQ(HttpBackend::parse_response(json::parse(R"({"response":"c"})")).text, "c");
  EXPECT_THROW(HttpBackend::parse_response(json::parse(R"({"nothing":1})")), BackendError);
}

TEST(Http, NonGreedyOmitsTemperature) {
  const auto body = HttpBackend::request_body({"m", "p", 10, false, {}});
  EXPECT_FALSE(body.contains("temperature"));
  EXPECT_FALSE(body.contains("stop"));
}

TEST(LmConfigJson, RoundTrip) {
  LmConfig c = http_config("http://x/v1");
  c.stop_sequences = {"a"};
  c.max_in_flight = 7;
  json j = c;
  const auto back = j.get<LmConfig>();
  EXPECT_EQ(json(back), j);
  EXPECT_THROW(json({{"backend", "grpc"}}).get<LmConfig>(), InvalidArgument);
}

TEST(LmConfigValidate, RejectsBadFields) {
  LmConfig c = http_config("http://x/v1");
  EXPECT_NO_THROW(validate(c));
  c.max_in_flight = 0;
  EXPECT_THROW(validate(c), InvalidArgument);
  c = http_config("");
  EXPECT_THROW(validate(c), InvalidArgument);
}

}  // namespace
}  // namespace qap

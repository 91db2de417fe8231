#include <gtest/gtest.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <mutex>

#include "selfj/gateway.hpp"
#include "selfj/http_transport.hpp"
#include "selfj/mock_backend.hpp"
#include "selfj/parallel.hpp"

using namespace selfj;
namespace fs = std::filesystem;

namespace {

// Replays a fixed list of responses; repeats the last one when exhausted.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}

  HttpResponse post(const EndpointConfig&, const std::string& path, const std::string& body) override {
    std::lock_guard lock(mu_);
    paths.push_back(path);
    bodies.push_back(body);
    if (script_.size() > 1) {
      auto r = script_.front();
      script_.pop_front();
      return r;
    }
    return script_.front();
  }

  std::vector<std::string> paths, bodies;

 private:
  std::mutex mu_;
  std::deque<HttpResponse> script_;
};

std::string chat_body(const std::string& text, bool with_logprobs = false) {
  json choice{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}};
  if (with_logprobs) choice["logprobs"] = {{"content", {{{"token", "a"}, {"logprob", -0.5}}}}};
  return json{{"choices", {choice}}}.dump();
}

EndpointConfig endpoint() {
  EndpointConfig c;
  c.base_url = "http://example.invalid";
  c.model_name = "m";
  c.max_retries = 3;
  c.retry_base_delay = std::chrono::milliseconds(100);
  c.retry_max_delay = std::chrono::milliseconds(250);
  return c;
}

fs::path temp_cache(const std::string& name) {
  auto p = fs::temp_directory_path() / ("selfj_gw_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<std::chrono::milliseconds> slept;
Gateway::Sleeper recorder() {
  slept.clear();
  return [](std::chrono::milliseconds d) { slept.push_back(d); };
}

}  // namespace

TEST(Gateway, CachedRequestMakesNoNetworkCall) {
  const auto dir = temp_cache("hit");
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, chat_body("hello")}});
  {
    Gateway g(t, dir);
    EXPECT_EQ(g.chat_complete(endpoint(), {{"user", "hi"}}, false).text, "hello");
    EXPECT_EQ(g.network_calls(), 1u);
  }
  Gateway g2(t, dir);
  EXPECT_EQ(g2.chat_complete(endpoint(), {{"user", "hi"}}, false).text, "hello");
  EXPECT_EQ(g2.network_calls(), 0u);
  EXPECT_EQ(g2.cache_hits(), 1u);
  EXPECT_EQ(t->paths.size(), 1u);
  // A different request misses.
  g2.chat_complete(endpoint(), {{"user", "other"}}, false);
  EXPECT_EQ(g2.network_calls(), 1u);
  fs::remove_all(dir);
}

TEST(Gateway, CacheFileHoldsVerbatimBodyUnderDigest) {
  const auto dir = temp_cache("verbatim");
  const auto body = chat_body("exact  bytes");
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, body}});
  Gateway g(t, dir);
  const auto cfg = endpoint();
  g.chat_complete(cfg, {{"user", "q"}}, false);
  const auto req = Gateway::chat_request_body(cfg, {{"user", "q"}}, false, std::nullopt);
  const auto digest = cache_digest(cfg.model_name, req);
  EXPECT_EQ(digest, sha256_hex("m\n" + req));
  ASSERT_TRUE(fs::exists(dir / (digest + ".json")));
  EXPECT_EQ(*g.cache()->get(digest), body);
  fs::remove_all(dir);
}

TEST(Gateway, DigestDependsOnEveryField) {
  auto cfg = endpoint();
  const std::vector<ChatMessage> msgs{{"user", "q"}};
  const auto base = cache_digest(cfg.model_name, Gateway::chat_request_body(cfg, msgs, false, std::nullopt));
  EXPECT_EQ(base, cache_digest(cfg.model_name, Gateway::chat_request_body(cfg, msgs, false, std::nullopt)));
  EXPECT_NE(base, cache_digest(cfg.model_name, Gateway::chat_request_body(cfg, msgs, true, std::nullopt)));
  EXPECT_NE(base, cache_digest("other", Gateway::chat_request_body(cfg, msgs, false, std::nullopt)));
  auto warm = cfg;
  warm.temperature = 0.7;
  const auto s0 = Gateway::chat_request_body(warm, msgs, false, 0);
  const auto s1 = Gateway::chat_request_body(warm, msgs, false, 1);
  EXPECT_NE(s0, s1);
  // Greedy decoding ignores the sample index.
  EXPECT_EQ(Gateway::chat_request_body(cfg, msgs, false, 0), Gateway::chat_request_body(cfg, msgs, false, 1));
}

TEST(Gateway, EmptyMessageListIsAnError) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, chat_body("x")}});
  Gateway g(t, std::nullopt);
  EXPECT_THROW(g.chat_complete(endpoint(), {}, false), Error);
  EXPECT_THROW(g.chat_complete(endpoint(), {{"robot", "x"}}, false), Error);
  EXPECT_EQ(t->paths.size(), 0u);
}

TEST(Gateway, Repeated429RetriesThenNamesStatus) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{429, "slow down"}});
  Gateway g(t, std::nullopt, recorder());
  try {
    g.chat_complete(endpoint(), {{"user", "q"}}, false);
    FAIL() << "expected failure";
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.status(), 429);
    EXPECT_NE(std::string(e.what()).find("429"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4 attempt"), std::string::npos) << e.what();
  }
  EXPECT_EQ(t->paths.size(), 4u);
  ASSERT_EQ(slept.size(), 3u);
  EXPECT_EQ(slept[0].count(), 100);
  EXPECT_EQ(slept[1].count(), 200);
  EXPECT_EQ(slept[2].count(), 250);
}

TEST(Gateway, RetryRecoversAfterTransientFailure) {
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{503, ""}, {429, ""}, {200, chat_body("ok")}});
  Gateway g(t, std::nullopt, recorder());
  EXPECT_EQ(g.chat_complete(endpoint(), {{"user", "q"}}, false).text, "ok");
  EXPECT_EQ(g.network_calls(), 3u);
}

TEST(Gateway, ClientErrorIsNotRetried) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{400, "bad"}});
  Gateway g(t, std::nullopt, recorder());
  EXPECT_THROW(g.chat_complete(endpoint(), {{"user", "q"}}, false), GatewayError);
  EXPECT_EQ(t->paths.size(), 1u);
  EXPECT_TRUE(slept.empty());
}

TEST(Gateway, BackoffIsMonotoneAndCapped) {
  auto cfg = endpoint();
  cfg.retry_base_delay = std::chrono::milliseconds(7);
  cfg.retry_max_delay = std::chrono::milliseconds(1000);
  long long prev = 0;
  for (int i = 0; i < 40; ++i) {
    const auto d = retry_delay(cfg, i).count();
    EXPECT_GE(d, prev);
    EXPECT_LE(d, 1000);
    prev = d;
  }
  EXPECT_EQ(retry_delay(cfg, 0).count(), 7);
  EXPECT_EQ(retry_delay(cfg, 3).count(), 56);
}

TEST(Gateway, MissingLogprobsAreReportedNotFabricated) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, chat_body("x")}});
  Gateway g(t, std::nullopt);
  EXPECT_THROW(g.chat_complete(endpoint(), {{"user", "q"}}, true), GatewayError);
  auto t2 = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, chat_body("x", true)}});
  Gateway g2(t2, std::nullopt);
  const auto r = g2.chat_complete(endpoint(), {{"user", "q"}}, true);
  ASSERT_TRUE(r.logprobs);
  EXPECT_EQ(r.logprobs->size(), 1u);
}

TEST(Gateway, RequestBodyIsOpenAiCompatible) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, chat_body("x")}});
  Gateway g(t, std::nullopt);
  auto cfg = endpoint();
  cfg.temperature = 0.5;
  g.chat_complete(cfg, {{"system", "s"}, {"user", "u"}}, false, 3);
  ASSERT_EQ(t->paths.size(), 1u);
  EXPECT_EQ(t->paths[0], "/chat/completions");
  const auto j = json::parse(t->bodies[0]);
  EXPECT_EQ(j["model"], "m");
  EXPECT_EQ(j["messages"].size(), 2u);
  EXPECT_EQ(j["messages"][1]["content"], "u");
  EXPECT_EQ(j["seed"], 3);
  EXPECT_DOUBLE_EQ(j["temperature"].get<double>(), 0.5);
}

TEST(Gateway, EmbeddingsThroughMockAreDeterministicAndCached) {
  const auto dir = temp_cache("embed");
  auto t = std::make_shared<mock::MockTransport>();
  Gateway g(t, dir);
  EndpointConfig e;
  e.base_url = "mock://x";
  e.model_name = "mock-embed";
  const auto a = g.embed(e, "some text");
  const auto b = g.embed(e, "some text");
  const auto c = g.embed(e, "different words entirely");
  EXPECT_EQ(a, b);
  EXPECT_EQ(g.network_calls(), 2u);
  EXPECT_EQ(a.dim(), c.dim());
  EXPECT_EQ(a.dim(), static_cast<std::size_t>(mock::kEmbeddingDim));
  EXPECT_THROW(g.embed(e, ""), Error);
  fs::remove_all(dir);
}

TEST(Gateway, MockFailMarkerYields503) {
  auto t = std::make_shared<mock::MockTransport>();
  Gateway g(t, std::nullopt, recorder());
  EndpointConfig e;
  e.base_url = "mock://x";
  e.model_name = "mock-mid";
  e.max_retries = 1;
  try {
    g.chat_complete(e, {{"user", "please " + std::string(mock::kFailMarker)}}, false);
    FAIL();
  } catch (const GatewayError& err) {
    EXPECT_EQ(err.status(), 503);
  }
}

TEST(Gateway, ExtractRating) {
  EXPECT_EQ(extract_rating(R"({"rating": 5})"), 5);
  EXPECT_EQ(extract_rating(R"(Good answer overall. {"rating": 8})"), 8);
  EXPECT_EQ(extract_rating(R"(prose {"rating": 3} more prose {"rating": 10})"), 10);
  EXPECT_EQ(extract_rating("{'rating': 7}"), 7);
  EXPECT_EQ(extract_rating("Rating: 6"), 6);
  EXPECT_THROW(extract_rating("The rating is eleven."), Error);
  EXPECT_THROW(extract_rating(R"({"rating": 11})"), Error);
  EXPECT_THROW(extract_rating(R"({"rating": 0})"), Error);
  EXPECT_THROW(extract_rating(""), Error);
}

TEST(Gateway, ParseBaseUrl) {
  const auto p = parse_base_url("https://api.example.com/v1/");
  EXPECT_EQ(p.origin, "https://api.example.com");
  EXPECT_EQ(p.prefix, "/v1");
  EXPECT_EQ(parse_base_url("http://localhost:8000").prefix, "");
  EXPECT_THROW(parse_base_url("localhost"), Error);
}

TEST(Gateway, BoundedMapKeepsOrderAndCapturesErrors) {
  std::atomic<int> live{0}, peak{0};
  const auto out = bounded_map<int>(50, 3, [&](std::size_t i) {
    const int now = ++live;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    --live;
    if (i == 7) throw Error("boom");
    return static_cast<int>(i) * 2;
  });
  ASSERT_EQ(out.size(), 50u);
  EXPECT_LE(peak.load(), 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i == 7) {
      EXPECT_FALSE(out[i].ok());
      EXPECT_EQ(out[i].error, "boom");
    } else {
      EXPECT_EQ(*out[i].value, static_cast<int>(i) * 2);
    }
  }
}

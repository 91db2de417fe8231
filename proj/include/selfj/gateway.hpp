#pragma once

// Client for OpenAI-compatible chat-completion and embedding endpoints with a
// content-addressed response cache, bounded retries and rating extraction.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "selfj/core.hpp"
#include "selfj/digest.hpp"
#include "selfj/error.hpp"

namespace selfj {

struct EndpointConfig {
  std::string base_url;
  std::string api_key;  // never serialized
  std::string model_name;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  double temperature = 0.0;
  int max_tokens = 1024;
  int request_parallelism = 4;
  std::chrono::milliseconds retry_base_delay{500};
  std::chrono::milliseconds retry_max_delay{30000};
  // Sampled (temperature > 0) completions are cached per sample_index unless
  // this is switched off.
  bool cache_sampled = true;

  void validate() const {
    require(!base_url.empty(), "endpoint base_url must be non-empty");
    require(!model_name.empty(), "endpoint model_name must be non-empty");
    require(std::isfinite(temperature) && temperature >= 0.0, "endpoint temperature must be finite and >= 0");
    require(max_retries >= 0, "endpoint max_retries must be >= 0");
    require(max_tokens > 0, "endpoint max_tokens must be > 0");
    require(request_parallelism >= 1, "endpoint request_parallelism must be >= 1");
    require(timeout.count() > 0, "endpoint timeout must be > 0");
  }
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatResult {
  std::string text;
  std::optional<std::vector<double>> logprobs;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// One POST against an endpoint. Implementations throw GatewayError with
// status 0 when no response was received.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const EndpointConfig& endpoint, const std::string& path,
                            const std::string& body) = 0;
};

// Verbatim response bodies stored as <root>/<digest>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path path_for(const std::string& digest) const { return root_ / (digest + ".json"); }

  std::optional<std::string> get(const std::string& digest) const {
    std::ifstream in(path_for(digest), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void put(const std::string& digest, const std::string& body) {
    std::lock_guard lock(stripe(digest));
    auto final_path = path_for(digest);
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << body;
    }
    std::filesystem::rename(tmp, final_path);
  }

 private:
  std::mutex& stripe(const std::string& digest) {
    return stripes_[std::hash<std::string>{}(digest) % stripes_.size()];
  }

  std::filesystem::path root_;
  std::array<std::mutex, 32> stripes_;
};

inline std::string cache_digest(const std::string& model_name, const std::string& request_body) {
  return sha256_hex(model_name + "\n" + request_body);
}

// Backoff before retry `attempt` (0-based): base * 2^attempt, capped.
inline std::chrono::milliseconds retry_delay(const EndpointConfig& cfg, int attempt) {
  auto d = cfg.retry_base_delay.count();
  for (int i = 0; i < attempt && d < cfg.retry_max_delay.count(); ++i) d *= 2;
  return std::chrono::milliseconds(std::min<long long>(d, cfg.retry_max_delay.count()));
}

inline bool is_retryable_status(int status) { return status == 0 || status == 429 || status >= 500; }

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(std::shared_ptr<Transport> transport, std::optional<std::filesystem::path> cache_root,
          Sleeper sleeper = default_sleeper())
      : transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    require(transport_ != nullptr, "gateway needs a transport");
    if (cache_root) cache_ = std::make_unique<ResponseCache>(*cache_root);
  }

  static Sleeper default_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  static std::string chat_request_body(const EndpointConfig& cfg, const std::vector<ChatMessage>& messages,
                                       bool want_logprobs, std::optional<int> sample_index) {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body{{"model", cfg.model_name},
              {"messages", msgs},
              {"temperature", cfg.temperature},
              {"max_tokens", cfg.max_tokens},
              {"logprobs", want_logprobs}};
    // Distinct samples of a stochastic request need distinct cache entries.
    if (cfg.temperature > 0.0 && sample_index) body["seed"] = *sample_index;
    return body.dump();
  }

  ChatResult chat_complete(const EndpointConfig& cfg, const std::vector<ChatMessage>& messages,
                           bool want_logprobs, std::optional<int> sample_index = std::nullopt) {
    cfg.validate();
    require(!messages.empty(), "chat_complete: message list is empty");
    for (const auto& m : messages)
      require(m.role == "system" || m.role == "user" || m.role == "assistant",
              "chat_complete: invalid role '" + m.role + "'");
    const auto body = chat_request_body(cfg, messages, want_logprobs, sample_index);
    const bool cacheable = !(cfg.temperature > 0.0 && !cfg.cache_sampled);
    return fetch<ChatResult>(cfg, "/chat/completions", body, cacheable,
                             [&](const std::string& resp) { return parse_chat(resp, want_logprobs); });
  }

  EmbeddingVector embed(const EndpointConfig& cfg, const std::string& text) {
    cfg.validate();
    require(!text.empty(), "embed: text is empty");
    const auto body = json{{"model", cfg.model_name}, {"input", text}}.dump();
    return fetch<EmbeddingVector>(cfg, "/embeddings", body, true, parse_embedding);
  }

  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
  const ResponseCache* cache() const noexcept { return cache_.get(); }

  static ChatResult parse_chat(const std::string& resp, bool want_logprobs) {
    ChatResult out;
    try {
      const auto j = json::parse(resp);
      const auto& choice = j.at("choices").at(0);
      out.text = choice.at("message").at("content").get<std::string>();
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        std::vector<double> lps;
        for (const auto& tok : choice["logprobs"]["content"]) lps.push_back(tok.at("logprob").get<double>());
        out.logprobs = std::move(lps);
      }
    } catch (const json::exception& e) {
      throw GatewayError(std::string("malformed chat completion body: ") + e.what());
    }
    if (want_logprobs && !out.logprobs) throw GatewayError("backend returned no logprobs");
    return out;
  }

  static EmbeddingVector parse_embedding(const std::string& resp) {
    std::vector<double> values;
    try {
      values = json::parse(resp).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw GatewayError(std::string("malformed embedding body: ") + e.what());
    }
    try {
      return EmbeddingVector(std::move(values));
    } catch (const Error& e) {
      throw GatewayError(std::string("invalid embedding: ") + e.what());
    }
  }

 private:
  template <class T, class Parse>
  T fetch(const EndpointConfig& cfg, const std::string& path, const std::string& body, bool cacheable,
          Parse&& parse) {
    const auto digest = cache_digest(cfg.model_name, body);
    if (cache_ && cacheable) {
      if (auto hit = cache_->get(digest)) {
        ++cache_hits_;
        return parse(*hit);
      }
    }
    const auto resp = post_with_retries(cfg, path, body);
    T value = parse(resp);
    if (cache_ && cacheable) cache_->put(digest, resp);
    return value;
  }

  std::string post_with_retries(const EndpointConfig& cfg, const std::string& path, const std::string& body) {
    std::string last_error;
    int last_status = 0;
    int attempts = 0;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      if (attempt > 0) sleeper_(retry_delay(cfg, attempt - 1));
      ++network_calls_;
      ++attempts;
      try {
        auto resp = transport_->post(cfg, path, body);
        if (resp.status >= 200 && resp.status < 300) return std::move(resp.body);
        last_status = resp.status;
        last_error = "HTTP status " + std::to_string(resp.status);
        if (!is_retryable_status(resp.status)) break;
      } catch (const GatewayError& e) {
        last_status = e.status();
        last_error = e.what();
        if (!is_retryable_status(e.status())) break;
      }
    }
    throw GatewayError(cfg.model_name + " " + path + " failed after " + std::to_string(attempts) +
                           " attempt(s): " + last_error,
                       last_status);
  }

  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::unique_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> network_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

namespace detail {

inline std::optional<int> last_capture_int(const std::string& text, const std::regex& re) {
  std::optional<long long> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto digits = (*it)[1].str();
    // Saturate absurd digit runs instead of overflowing.
    found = digits.size() > 6 ? 1000000 : std::stoll(digits);
  }
  if (!found) return std::nullopt;
  return static_cast<int>(*found);
}

}  // namespace detail

// Parses the last `{"rating": N}` (quote and whitespace tolerant); falls back
// to the last `rating ... N`. Throws Error when nothing parses or N is
// outside [1,10].
inline int extract_rating(const std::string& text) {
  static const std::regex braced(
      R"(\{\s*(?:"|'|“|”)?rating(?:"|'|“|”)?\s*:\s*(?:"|')?\s*(-?\d+)\s*(?:"|')?\s*\})",
      std::regex::ECMAScript | std::regex::icase);
  static const std::regex loose(R"(rating[^0-9\n-]{0,30}?(-?\d+))", std::regex::ECMAScript | std::regex::icase);
  auto n = detail::last_capture_int(text, braced);
  if (!n) n = detail::last_capture_int(text, loose);
  if (!n) throw Error("no extractable rating");
  if (*n < 1 || *n > 10) throw Error("extracted rating " + std::to_string(*n) + " outside [1,10]");
  return *n;
}

}  // namespace selfj

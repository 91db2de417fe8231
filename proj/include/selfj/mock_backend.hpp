#pragma once

// A deterministic stand-in for an OpenAI-compatible server, selected with a
// base_url of the form mock://<name>. Every reply is a pure function of the
// request body, so pipelines over it are reproducible and need no network.
//
// The synthetic world: each instruction has a hidden reference answer made of
// pseudo-words. A model answers by copying each reference word with
// probability q (its latent quality for that sample) and inventing a word
// otherwise. Self-evaluation compares word overlap with the reference and
// adds rater noise; embeddings are signed hashed bags of words.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "selfj/gateway.hpp"
#include "selfj/prompts.hpp"

namespace selfj::mock {

inline constexpr std::size_t kEmbeddingDim = 64;
inline constexpr std::size_t kAnswerWords = 24;
inline constexpr std::size_t kVocabulary = 4096;
// Instructions containing this marker make the generator return HTTP 503.
inline constexpr std::string_view kFailMarker = "#fail#";

class Hasher {
 public:
  Hasher& add(std::string_view s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 0x100000001b3ULL;
    }
    h_ ^= 0xff;  // field separator
    h_ *= 0x100000001b3ULL;
    return *this;
  }
  Hasher& add(std::int64_t v) { return add(std::to_string(v)); }

  std::uint64_t value() const {
    std::uint64_t x = h_ + 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  // Uniform in [0, 1).
  double unit() const { return static_cast<double>(value() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string pseudo_word(std::uint64_t index) {
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                                            "p", "r", "s", "t", "v", "z", "ch", "sh"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
  std::string w;
  auto i = index % kVocabulary;
  for (int syl = 0; syl < 3; ++syl) {
    w += kOnsets[i % 16];
    i /= 16;
    w += kVowels[(index >> (3 * syl)) % 8];
  }
  return w;
}

inline std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

inline std::vector<std::string> reference_words(const std::string& instruction) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < kAnswerWords; ++i)
    words.push_back(pseudo_word(Hasher().add("ref").add(instruction).add(static_cast<std::int64_t>(i)).value()));
  return words;
}

// Hidden gold answer for an instruction.
inline std::string reference_answer(const std::string& instruction) {
  return join_words(reference_words(instruction));
}

inline double model_skill(const std::string& model) {
  if (model == "mock-strong") return 0.85;
  if (model == "mock-mid") return 0.65;
  if (model == "mock-weak") return 0.45;
  return 0.35 + 0.5 * Hasher().add("skill").add(model).unit();
}

// Latent quality in (0, 1) of `model`'s sample `seed` (-1 when greedy).
inline double response_quality(const std::string& model, const std::string& instruction, std::int64_t seed) {
  const double u = Hasher().add("quality").add(model).add(instruction).add(seed).unit();
  return std::clamp(model_skill(model) + 0.7 * (u - 0.5), 0.02, 0.98);
}

// Grader score on the 1-10 scale for the sample the mock would generate.
inline double gold_score(const std::string& model, const std::string& instruction, std::int64_t seed) {
  return 1.0 + 9.0 * response_quality(model, instruction, seed);
}

struct Generation {
  std::string text;
  std::vector<double> logprobs;
};

inline Generation generate(const std::string& model, const std::string& instruction, std::int64_t seed) {
  const double q = response_quality(model, instruction, seed);
  const auto ref = reference_words(instruction);
  Generation g;
  std::vector<std::string> words;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    Hasher h;
    h.add("word").add(model).add(instruction).add(seed).add(static_cast<std::int64_t>(i));
    const double u = Hasher(h).add("pick").unit();
    const double jitter = Hasher(h).add("lp").unit();
    if (u < q) {
      words.push_back(ref[i]);
      g.logprobs.push_back(-0.05 - 0.4 * (1.0 - q) * jitter);
    } else {
      words.push_back(pseudo_word(Hasher(h).add("alt").value()));
      g.logprobs.push_back(-0.3 - 1.5 * jitter);
    }
  }
  g.text = join_words(words);
  return g;
}

// Fraction of reference words that appear in the answer.
inline double overlap(const std::string& reference, const std::string& answer) {
  const auto ref = words_of(reference);
  if (ref.empty()) return 0.0;
  const auto ans = words_of(answer);
  const std::unordered_set<std::string> have(ans.begin(), ans.end());
  std::size_t hit = 0;
  for (const auto& w : ref) hit += have.count(w);
  return static_cast<double>(hit) / static_cast<double>(ref.size());
}

inline std::vector<double> embedding(const std::string& model, const std::string& text) {
  std::vector<double> v(kEmbeddingDim, 1e-3);
  for (const auto& w : words_of(text)) {
    const auto h = Hasher().add("emb").add(w).value();
    v[h % kEmbeddingDim] += (h >> 32) & 1 ? 1.0 : -1.0;
    v[(h >> 8) % kEmbeddingDim] += (h >> 33) & 1 ? 0.5 : -0.5;
  }
  // Text-specific perturbation so that similarity is an imperfect signal.
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u = Hasher().add("noise").add(model).add(text).add(static_cast<std::int64_t>(i)).unit();
    v[i] += 0.6 * norm / std::sqrt(static_cast<double>(kEmbeddingDim)) * (2.0 * u - 1.0);
  }
  return v;
}

inline std::string self_evaluation(const std::string& model, const std::string& prompt) {
  const auto reference =
      prompts::section(prompt, "[The Start of Reference Answer]\n", "\n[The End of Reference Answer]");
  const auto answer =
      prompts::section(prompt, "[The Start of Assistant's Answer]\n", "\n[The End of Assistant's Answer]");
  const double ov = overlap(reference, answer);
  const bool reminded = prompt.find("Remember: the last line") != std::string::npos;
  // Some first attempts ignore the requested format.
  if (!reminded && Hasher().add("format").add(model).add(prompt).unit() < 0.08)
    return "The assistant's answer partially matches the reference answer.";
  const double noise = 4.0 * (Hasher().add("rater").add(model).add(prompt).unit() - 0.5);
  const int rating = static_cast<int>(std::clamp(std::lround(1.0 + 9.0 * ov + noise), 1L, 10L));
  return "Compared with the reference answer, the assistant covers about " +
         std::to_string(static_cast<int>(std::lround(100.0 * ov))) + "% of the expected content.\n" +
         "{\"rating\": " + std::to_string(rating) + "}";
}

inline std::string feedback(const std::string& prompt) {
  const auto question = prompts::section(prompt, "[Question]\n", "\n\n[Answer]");
  const auto answer = prompts::section(prompt, "[Answer]\n", "\n\n[Judge Score]");
  const double ov = overlap(reference_answer(question), answer);
  return "The answer covers about " + std::to_string(static_cast<int>(std::lround(100.0 * ov))) +
         "% of the expected points. Replace the unsupported terms and restore the missing details.";
}

// Restores every other incorrect word of the first answer.
inline std::string refine(const std::string& prompt) {
  const auto question = prompts::section(prompt, "[Question]\n", "\n\n[Answer]");
  const auto answer = prompts::section(prompt, "[Answer]\n", "\n\n[Feedback]");
  const auto ref = reference_words(question);
  auto words = words_of(answer);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < words.size() && i < ref.size(); ++i) {
    if (words[i] != ref[i] && wrong++ % 2 == 0) words[i] = ref[i];
  }
  return join_words(words);
}

inline json chat_body(const std::string& model, const std::string& content,
                      const std::vector<double>* logprobs) {
  json choice{{"index", 0},
              {"message", {{"role", "assistant"}, {"content", content}}},
              {"finish_reason", "stop"}};
  if (logprobs) {
    json toks = json::array();
    const auto words = words_of(content);
    for (std::size_t i = 0; i < logprobs->size(); ++i)
      toks.push_back({{"token", i < words.size() ? words[i] : std::string()}, {"logprob", (*logprobs)[i]}});
    choice["logprobs"] = {{"content", toks}};
  } else {
    choice["logprobs"] = nullptr;
  }
  return json{{"object", "chat.completion"}, {"model", model}, {"choices", json::array({choice})}};
}

class MockTransport : public Transport {
 public:
  HttpResponse post(const EndpointConfig&, const std::string& path, const std::string& body) override {
    json req;
    try {
      req = json::parse(body);
    } catch (const json::exception&) {
      return {400, R"({"error":"invalid json"})"};
    }
    const auto model = req.value("model", std::string("mock"));
    if (path == "/embeddings") {
      const auto text = req.value("input", std::string());
      json resp{{"object", "list"},
                {"model", model},
                {"data", json::array({{{"object", "embedding"}, {"index", 0}, {"embedding", embedding(model, text)}}})}};
      return {200, resp.dump()};
    }
    if (path != "/chat/completions") return {404, R"({"error":"unknown path"})"};

    const auto& messages = req.at("messages");
    std::string prompt;
    for (const auto& m : messages)
      if (m.value("role", "") == "user") prompt = m.value("content", "");
    const bool want_logprobs = req.value("logprobs", false);
    const std::int64_t seed = req.contains("seed") ? req["seed"].get<std::int64_t>() : -1;

    if (prompt.find("[The Start of Reference Answer]") != std::string::npos)
      return {200, chat_body(model, self_evaluation(model, prompt), nullptr).dump()};
    if (prompt.rfind("[Feedback Request]", 0) == 0)
      return {200, chat_body(model, feedback(prompt), nullptr).dump()};
    if (prompt.rfind("[Refinement Request]", 0) == 0)
      return {200, chat_body(model, refine(prompt), nullptr).dump()};

    if (prompt.find(kFailMarker) != std::string::npos) return {503, R"({"error":"overloaded"})"};
    const auto g = generate(model, prompt, seed);
    return {200, chat_body(model, g.text, want_logprobs ? &g.logprobs : nullptr).dump()};
  }
};

}  // namespace selfj::mock

#pragma once

// Response sampling, reference-based self-evaluation and response/reference
// cosine similarity: the raw signals that calibration turns into labels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfj/core.hpp"
#include "selfj/gateway.hpp"
#include "selfj/parallel.hpp"
#include "selfj/prompts.hpp"

namespace selfj {

struct SelfEvalPrompt {
  std::string rendered;
};

// A record that could not be produced or scored, and why.
struct Failure {
  std::string id;
  std::string stage;
  std::string reason;

  bool operator==(const Failure&) const = default;
};

inline void save_failures(const std::vector<Failure>& failures, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& f : failures)
    out << json{{"id", f.id}, {"stage", f.stage}, {"reason", f.reason}}.dump() << '\n';
}

inline SelfEvalPrompt build_self_eval_prompt(const std::string& question, const std::string& answer,
                                             const std::string& reference) {
  require(!question.empty(), "self-eval prompt: question is empty");
  require(!answer.empty(), "self-eval prompt: answer is empty");
  require(!reference.empty(), "self-eval prompt: reference is empty");
  return {prompts::render(prompts::kSelfEval,
                          {{"question", question}, {"reference", reference}, {"answer", answer}})};
}

struct SelfEvalResult {
  std::optional<int> rating;  // empty means unscored
  std::string reason;
  int attempts = 0;
};

// Asks the evaluator for a 1-10 rating; re-prompts once with a format
// reminder when the first reply has no parseable rating. Gateway errors
// propagate.
inline SelfEvalResult self_evaluate(Gateway& gateway, const EndpointConfig& evaluator,
                                    const std::string& question, const std::string& answer,
                                    const std::string& reference) {
  const auto prompt = build_self_eval_prompt(question, answer, reference);
  SelfEvalResult result;
  std::string text = prompt.rendered;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ++result.attempts;
    const auto reply = gateway.chat_complete(evaluator, {{"user", text}}, false);
    try {
      result.rating = extract_rating(reply.text);
      result.reason.clear();
      return result;
    } catch (const Error& e) {
      result.reason = e.what();
    }
    text = prompt.rendered + prompts::kFormatReminder;
  }
  return result;
}

// Clamped to [-1, 1]; throws on dimension mismatch or a zero-norm vector.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  require(a.dim() == b.dim(), "cosine: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                                  std::to_string(b.dim()));
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0.0 && nb > 0.0, "cosine: zero-norm embedding");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline double cosine_score(Gateway& gateway, const EndpointConfig& embedder, const std::string& answer,
                           const std::string& reference) {
  require(!answer.empty() && !reference.empty(), "cosine_score: empty text");
  return cosine_similarity(gateway.embed(embedder, answer), gateway.embed(embedder, reference));
}

struct SampleResult {
  Dataset<ResponseRecord> responses;
  std::vector<Failure> failures;
};

inline SampleResult sample_responses(Gateway& gateway, const Dataset<InstructionRecord>& instructions,
                                     const EndpointConfig& model, int samples_per_instruction,
                                     bool want_logprobs) {
  require(samples_per_instruction >= 1, "samples_per_instruction must be >= 1");
  for (const auto& ins : instructions) require(!ins.instruction.empty(), "instruction " + ins.id + " is empty");
  const auto per = static_cast<std::size_t>(samples_per_instruction);
  const auto outcomes = bounded_map<ResponseRecord>(
      instructions.size() * per, model.request_parallelism, [&](std::size_t i) {
        const auto& ins = instructions.records[i / per];
        const int sample = static_cast<int>(i % per);
        auto reply = gateway.chat_complete(model, {{"user", ins.instruction}}, want_logprobs, sample);
        ResponseRecord r;
        r.instruction_id = ins.id;
        r.model_id = model.model_name;
        r.sample_index = sample;
        r.response = std::move(reply.text);
        r.token_logprobs = std::move(reply.logprobs);
        RecordTraits<ResponseRecord>::validate(r);
        return r;
      });
  SampleResult result;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok()) {
      result.responses.records.push_back(*outcomes[i].value);
    } else {
      const auto& ins = instructions.records[i / per];
      result.failures.push_back(
          {response_key(ins.id, model.model_name, static_cast<int>(i % per)), "generate", outcomes[i].error});
    }
  }
  return result;
}

struct RateResult {
  Dataset<RatingRecord> ratings;
  std::vector<Failure> failures;
};

// Self-evaluation and cosine similarity for every response. Unscored
// signals are left absent in the record and listed in failures.
inline RateResult rate_responses(Gateway& gateway, const Dataset<InstructionRecord>& instructions,
                                 const Dataset<ResponseRecord>& responses, const EndpointConfig& evaluator,
                                 const EndpointConfig& embedder) {
  std::unordered_map<std::string, const InstructionRecord*> by_id;
  for (const auto& ins : instructions) by_id.emplace(ins.id, &ins);

  struct Rated {
    RatingRecord record;
    std::vector<Failure> failures;
  };
  const auto outcomes = bounded_map<Rated>(
      responses.size(), std::max(evaluator.request_parallelism, 1), [&](std::size_t i) {
        const auto& resp = responses.records[i];
        Rated out;
        out.record.instruction_id = resp.instruction_id;
        out.record.model_id = resp.model_id;
        out.record.sample_index = resp.sample_index;
        const auto it = by_id.find(resp.instruction_id);
        if (it == by_id.end()) throw Error("unknown instruction_id '" + resp.instruction_id + "'");
        const auto& ins = *it->second;
        if (!ins.reference || ins.reference->empty()) throw Error("instruction has no reference answer");
        if (resp.response.empty()) throw Error("response is empty");
        try {
          auto se = self_evaluate(gateway, evaluator, ins.instruction, resp.response, *ins.reference);
          out.record.self_eval = se.rating;
          if (!se.rating) out.failures.push_back({resp.key(), "self_eval", se.reason});
        } catch (const std::exception& e) {
          out.failures.push_back({resp.key(), "self_eval", e.what()});
        }
        try {
          out.record.cosine_raw = cosine_score(gateway, embedder, resp.response, *ins.reference);
        } catch (const std::exception& e) {
          out.failures.push_back({resp.key(), "cosine", e.what()});
        }
        return out;
      });
  RateResult result;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok()) {
      const auto& resp = responses.records[i];
      result.failures.push_back({resp.key(), "rate", outcomes[i].error});
      RatingRecord bare;
      bare.instruction_id = resp.instruction_id;
      bare.model_id = resp.model_id;
      bare.sample_index = resp.sample_index;
      result.ratings.records.push_back(bare);
      continue;
    }
    result.ratings.records.push_back(outcomes[i].value->record);
    for (const auto& f : outcomes[i].value->failures) result.failures.push_back(f);
  }
  return result;
}

}  // namespace selfj

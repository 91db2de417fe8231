#pragma once

// Training-free confidence measures. Both are oriented so that higher means
// more confident; negate to recover the uncertainty values.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfj/core.hpp"
#include "selfj/gateway.hpp"
#include "selfj/parallel.hpp"
#include "selfj/scoregen.hpp"

namespace selfj {

struct VROConfig {
  int extra_samples = 3;
  double temperature = 1.0;

  void validate() const {
    require(extra_samples >= 1, "vro extra_samples must be >= 1");
    require(std::isfinite(temperature) && temperature >= 0.0, "vro temperature must be finite and >= 0");
  }
};

// Negated mean per-token negative log-likelihood, i.e. the mean logprob.
inline double ppl_confidence(std::span<const double> token_logprobs) {
  require(!token_logprobs.empty(), "ppl_confidence: no token logprobs");
  double nll = 0.0;
  for (double lp : token_logprobs) {
    require(std::isfinite(lp) && lp <= 0.0, "ppl_confidence: logprob must be finite and <= 0");
    nll -= lp;
  }
  return -(nll / static_cast<double>(token_logprobs.size()));
}

// Mean cosine similarity between the original response and each extra
// sample. Terms are summed in sorted order so the result does not depend on
// the order of the extras.
inline double vro_confidence(const EmbeddingVector& original, std::span<const EmbeddingVector> extras) {
  require(!extras.empty(), "vro_confidence: need at least one extra sample");
  std::vector<double> sims;
  sims.reserve(extras.size());
  for (const auto& e : extras) sims.push_back(cosine_similarity(original, e));
  std::sort(sims.begin(), sims.end());
  double sum = 0.0;
  for (double s : sims) sum += s;
  return sum / static_cast<double>(extras.size());
}

// Seed used for the k-th extra sample of a response; disjoint from the
// sample indices used by generation.
inline int vro_sample_seed(int sample_index, int k, int extra_samples) {
  return 1'000'000 + sample_index * extra_samples + k;
}

struct BaselineScores {
  Dataset<ScoreRecord> scores;
  std::vector<Failure> failures;
};

inline BaselineScores ppl_scores(const Dataset<ResponseRecord>& responses) {
  BaselineScores out;
  for (const auto& r : responses) {
    if (!r.token_logprobs || r.token_logprobs->empty()) {
      out.failures.push_back({r.key(), "ppl", "response has no token logprobs"});
      continue;
    }
    out.scores.records.push_back({r.instruction_id, r.model_id, r.sample_index, ppl_confidence(*r.token_logprobs),
                                  std::nullopt});
  }
  return out;
}

// Draws K extra samples per response through the gateway and scores the
// original by its mean similarity to them.
inline BaselineScores vro_scores(Gateway& gateway, const Dataset<InstructionRecord>& instructions,
                                 const Dataset<ResponseRecord>& responses, EndpointConfig generator,
                                 const EndpointConfig& embedder, const VROConfig& cfg) {
  cfg.validate();
  generator.temperature = cfg.temperature;
  std::unordered_map<std::string, const InstructionRecord*> by_id;
  for (const auto& ins : instructions) by_id.emplace(ins.id, &ins);
  const auto outcomes = bounded_map<double>(
      responses.size(), generator.request_parallelism, [&](std::size_t i) {
        const auto& r = responses.records[i];
        const auto it = by_id.find(r.instruction_id);
        if (it == by_id.end()) throw Error("unknown instruction_id '" + r.instruction_id + "'");
        // Extras come from the model that wrote the response.
        auto sampler = generator;
        sampler.model_name = r.model_id;
        std::vector<EmbeddingVector> extras;
        for (int k = 0; k < cfg.extra_samples; ++k) {
          const auto reply = gateway.chat_complete(sampler, {{"user", it->second->instruction}}, false,
                                                   vro_sample_seed(r.sample_index, k, cfg.extra_samples));
          require(!reply.text.empty(), "extra sample is empty");
          extras.push_back(gateway.embed(embedder, reply.text));
        }
        return vro_confidence(gateway.embed(embedder, r.response), extras);
      });
  BaselineScores out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& r = responses.records[i];
    if (outcomes[i].ok())
      out.scores.records.push_back({r.instruction_id, r.model_id, r.sample_index, *outcomes[i].value, std::nullopt});
    else
      out.failures.push_back({r.key(), "vro", outcomes[i].error});
  }
  return out;
}

}  // namespace selfj

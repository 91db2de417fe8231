#pragma once

// Judge-driven policies: accept-or-abstain thresholds, risk/coverage sweeps,
// selective refinement and best-of-N selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfj/gateway.hpp"
#include "selfj/judge.hpp"
#include "selfj/parallel.hpp"
#include "selfj/prompts.hpp"

namespace selfj {

struct SelectivePolicy {
  double threshold = 0.0;

  void validate() const { require(std::isfinite(threshold), "policy threshold must be finite"); }
};

struct ThresholdSplit {
  std::vector<std::string> accepted;
  std::vector<std::string> abstained;
};

// Accepts exactly the ids with score >= threshold; input order is kept.
inline ThresholdSplit apply_threshold(std::span<const std::pair<std::string, double>> scored,
                                      const SelectivePolicy& policy) {
  policy.validate();
  ThresholdSplit out;
  for (const auto& [id, score] : scored) {
    require(std::isfinite(score), "apply_threshold: non-finite score for " + id);
    (score >= policy.threshold ? out.accepted : out.abstained).push_back(id);
  }
  return out;
}

struct CurvePoint {
  double abstention_rate = 0.0;
  std::size_t kept_count = 0;
  std::optional<double> mean_quality;  // empty once everything is abstained

  bool operator==(const CurvePoint&) const = default;
};

// One point per achievable abstention level: keep everything, then drop
// each distinct score level in ascending order until nothing is kept.
inline std::vector<CurvePoint> risk_coverage_curve(std::span<const std::pair<double, double>> scored) {
  require(!scored.empty(), "risk_coverage_curve: empty input");
  std::vector<std::pair<double, double>> sorted(scored.begin(), scored.end());
  for (const auto& [s, q] : sorted) require(std::isfinite(s) && std::isfinite(q), "risk_coverage_curve: non-finite value");
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const double n = static_cast<double>(sorted.size());
  // Suffix sums of quality over the score-sorted records.
  std::vector<double> suffix(sorted.size() + 1, 0.0);
  for (std::size_t i = sorted.size(); i-- > 0;) suffix[i] = suffix[i + 1] + sorted[i].second;

  std::vector<CurvePoint> curve;
  auto push = [&](std::size_t first_kept) {
    CurvePoint p;
    p.kept_count = sorted.size() - first_kept;
    p.abstention_rate = static_cast<double>(first_kept) / n;
    if (p.kept_count > 0) p.mean_quality = suffix[first_kept] / static_cast<double>(p.kept_count);
    curve.push_back(p);
  };
  push(0);
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
    push(j);
    i = j;
  }
  return curve;
}

struct RefinePrompts {
  std::string version = prompts::kTemplateVersion;
  std::string feedback = prompts::kFeedback;
  std::string refine = prompts::kRefine;
};

struct RefinementRecord {
  std::string instruction_id;
  std::string first_response;
  double judge_score = 0.0;
  std::optional<std::string> feedback;
  std::optional<std::string> second_response;
};

struct RefineOutcome {
  RefinementRecord record;
  bool refined = false;
  std::optional<std::string> failure;
};

inline std::string format_score(double z) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", z);
  return buf;
}

// Keeps y1 when the judge score reaches the threshold. Otherwise asks the
// model for feedback on (x, y1, z) and then for a revision of y1 given that
// feedback. Any gateway failure keeps y1 and records the reason.
inline RefineOutcome selective_refine(Gateway& gateway, const std::string& instruction_id,
                                      const std::string& instruction, const std::string& first_response,
                                      double judge_score, const SelectivePolicy& policy, const EndpointConfig& model,
                                      const RefinePrompts& templates = {}) {
  policy.validate();
  require(std::isfinite(judge_score), "selective_refine: judge score must be finite");
  RefineOutcome out;
  out.record.instruction_id = instruction_id;
  out.record.first_response = first_response;
  out.record.judge_score = judge_score;
  if (judge_score >= policy.threshold) return out;

  std::string feedback;
  try {
    feedback = gateway
                   .chat_complete(model,
                                  {{"user", prompts::render(templates.feedback, {{"question", instruction},
                                                                                 {"answer", first_response},
                                                                                 {"score", format_score(judge_score)}})}},
                                  false)
                   .text;
  } catch (const std::exception& e) {
    out.failure = std::string("feedback stage: ") + e.what();
    return out;
  }
  std::string revised;
  try {
    revised = gateway
                  .chat_complete(model,
                                 {{"user", prompts::render(templates.refine, {{"question", instruction},
                                                                              {"answer", first_response},
                                                                              {"feedback", feedback}})}},
                                 false)
                  .text;
  } catch (const std::exception& e) {
    out.failure = std::string("refine stage: ") + e.what();
    return out;
  }
  if (revised.empty()) {
    out.failure = "refine stage: empty revision";
    return out;
  }
  out.record.feedback = std::move(feedback);
  out.record.second_response = std::move(revised);
  out.refined = true;
  return out;
}

// Index of the maximum; the lowest index wins ties.
inline std::size_t select_best(std::span<const double> scores) {
  require(!scores.empty(), "select_best: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

struct ScoredSample {
  int sample_index = 0;
  std::string response;
  double score = 0.0;
};

struct BestOfN {
  ScoredSample best;
  std::vector<ScoredSample> samples;  // successful samples, by sample_index
  std::vector<std::string> failures;
};

// Samples n responses (sample_index 0..n-1), scores each with the student
// head and returns the highest-scoring one.
inline BestOfN best_of_n(Gateway& gateway, const std::string& instruction, const EndpointConfig& model,
                         const EndpointConfig& embedder, const JudgeModel& judge, int n, bool use_argmax = false) {
  require(n >= 1, "best_of_n: n must be >= 1");
  require(!instruction.empty(), "best_of_n: empty instruction");
  const auto outcomes = bounded_map<std::string>(static_cast<std::size_t>(n), model.request_parallelism,
                                                 [&](std::size_t i) {
                                                   auto text = gateway
                                                                   .chat_complete(model, {{"user", instruction}}, false,
                                                                                  static_cast<int>(i))
                                                                   .text;
                                                   require(!text.empty(), "empty sample");
                                                   return text;
                                                 });
  BestOfN out;
  const auto x_emb = gateway.embed(embedder, instruction);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok()) {
      out.failures.push_back("sample " + std::to_string(i) + ": " + outcomes[i].error);
      continue;
    }
    const auto features = featurize(x_emb, gateway.embed(embedder, *outcomes[i].value));
    const auto p = predict_score(judge, features, JudgeMode::student);
    out.samples.push_back({static_cast<int>(i), *outcomes[i].value, use_argmax ? p.argmax : p.expected});
  }
  if (out.samples.empty()) throw Error("best_of_n: all " + std::to_string(n) + " samples failed");
  std::vector<double> scores;
  for (const auto& s : out.samples) scores.push_back(s.score);
  out.best = out.samples[select_best(scores)];
  return out;
}

}  // namespace selfj

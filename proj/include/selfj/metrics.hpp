#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "selfj/core.hpp"
#include "selfj/error.hpp"

namespace selfj {

// Product-moment correlation. Requires equal lengths >= 3 and non-constant
// inputs.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "pearson: length mismatch");
  require(a.size() >= 3, "pearson: need at least 3 values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, "pearson: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

enum class KendallVariant { tau_a, tau_b };

namespace detail {

// Sorts v in place and returns the number of strict inversions.
inline std::uint64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buf(v.size());
  std::uint64_t swaps = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, v.size());
      const std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += mid - i;
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return swaps;
}

template <class It, class Eq>
std::uint64_t tied_pairs(It first, It last, Eq eq) {
  std::uint64_t total = 0;
  while (first != last) {
    auto run = first;
    std::uint64_t len = 0;
    while (run != last && eq(*run, *first)) {
      ++run;
      ++len;
    }
    total += len * (len - 1) / 2;
    first = run;
  }
  return total;
}

}  // namespace detail

// Kendall rank correlation in O(n log n) (Knight's algorithm). tau_a uses
// the full C(n,2) denominator; tau_b corrects for ties in either input.
inline double kendall_tau(std::span<const double> a, std::span<const double> b,
                          KendallVariant variant = KendallVariant::tau_a) {
  require(a.size() == b.size(), "kendall_tau: length mismatch");
  require(a.size() >= 2, "kendall_tau: need at least 2 values");
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t n1 =
      detail::tied_pairs(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] == a[j]; });
  const std::uint64_t n3 = detail::tied_pairs(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] == a[j] && b[i] == b[j];
  });
  std::vector<double> bs(n);
  for (std::size_t k = 0; k < n; ++k) bs[k] = b[order[k]];
  const std::uint64_t swaps = detail::count_inversions(bs);
  const std::uint64_t n2 =
      detail::tied_pairs(bs.begin(), bs.end(), [](double x, double y) { return x == y; });
  const double s = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                   static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  if (variant == KendallVariant::tau_a) return s / static_cast<double>(n0);
  const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  require(denom > 0.0, "kendall_tau: tau-b undefined for constant input");
  return s / denom;
}

struct SystemScore {
  std::string model_id;
  double mean_judge_score = 0.0;
  std::optional<double> mean_reference_grader_score;
};

struct SystemRanking {
  std::vector<SystemScore> ranked;  // descending judge mean
  std::optional<double> tau;
};

inline SystemRanking system_ranking(std::vector<SystemScore> judged, bool with_tau) {
  require(judged.size() >= 2, "system_ranking: need at least 2 systems");
  SystemRanking out;
  if (with_tau) {
    std::vector<double> judge, grader;
    for (const auto& s : judged) {
      require(s.mean_reference_grader_score.has_value(),
              "system_ranking: missing reference grader score for " + s.model_id);
      judge.push_back(s.mean_judge_score);
      grader.push_back(*s.mean_reference_grader_score);
    }
    out.tau = kendall_tau(judge, grader);
  }
  std::stable_sort(judged.begin(), judged.end(), [](const SystemScore& x, const SystemScore& y) {
    return x.mean_judge_score > y.mean_judge_score;
  });
  out.ranked = std::move(judged);
  return out;
}

// Per-model means restricted to instructions scored for every model, so all
// systems are compared on the identical subset. Gold means are attached
// when every kept record has a gold score.
inline std::vector<SystemScore> system_scores(const Dataset<ScoreRecord>& scores,
                                              const std::map<std::string, double>* gold_by_key) {
  std::map<std::string, std::set<std::string>> instructions_by_model;
  for (const auto& s : scores) instructions_by_model[s.model_id].insert(s.instruction_id);
  require(!instructions_by_model.empty(), "system_scores: no scores");
  std::set<std::string> common = instructions_by_model.begin()->second;
  for (const auto& [model, ids] : instructions_by_model) {
    std::set<std::string> keep;
    std::set_intersection(common.begin(), common.end(), ids.begin(), ids.end(),
                          std::inserter(keep, keep.begin()));
    common = std::move(keep);
  }
  require(!common.empty(), "system_scores: no instruction is scored for every model");

  struct Acc {
    double judge = 0.0, gold = 0.0;
    std::size_t n = 0, n_gold = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& s : scores) {
    if (!common.count(s.instruction_id)) continue;
    auto& a = acc[s.model_id];
    a.judge += s.score;
    ++a.n;
    if (gold_by_key) {
      if (auto it = gold_by_key->find(s.key()); it != gold_by_key->end()) {
        a.gold += it->second;
        ++a.n_gold;
      }
    }
  }
  std::vector<SystemScore> out;
  for (const auto& [model, a] : acc) {
    SystemScore s{model, a.judge / static_cast<double>(a.n), std::nullopt};
    if (a.n_gold == a.n) s.mean_reference_grader_score = a.gold / static_cast<double>(a.n);
    out.push_back(s);
  }
  return out;
}

}  // namespace selfj

#pragma once

// Turns raw self-evaluation ratings and cosine similarities into balanced
// 0-9 training labels: dev-set search for the mixing weight, combination,
// rank discretization and uniformization.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfj/core.hpp"
#include "selfj/metrics.hpp"
#include "selfj/scoregen.hpp"

namespace selfj {

inline constexpr int kNumClasses = 10;

struct DevRecord {
  double self_eval = 0.0;
  double cosine = 0.0;
  double gold_score = 0.0;
};

struct AlphaSearchResult {
  double alpha_star = 0.0;
  // (alpha, pearson); pearson is NaN where the mixed column is constant.
  std::vector<std::pair<double, double>> per_alpha_correlations;
};

enum class BinningMode { equal_frequency, equal_width };

inline std::string to_string(BinningMode m) {
  return m == BinningMode::equal_frequency ? "equal_frequency" : "equal_width";
}

inline BinningMode parse_binning_mode(const std::string& s) {
  if (s == "equal_frequency") return BinningMode::equal_frequency;
  if (s == "equal_width") return BinningMode::equal_width;
  throw Error("unknown binning mode '" + s + "'");
}

// Mean 0, sample standard deviation 1.
inline std::vector<double> zscore(std::span<const double> values) {
  require(values.size() >= 2, "zscore: need at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  require(sd > 0.0 && std::isfinite(sd), "zscore: zero variance");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - mean) / sd);
  return out;
}

inline double combine(double z1, double z2, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "combine: alpha outside [0,1]");
  return alpha * z1 + (1.0 - alpha) * z2;
}

inline std::vector<double> alpha_grid(double step) {
  require(step > 0.0 && step <= 1.0, "alpha step must lie in (0,1]");
  const double k = std::round(1.0 / step);
  require(std::abs(k * step - 1.0) < 1e-9, "alpha step must divide 1");
  std::vector<double> grid;
  const int steps = static_cast<int>(k);
  for (int i = 0; i <= steps; ++i) grid.push_back(static_cast<double>(i) / steps);
  return grid;
}

// Both columns are Z-scored, then each grid alpha is scored by the Pearson
// correlation of the mix with gold. Ties go to the larger alpha.
inline constexpr double kAlphaTieTolerance = 1e-12;

inline AlphaSearchResult search_alpha(std::span<const DevRecord> dev, double step = 0.1) {
  require(dev.size() >= 3, "search_alpha: need at least 3 dev records");
  std::vector<double> se, cs, gold;
  for (const auto& d : dev) {
    require(std::isfinite(d.self_eval) && std::isfinite(d.cosine) && std::isfinite(d.gold_score),
            "search_alpha: non-finite dev record");
    se.push_back(d.self_eval);
    cs.push_back(d.cosine);
    gold.push_back(d.gold_score);
  }
  const auto z1 = zscore(se);
  const auto z2 = zscore(cs);
  AlphaSearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<double> mixed(dev.size());
  for (double alpha : alpha_grid(step)) {
    for (std::size_t i = 0; i < dev.size(); ++i) mixed[i] = combine(z1[i], z2[i], alpha);
    double r = std::numeric_limits<double>::quiet_NaN();
    try {
      r = pearson(mixed, gold);
    } catch (const Error&) {
      // constant mix or constant gold; gold is checked below
    }
    result.per_alpha_correlations.emplace_back(alpha, r);
    // Correlations within rounding noise count as ties; the larger alpha wins.
    if (!std::isnan(r) && r >= best - kAlphaTieTolerance) {
      best = std::max(best, r);
      result.alpha_star = alpha;
      found = true;
    }
  }
  require(found, "search_alpha: correlation undefined for every alpha (constant gold?)");
  return result;
}

enum class TieRule {
  shared,    // equal values share the class of their average rank
  by_index,  // equal values are ordered by original position
};

// Equal-frequency binning: rank r of N maps to floor(r * 10 / N) + 1.
inline std::vector<int> rank_classes(std::span<const double> values, TieRule ties) {
  require(!values.empty(), "rank binning: empty input");
  for (double v : values) require(std::isfinite(v), "rank binning: non-finite value");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<int> classes(n);
  const double nd = static_cast<double>(n);
  auto class_of = [&](double rank) {
    return std::clamp(static_cast<int>(std::floor(rank * kNumClasses / nd)) + 1, 1, kNumClasses);
  };
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    if (ties == TieRule::shared)
      while (end < n && values[order[end]] == values[order[k]]) ++end;
    const double rank = 0.5 * static_cast<double>(k + end - 1);
    for (std::size_t m = k; m < end; ++m) classes[order[m]] = class_of(rank);
    k = end;
  }
  return classes;
}

inline std::vector<int> discretize_cosine(std::span<const double> raw,
                                          BinningMode mode = BinningMode::equal_frequency) {
  require(!raw.empty(), "discretize_cosine: empty input");
  for (double v : raw)
    require(std::isfinite(v) && v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9, "discretize_cosine: value outside [-1,1]");
  if (mode == BinningMode::equal_frequency) return rank_classes(raw, TieRule::shared);
  std::vector<int> classes;
  classes.reserve(raw.size());
  for (double v : raw) {
    const double unit = (std::clamp(v, -1.0, 1.0) + 1.0) / 2.0;
    classes.push_back(std::clamp(static_cast<int>(std::floor(unit * kNumClasses)) + 1, 1, kNumClasses));
  }
  return classes;
}

// Rank-based remap onto a uniform 1..10 distribution; class counts differ by
// at most one.
inline std::vector<int> uniformize(std::span<const double> combined) {
  return rank_classes(combined, TieRule::by_index);
}

inline std::vector<int> shift_labels(std::span<const int> classes) {
  std::vector<int> out;
  out.reserve(classes.size());
  for (int c : classes) {
    require(c >= 1 && c <= kNumClasses, "shift_labels: class " + std::to_string(c) + " outside [1,10]");
    out.push_back(c - 1);
  }
  return out;
}

template <class Int>
std::array<std::size_t, kNumClasses> class_histogram(std::span<const Int> classes, int offset) {
  std::array<std::size_t, kNumClasses> h{};
  for (auto c : classes) {
    const int idx = static_cast<int>(c) - offset;
    if (idx >= 0 && idx < kNumClasses) ++h[static_cast<std::size_t>(idx)];
  }
  return h;
}

// Fills cosine_class over the batch of records that carry both signals.
inline void assign_cosine_classes(Dataset<RatingRecord>& ratings, BinningMode mode) {
  std::vector<std::size_t> idx;
  std::vector<double> raw;
  for (std::size_t i = 0; i < ratings.records.size(); ++i) {
    const auto& r = ratings.records[i];
    if (r.self_eval && r.cosine_raw) {
      idx.push_back(i);
      raw.push_back(*r.cosine_raw);
    }
  }
  if (raw.empty()) return;
  const auto classes = discretize_cosine(raw, mode);
  for (std::size_t k = 0; k < idx.size(); ++k) ratings.records[idx[k]].cosine_class = classes[k];
}

struct TrainingSet {
  Dataset<RatingRecord> records;
  std::vector<Failure> excluded;
  std::vector<int> classes_before;  // rounded combined scores, 1..10
};

inline TrainingSet build_training_set(const Dataset<RatingRecord>& ratings, double alpha_star) {
  require(!ratings.empty(), "build_training_set: empty input");
  require(alpha_star >= 0.0 && alpha_star <= 1.0, "build_training_set: alpha outside [0,1]");
  TrainingSet out;
  std::vector<double> combined;
  for (const auto& r : ratings) {
    if (!r.self_eval || !r.cosine_class) {
      out.excluded.push_back(
          {r.key(), "calibrate", !r.self_eval ? "missing self_eval" : "missing cosine_class"});
      continue;
    }
    RatingRecord t = r;
    t.combined = combine(*r.self_eval, *r.cosine_class, alpha_star);
    combined.push_back(*t.combined);
    out.classes_before.push_back(std::clamp(static_cast<int>(std::lround(*t.combined)), 1, kNumClasses));
    out.records.records.push_back(std::move(t));
  }
  require(!combined.empty(), "build_training_set: no record has both self_eval and cosine_class");
  const auto labels = shift_labels(uniformize(combined));
  for (std::size_t i = 0; i < labels.size(); ++i) out.records.records[i].final_class = labels[i];
  return out;
}

}  // namespace selfj

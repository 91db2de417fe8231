#pragma once

// Judge scorer trained with self-distillation.
//
// Two one-hidden-layer heads share each training batch: a teacher that sees
// the reference answer and a student that does not. The loss per example is
//
//   NLL_teacher(label) + beta * NLL_student(label)
//     + gamma * KL(p_student || stopgrad(p_teacher))
//
// and inference returns the expected class under the chosen head's softmax.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfj/core.hpp"
#include "selfj/error.hpp"

namespace selfj {

inline constexpr int kJudgeClasses = 10;
inline constexpr const char* kFeatureLayout = "student=x|y'|x*y'; teacher=student|y|y'*y";

struct JudgeFeatures {
  std::vector<double> student;
  std::optional<std::vector<double>> teacher;
};

// student = x ⊕ y' ⊕ (x ⊙ y'); teacher = student ⊕ y ⊕ (y' ⊙ y).
inline JudgeFeatures featurize(const EmbeddingVector& x, const EmbeddingVector& yprime,
                               const std::optional<EmbeddingVector>& y = std::nullopt) {
  const std::size_t d = x.dim();
  require(d > 0, "featurize: empty embedding");
  require(yprime.dim() == d, "featurize: dimension mismatch between instruction and response");
  if (y) require(y->dim() == d, "featurize: dimension mismatch between response and reference");
  JudgeFeatures f;
  f.student.reserve(3 * d);
  f.student.insert(f.student.end(), x.values().begin(), x.values().end());
  f.student.insert(f.student.end(), yprime.values().begin(), yprime.values().end());
  for (std::size_t i = 0; i < d; ++i) f.student.push_back(x[i] * yprime[i]);
  if (y) {
    std::vector<double> t = f.student;
    t.reserve(5 * d);
    t.insert(t.end(), y->values().begin(), y->values().end());
    for (std::size_t i = 0; i < d; ++i) t.push_back(yprime[i] * (*y)[i]);
    f.teacher = std::move(t);
  }
  return f;
}

// Numerically stable log-softmax.
inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

// Expectation sum_c c * p(c) over classes 0..C.
inline double expected_score(std::span<const double> distribution) {
  double z = 0.0;
  for (std::size_t c = 0; c < distribution.size(); ++c) z += static_cast<double>(c) * distribution[c];
  // Rounding in a softmax can push the sum a few ulps past the class range.
  return distribution.empty() ? 0.0 : std::clamp(z, 0.0, static_cast<double>(distribution.size() - 1));
}

struct SdLoss {
  double loss = 0.0;
  double nll_teacher = 0.0;
  double nll_student = 0.0;
  double kl = 0.0;  // KL(student || teacher), before the gamma weight
  std::vector<double> grad_teacher;
  std::vector<double> grad_student;
};

// Self-distillation loss and its gradients with respect to both logit
// vectors. The KL term treats the teacher distribution as a constant, so
// grad_teacher only carries the teacher NLL (scaled by teacher_weight).
inline SdLoss sd_loss(std::span<const double> teacher_logits, std::span<const double> student_logits, int label,
                      double beta, double gamma, double teacher_weight = 1.0) {
  const std::size_t c = teacher_logits.size();
  require(c >= 2 && student_logits.size() == c, "sd_loss: logit vectors must share a size >= 2");
  require(label >= 0 && static_cast<std::size_t>(label) < c, "sd_loss: label out of range");
  for (std::size_t i = 0; i < c; ++i)
    require(std::isfinite(teacher_logits[i]) && std::isfinite(student_logits[i]), "sd_loss: non-finite logits");

  const auto lt = log_softmax(teacher_logits);
  const auto ls = log_softmax(student_logits);
  SdLoss out;
  out.nll_teacher = -lt[label];
  out.nll_student = -ls[label];
  std::vector<double> pt(c), ps(c);
  for (std::size_t i = 0; i < c; ++i) {
    pt[i] = std::exp(lt[i]);
    ps[i] = std::exp(ls[i]);
    out.kl += ps[i] * (ls[i] - lt[i]);
  }
  out.kl = std::max(out.kl, 0.0);
  out.loss = teacher_weight * out.nll_teacher + beta * out.nll_student + gamma * out.kl;

  out.grad_teacher.resize(c);
  out.grad_student.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double onehot = static_cast<std::size_t>(label) == i ? 1.0 : 0.0;
    out.grad_teacher[i] = teacher_weight * (pt[i] - onehot);
    // d KL / d s_i = p_i * (log p_i - log q_i - KL)
    out.grad_student[i] = beta * (ps[i] - onehot) + gamma * ps[i] * (ls[i] - lt[i] - out.kl);
  }
  return out;
}

// Per-feature affine standardization fitted on the training set.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_scale;

  static FeatureScaler fit(const std::vector<const std::vector<double>*>& rows) {
    require(!rows.empty(), "scaler: no rows");
    const std::size_t d = rows.front()->size();
    FeatureScaler s;
    s.mean.assign(d, 0.0);
    s.inv_scale.assign(d, 1.0);
    for (const auto* r : rows)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += (*r)[j];
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(d, 0.0);
    for (const auto* r : rows)
      for (std::size_t j = 0; j < d; ++j) var[j] += ((*r)[j] - s.mean[j]) * ((*r)[j] - s.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
      s.inv_scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) * inv_scale[j];
    return out;
  }
};

// tanh hidden layer followed by a linear map to class logits. Weights are
// row-major: w1 is hidden x input, w2 is classes x hidden.
struct MlpHead {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t classes = kJudgeClasses;
  std::vector<double> w1, b1, w2, b2;

  struct Trace {
    std::vector<double> x, h, logits;
  };

  static MlpHead init(std::size_t input, std::size_t hidden, std::size_t classes, std::mt19937_64& rng) {
    MlpHead m{input, hidden, classes, {}, {}, {}, {}};
    auto fill = [&](std::vector<double>& v, std::size_t n, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      v.resize(n);
      for (double& x : v) x = dist(rng);
    };
    fill(m.w1, hidden * input, input);
    fill(m.b1, hidden, input);
    fill(m.w2, classes * hidden, hidden);
    fill(m.b2, classes, hidden);
    return m;
  }

  Trace forward(std::vector<double> x) const {
    require(x.size() == input, "judge head: feature width " + std::to_string(x.size()) + " != " +
                                   std::to_string(input));
    Trace t;
    t.x = std::move(x);
    t.h.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      double a = b1[j];
      const double* row = &w1[j * input];
      for (std::size_t i = 0; i < input; ++i) a += row[i] * t.x[i];
      t.h[j] = std::tanh(a);
    }
    t.logits.resize(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      double a = b2[k];
      const double* row = &w2[k * hidden];
      for (std::size_t j = 0; j < hidden; ++j) a += row[j] * t.h[j];
      t.logits[k] = a;
    }
    return t;
  }

  // Accumulates scale * d(loss)/d(params) into grad (same shape as *this).
  void backward(const Trace& t, std::span<const double> grad_logits, double scale, MlpHead& grad) const {
    std::vector<double> dh(hidden, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
      const double g = scale * grad_logits[k];
      if (g == 0.0) continue;
      grad.b2[k] += g;
      double* grow = &grad.w2[k * hidden];
      const double* row = &w2[k * hidden];
      for (std::size_t j = 0; j < hidden; ++j) {
        grow[j] += g * t.h[j];
        dh[j] += g * row[j];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      const double da = dh[j] * (1.0 - t.h[j] * t.h[j]);
      if (da == 0.0) continue;
      grad.b1[j] += da;
      double* grow = &grad.w1[j * input];
      for (std::size_t i = 0; i < input; ++i) grow[i] += da * t.x[i];
    }
  }

  MlpHead zeros_like() const {
    MlpHead z{input, hidden, classes, {}, {}, {}, {}};
    z.w1.assign(w1.size(), 0.0);
    z.b1.assign(b1.size(), 0.0);
    z.w2.assign(w2.size(), 0.0);
    z.b2.assign(b2.size(), 0.0);
    return z;
  }

  void step(const MlpHead& grad, double lr) {
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] -= lr * grad.w1[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= lr * grad.b1[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= lr * grad.w2[i];
    for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= lr * grad.b2[i];
  }

  bool finite() const {
    for (const auto* v : {&w1, &b1, &w2, &b2})
      for (double x : *v)
        if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const MlpHead&) const = default;
};

struct JudgeTrainConfig {
  double beta = 2.0;
  double gamma = 0.3;
  // Weight of the teacher NLL term; 0 drops the teacher objective.
  double teacher_weight = 1.0;
  double learning_rate = 0.05;
  int epochs = 2;
  int batch_size = 128;
  int hidden_width = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(std::isfinite(beta) && beta >= 0.0, "judge beta must be >= 0");
    require(std::isfinite(gamma) && gamma >= 0.0, "judge gamma must be >= 0");
    require(std::isfinite(teacher_weight) && teacher_weight >= 0.0, "judge teacher_weight must be >= 0");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "judge learning_rate must be > 0");
    require(epochs >= 1, "judge epochs must be >= 1");
    require(batch_size >= 1, "judge batch_size must be >= 1");
    require(hidden_width >= 1, "judge hidden_width must be >= 1");
  }
};

struct JudgeModel {
  int class_count = kJudgeClasses;
  int hidden_width = 0;
  std::size_t student_dim = 0;
  std::size_t teacher_dim = 0;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double gamma = 0.0;
  FeatureScaler student_scaler;
  FeatureScaler teacher_scaler;
  MlpHead student;
  MlpHead teacher;
};

struct TrainingExample {
  JudgeFeatures features;
  int label = 0;  // 0..9
};

enum class JudgeMode { student, teacher };

inline std::string to_string(JudgeMode m) { return m == JudgeMode::student ? "student" : "teacher"; }

inline JudgeMode parse_judge_mode(const std::string& s) {
  if (s == "student") return JudgeMode::student;
  if (s == "teacher") return JudgeMode::teacher;
  throw Error("unknown judge mode '" + s + "'");
}

struct JudgePrediction {
  double expected = 0.0;
  std::vector<double> distribution;
  int argmax = 0;
};

inline std::vector<double> judge_logits(const JudgeModel& model, const JudgeFeatures& f, JudgeMode mode) {
  if (mode == JudgeMode::student) {
    require(f.student.size() == model.student_dim, "judge: student feature layout mismatch");
    return model.student.forward(model.student_scaler.apply(f.student)).logits;
  }
  require(f.teacher.has_value(), "judge: teacher mode requires reference features");
  require(f.teacher->size() == model.teacher_dim, "judge: teacher feature layout mismatch");
  return model.teacher.forward(model.teacher_scaler.apply(*f.teacher)).logits;
}

inline JudgePrediction predict_score(const JudgeModel& model, const JudgeFeatures& f, JudgeMode mode) {
  JudgePrediction p;
  p.distribution = softmax(judge_logits(model, f, mode));
  p.expected = std::clamp(expected_score(p.distribution), 0.0, static_cast<double>(model.class_count - 1));
  p.argmax = static_cast<int>(std::max_element(p.distribution.begin(), p.distribution.end()) - p.distribution.begin());
  return p;
}

namespace detail {

inline void check_training_set(std::span<const TrainingExample> data) {
  require(!data.empty(), "train_judge: empty training set");
  const auto sd = data.front().features.student.size();
  require(sd > 0, "train_judge: empty student features");
  require(data.front().features.teacher.has_value(), "train_judge: teacher features required");
  const auto td = data.front().features.teacher->size();
  for (const auto& ex : data) {
    require(ex.features.student.size() == sd, "train_judge: inconsistent student feature width");
    require(ex.features.teacher && ex.features.teacher->size() == td, "train_judge: inconsistent teacher features");
    require(ex.label >= 0 && ex.label < kJudgeClasses, "train_judge: label outside [0,9]");
  }
}

}  // namespace detail

// Scalers fitted on data, weights drawn from the seeded generator. This is
// the state train_judge starts from.
inline JudgeModel initialize_judge(std::span<const TrainingExample> data, const JudgeTrainConfig& cfg) {
  cfg.validate();
  detail::check_training_set(data);
  JudgeModel m;
  m.hidden_width = cfg.hidden_width;
  m.student_dim = data.front().features.student.size();
  m.teacher_dim = data.front().features.teacher->size();
  m.seed = cfg.seed;
  m.beta = cfg.beta;
  m.gamma = cfg.gamma;
  std::vector<const std::vector<double>*> srows, trows;
  for (const auto& ex : data) {
    srows.push_back(&ex.features.student);
    trows.push_back(&*ex.features.teacher);
  }
  m.student_scaler = FeatureScaler::fit(srows);
  m.teacher_scaler = FeatureScaler::fit(trows);
  std::mt19937_64 rng(cfg.seed);
  const auto h = static_cast<std::size_t>(cfg.hidden_width);
  m.teacher = MlpHead::init(m.teacher_dim, h, kJudgeClasses, rng);
  m.student = MlpHead::init(m.student_dim, h, kJudgeClasses, rng);
  return m;
}

// Mean sd_loss of the model over data.
inline double mean_sd_loss(const JudgeModel& m, std::span<const TrainingExample> data, const JudgeTrainConfig& cfg) {
  require(!data.empty(), "mean_sd_loss: empty data");
  double total = 0.0;
  for (const auto& ex : data) {
    const auto t = judge_logits(m, ex.features, JudgeMode::teacher);
    const auto s = judge_logits(m, ex.features, JudgeMode::student);
    total += sd_loss(t, s, ex.label, cfg.beta, cfg.gamma, cfg.teacher_weight).loss;
  }
  return total / static_cast<double>(data.size());
}

struct TrainReport {
  std::vector<double> epoch_mean_loss;  // mean batch loss seen during each epoch
};

// Mini-batch gradient descent on the mean sd_loss. Each batch runs one
// teacher pass and one student pass per example. Deterministic for a fixed
// seed. Throws if the loss becomes non-finite.
inline JudgeModel train_judge(std::span<const TrainingExample> data, const JudgeTrainConfig& cfg,
                              TrainReport* report = nullptr) {
  JudgeModel m = initialize_judge(data, cfg);
  std::vector<std::vector<double>> sx, tx;
  sx.reserve(data.size());
  tx.reserve(data.size());
  for (const auto& ex : data) {
    sx.push_back(m.student_scaler.apply(ex.features.student));
    tx.push_back(m.teacher_scaler.apply(*ex.features.teacher));
  }
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(start + bs, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      auto gs = m.student.zeros_like();
      auto gt = m.teacher.zeros_like();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        const auto tt = m.teacher.forward(tx[i]);
        const auto st = m.student.forward(sx[i]);
        const auto l = sd_loss(tt.logits, st.logits, data[i].label, cfg.beta, cfg.gamma, cfg.teacher_weight);
        batch_loss += l.loss;
        m.teacher.backward(tt, l.grad_teacher, scale, gt);
        m.student.backward(st, l.grad_student, scale, gs);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss))
        throw Error("train_judge: loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches));
      m.teacher.step(gt, cfg.learning_rate);
      m.student.step(gs, cfg.learning_rate);
      if (!m.teacher.finite() || !m.student.finite())
        throw Error("train_judge: parameters diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches));
      epoch_loss += batch_loss;
      ++batches;
    }
    if (report) report->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return m;
}

// Checkpoint: a version line, a JSON header line, then one line per
// parameter block "<name> <count> <hexfloat>...". Hex floats round-trip
// exactly, so predictions of a reloaded model are bit-identical.
inline constexpr const char* kCheckpointMagic = "selfj-judge-checkpoint 1";

namespace detail {

inline void write_block(std::ostream& out, const char* name, const std::vector<double>& v) {
  out << name << ' ' << v.size();
  char buf[64];
  for (double x : v) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::hex);
    if (ec != std::errc()) throw Error("checkpoint: cannot format value");
    out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
  }
  out << '\n';
}

inline std::vector<double> read_block(std::istream& in, const char* name, std::size_t expected) {
  std::string line;
  if (!std::getline(in, line)) throw Error(std::string("checkpoint: missing block ") + name);
  std::istringstream ss(line);
  std::string got;
  std::size_t count = 0;
  ss >> got >> count;
  require(got == name, "checkpoint: expected block " + std::string(name) + ", found " + got);
  require(count == expected, "checkpoint: block " + std::string(name) + " has wrong size");
  std::vector<double> v(count);
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    require(static_cast<bool>(ss >> tok), "checkpoint: truncated block " + std::string(name));
    const char* first = tok.data();
    bool neg = false;
    if (*first == '-') {
      neg = true;
      ++first;
    }
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v[i], std::chars_format::hex);
    require(ec == std::errc() && ptr == tok.data() + tok.size(), "checkpoint: bad value in " + std::string(name));
    if (neg) v[i] = -v[i];
  }
  return v;
}

}  // namespace detail

inline void save_judge(const JudgeModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  json header{{"feature_layout", kFeatureLayout},
              {"class_count", m.class_count},
              {"hidden_width", m.hidden_width},
              {"student_dim", m.student_dim},
              {"teacher_dim", m.teacher_dim},
              {"beta", m.beta},
              {"gamma", m.gamma},
              {"seed", m.seed},
              {"activation", "tanh"},
              {"param_order",
               {"student_scaler.mean", "student_scaler.inv_scale", "teacher_scaler.mean", "teacher_scaler.inv_scale",
                "student.w1", "student.b1", "student.w2", "student.b2", "teacher.w1", "teacher.b1", "teacher.w2",
                "teacher.b2"}}};
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  detail::write_block(out, "student_scaler.mean", m.student_scaler.mean);
  detail::write_block(out, "student_scaler.inv_scale", m.student_scaler.inv_scale);
  detail::write_block(out, "teacher_scaler.mean", m.teacher_scaler.mean);
  detail::write_block(out, "teacher_scaler.inv_scale", m.teacher_scaler.inv_scale);
  for (const auto* head : {&m.student, &m.teacher}) {
    const std::string p = head == &m.student ? "student" : "teacher";
    detail::write_block(out, (p + ".w1").c_str(), head->w1);
    detail::write_block(out, (p + ".b1").c_str(), head->b1);
    detail::write_block(out, (p + ".w2").c_str(), head->w2);
    detail::write_block(out, (p + ".b2").c_str(), head->b2);
  }
  if (!out) throw Error("write failed for " + path.string());
}

inline JudgeModel load_judge(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == kCheckpointMagic, "checkpoint: unsupported version in " + path.string());
  std::getline(in, line);
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  require(h.value("feature_layout", "") == kFeatureLayout, "checkpoint: unknown feature layout");
  JudgeModel m;
  m.class_count = h.at("class_count").get<int>();
  require(m.class_count == kJudgeClasses, "checkpoint: unsupported class count");
  m.hidden_width = h.at("hidden_width").get<int>();
  m.student_dim = h.at("student_dim").get<std::size_t>();
  m.teacher_dim = h.at("teacher_dim").get<std::size_t>();
  m.beta = h.at("beta").get<double>();
  m.gamma = h.at("gamma").get<double>();
  m.seed = h.at("seed").get<std::uint64_t>();
  const auto hw = static_cast<std::size_t>(m.hidden_width);
  const auto c = static_cast<std::size_t>(m.class_count);
  m.student_scaler.mean = detail::read_block(in, "student_scaler.mean", m.student_dim);
  m.student_scaler.inv_scale = detail::read_block(in, "student_scaler.inv_scale", m.student_dim);
  m.teacher_scaler.mean = detail::read_block(in, "teacher_scaler.mean", m.teacher_dim);
  m.teacher_scaler.inv_scale = detail::read_block(in, "teacher_scaler.inv_scale", m.teacher_dim);
  for (auto* head : {&m.student, &m.teacher}) {
    const bool is_student = head == &m.student;
    const std::string p = is_student ? "student" : "teacher";
    head->input = is_student ? m.student_dim : m.teacher_dim;
    head->hidden = hw;
    head->classes = c;
    head->w1 = detail::read_block(in, (p + ".w1").c_str(), hw * head->input);
    head->b1 = detail::read_block(in, (p + ".b1").c_str(), hw);
    head->w2 = detail::read_block(in, (p + ".w2").c_str(), c * hw);
    head->b2 = detail::read_block(in, (p + ".b2").c_str(), c);
  }
  return m;
}

}  // namespace selfj

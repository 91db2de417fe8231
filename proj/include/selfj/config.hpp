#pragma once

// Run configuration: every setting of a pipeline run, loadable from JSON and
// written back (secrets excluded) next to the run's outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "selfj/baselines.hpp"
#include "selfj/calibrate.hpp"
#include "selfj/gateway.hpp"
#include "selfj/judge.hpp"
#include "selfj/selective.hpp"

namespace selfj {

struct EndpointSettings {
  EndpointConfig endpoint;
  std::string api_key_env = "OPENAI_API_KEY";
};

struct PolicySettings {
  double threshold = 4.5;
  int best_of_n = 8;
  int samples_per_instruction = 1;
  bool request_logprobs = true;
  bool use_argmax = false;
  VROConfig vro;
};

struct CalibrationSettings {
  double alpha_step = 0.1;
  BinningMode binning = BinningMode::equal_frequency;
};

struct RunConfig {
  EndpointSettings generator;
  EndpointSettings evaluator;
  EndpointSettings embedder;
  CalibrationSettings calibration;
  JudgeTrainConfig judge;
  PolicySettings policy;
  RefinePrompts prompts;
  std::string cache_root = ".selfj-cache";
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  void validate() const {
    auto check = [](const EndpointSettings& s, const std::string& name) {
      try {
        s.endpoint.validate();
      } catch (const Error& e) {
        throw Error("config field " + name + ": " + e.what());
      }
    };
    check(generator, "generator");
    check(evaluator, "evaluator");
    check(embedder, "embedder");
    try {
      alpha_grid(calibration.alpha_step);
    } catch (const Error& e) {
      throw Error(std::string("config field calibration.alpha_step: ") + e.what());
    }
    try {
      judge.validate();
    } catch (const Error& e) {
      throw Error(std::string("config field judge: ") + e.what());
    }
    require(std::isfinite(policy.threshold), "config field policy.threshold: must be finite");
    require(policy.best_of_n >= 1, "config field policy.best_of_n: must be >= 1");
    require(policy.samples_per_instruction >= 1, "config field policy.samples_per_instruction: must be >= 1");
    try {
      policy.vro.validate();
    } catch (const Error& e) {
      throw Error(std::string("config field policy.vro: ") + e.what());
    }
  }
};

namespace detail {

// Reads fields from a JSON object, naming the dotted path on any error and
// rejecting keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config field " + name_or_root() + ": must be an object");
  }
  ~FieldReader() = default;

  template <class T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error("config field " + full(key) + ": wrong type");
    }
  }

  void read_ms(const char* key, std::chrono::milliseconds& dst) {
    long long v = dst.count();
    read(key, v);
    dst = std::chrono::milliseconds(v);
  }

  FieldReader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return FieldReader(j_.contains(key) ? j_.at(key) : empty, full(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error("config field " + full(k.c_str()) + ": unknown field");
  }

  std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string name_or_root() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline EndpointSettings read_endpoint(FieldReader r) {
  EndpointSettings s;
  auto& e = s.endpoint;
  r.read("base_url", e.base_url);
  r.read("model_name", e.model_name);
  r.read("api_key_env", s.api_key_env);
  r.read_ms("timeout_ms", e.timeout);
  r.read("max_retries", e.max_retries);
  r.read("temperature", e.temperature);
  r.read("max_tokens", e.max_tokens);
  r.read("request_parallelism", e.request_parallelism);
  r.read_ms("retry_base_delay_ms", e.retry_base_delay);
  r.read_ms("retry_max_delay_ms", e.retry_max_delay);
  r.read("cache_sampled", e.cache_sampled);
  r.finish();
  if (!s.api_key_env.empty()) {
    if (const char* key = std::getenv(s.api_key_env.c_str())) e.api_key = key;
  }
  return s;
}

inline json endpoint_json(const EndpointSettings& s) {
  const auto& e = s.endpoint;
  return json{{"base_url", e.base_url},
              {"model_name", e.model_name},
              {"api_key_env", s.api_key_env},
              {"timeout_ms", e.timeout.count()},
              {"max_retries", e.max_retries},
              {"temperature", e.temperature},
              {"max_tokens", e.max_tokens},
              {"request_parallelism", e.request_parallelism},
              {"retry_base_delay_ms", e.retry_base_delay.count()},
              {"retry_max_delay_ms", e.retry_max_delay.count()},
              {"cache_sampled", e.cache_sampled}};
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::FieldReader root(j, "");
  c.generator = detail::read_endpoint(root.child("generator"));
  c.evaluator = detail::read_endpoint(root.child("evaluator"));
  c.embedder = detail::read_endpoint(root.child("embedder"));
  {
    auto r = root.child("calibration");
    r.read("alpha_step", c.calibration.alpha_step);
    std::string mode = to_string(c.calibration.binning);
    r.read("binning", mode);
    try {
      c.calibration.binning = parse_binning_mode(mode);
    } catch (const Error& e) {
      throw Error("config field calibration.binning: " + std::string(e.what()));
    }
    r.finish();
  }
  {
    auto r = root.child("judge");
    r.read("beta", c.judge.beta);
    r.read("gamma", c.judge.gamma);
    r.read("teacher_weight", c.judge.teacher_weight);
    r.read("learning_rate", c.judge.learning_rate);
    r.read("epochs", c.judge.epochs);
    r.read("batch_size", c.judge.batch_size);
    r.read("hidden_width", c.judge.hidden_width);
    r.read("seed", c.judge.seed);
    r.finish();
  }
  {
    auto r = root.child("policy");
    r.read("threshold", c.policy.threshold);
    r.read("best_of_n", c.policy.best_of_n);
    r.read("samples_per_instruction", c.policy.samples_per_instruction);
    r.read("request_logprobs", c.policy.request_logprobs);
    r.read("use_argmax", c.policy.use_argmax);
    auto v = r.child("vro");
    v.read("extra_samples", c.policy.vro.extra_samples);
    v.read("temperature", c.policy.vro.temperature);
    v.finish();
    r.finish();
  }
  {
    auto r = root.child("prompts");
    r.read("version", c.prompts.version);
    r.read("feedback", c.prompts.feedback);
    r.read("refine", c.prompts.refine);
    r.finish();
  }
  root.read("cache_root", c.cache_root);
  root.read("output_dir", c.output_dir);
  root.read("seed", c.seed);
  root.finish();
  c.validate();
  return c;
}

inline json config_to_json(const RunConfig& c) {
  return json{{"generator", detail::endpoint_json(c.generator)},
              {"evaluator", detail::endpoint_json(c.evaluator)},
              {"embedder", detail::endpoint_json(c.embedder)},
              {"calibration", {{"alpha_step", c.calibration.alpha_step}, {"binning", to_string(c.calibration.binning)}}},
              {"judge",
               {{"beta", c.judge.beta},
                {"gamma", c.judge.gamma},
                {"teacher_weight", c.judge.teacher_weight},
                {"learning_rate", c.judge.learning_rate},
                {"epochs", c.judge.epochs},
                {"batch_size", c.judge.batch_size},
                {"hidden_width", c.judge.hidden_width},
                {"seed", c.judge.seed}}},
              {"policy",
               {{"threshold", c.policy.threshold},
                {"best_of_n", c.policy.best_of_n},
                {"samples_per_instruction", c.policy.samples_per_instruction},
                {"request_logprobs", c.policy.request_logprobs},
                {"use_argmax", c.policy.use_argmax},
                {"vro", {{"extra_samples", c.policy.vro.extra_samples}, {"temperature", c.policy.vro.temperature}}}}},
              {"prompts", {{"version", c.prompts.version}, {"feedback", c.prompts.feedback}, {"refine", c.prompts.refine}}},
              {"cache_root", c.cache_root},
              {"output_dir", c.output_dir},
              {"seed", c.seed}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace selfj

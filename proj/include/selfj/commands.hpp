#pragma once

// Pipeline stages behind the command-line tool. Each command reads its
// inputs, writes outputs plus resolved_config.json under the output
// directory, and returns normally or throws Error with a diagnostic.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selfj/baselines.hpp"
#include "selfj/calibrate.hpp"
#include "selfj/config.hpp"
#include "selfj/core.hpp"
#include "selfj/gateway.hpp"
#include "selfj/judge.hpp"
#include "selfj/metrics.hpp"
#include "selfj/mock_backend.hpp"
#include "selfj/scoregen.hpp"
#include "selfj/selective.hpp"

namespace selfj::cmd {

namespace fs = std::filesystem;

struct Context {
  RunConfig config;
  fs::path out_dir;
  bool dry_run = false;
  std::shared_ptr<Transport> transport;
  std::ostream* log = &std::cerr;

  Gateway make_gateway() const {
    std::optional<fs::path> cache;
    if (!config.cache_root.empty()) cache = fs::path(config.cache_root);
    return Gateway(transport, cache);
  }

  // Creates the output directory and records the configuration used.
  void begin() const {
    fs::create_directories(out_dir);
    save_config(config, out_dir / "resolved_config.json");
  }

  void plan(const std::string& what, std::size_t chat_calls, std::size_t embed_calls) const {
    *log << what << ": planned gateway calls: chat=" << chat_calls << " embeddings=" << embed_calls << '\n';
  }
};

inline std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(what + " not found: " + p.string());
}

template <class Record>
std::unordered_map<std::string, const Record*> index_by_key(const Dataset<Record>& ds) {
  std::unordered_map<std::string, const Record*> m;
  for (const auto& r : ds) m.emplace(RecordTraits<Record>::key(r), &r);
  return m;
}

inline std::vector<std::string> generator_models(const RunConfig& c, const std::vector<std::string>& systems) {
  if (!systems.empty()) return systems;
  return {c.generator.endpoint.model_name};
}

// --- generate -------------------------------------------------------------

inline void generate(const Context& ctx, const fs::path& instructions_path,
                     const std::vector<std::string>& systems = {}) {
  require_file(instructions_path, "instructions file");
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto models = generator_models(ctx.config, systems);
  const auto per = static_cast<std::size_t>(ctx.config.policy.samples_per_instruction);
  if (ctx.dry_run) {
    ctx.plan("generate", instructions.size() * per * models.size(), 0);
    return;
  }
  ctx.begin();
  auto gateway = ctx.make_gateway();
  Dataset<ResponseRecord> all;
  std::vector<Failure> failures;
  for (const auto& model : models) {
    auto endpoint = ctx.config.generator.endpoint;
    endpoint.model_name = model;
    auto result = sample_responses(gateway, instructions, endpoint, ctx.config.policy.samples_per_instruction,
                                   ctx.config.policy.request_logprobs);
    for (auto& r : result.responses.records) all.records.push_back(std::move(r));
    for (auto& f : result.failures) failures.push_back(std::move(f));
  }
  save_dataset(all, ctx.out_dir / "responses.jsonl");
  save_failures(failures, ctx.out_dir / "failures.jsonl");
  *ctx.log << "generate: " << all.size() << " responses, " << failures.size() << " failures\n";
}

// --- rate -----------------------------------------------------------------

inline void rate(const Context& ctx, const fs::path& instructions_path, const fs::path& responses_path) {
  require_file(instructions_path, "instructions file");
  require_file(responses_path, "responses file");
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto responses = load_dataset<ResponseRecord>(responses_path);
  if (ctx.dry_run) {
    // One self-evaluation per response (two on a format retry), two embeddings.
    ctx.plan("rate", responses.size(), 2 * responses.size());
    return;
  }
  ctx.begin();
  auto gateway = ctx.make_gateway();
  const auto result =
      rate_responses(gateway, instructions, responses, ctx.config.evaluator.endpoint, ctx.config.embedder.endpoint);
  save_dataset(result.ratings, ctx.out_dir / "ratings.jsonl");
  save_failures(result.failures, ctx.out_dir / "failures.jsonl");
  *ctx.log << "rate: " << result.ratings.size() << " ratings, " << result.failures.size() << " failures\n";
}

// --- calibrate ------------------------------------------------------------

// Dev records either come as {"self_eval","cosine","gold_score"} lines or,
// when a gold file is given, as rating records joined with gold by key.
inline std::vector<DevRecord> load_dev(const fs::path& dev_path, const std::optional<fs::path>& dev_gold) {
  require_file(dev_path, "dev file");
  std::vector<DevRecord> dev;
  if (dev_gold) {
    require_file(*dev_gold, "dev gold file");
    const auto ratings = load_dataset<RatingRecord>(dev_path);
    const auto gold = load_dataset<GoldRecord>(*dev_gold);
    const auto gold_by_key = index_by_key(gold);
    for (const auto& r : ratings) {
      const auto it = gold_by_key.find(r.key());
      if (it == gold_by_key.end() || !r.self_eval || !r.cosine_raw) continue;
      dev.push_back({static_cast<double>(*r.self_eval), *r.cosine_raw, it->second->gold_score});
    }
    return dev;
  }
  std::ifstream in(dev_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      dev.push_back({j.at("self_eval").get<double>(), j.at("cosine").get<double>(), j.at("gold_score").get<double>()});
    } catch (const json::exception& e) {
      throw Error(dev_path.string() + ":" + std::to_string(lineno) + ": malformed dev record: " + e.what());
    }
  }
  return dev;
}

inline void calibrate(const Context& ctx, const fs::path& ratings_path, const fs::path& dev_path,
                      const std::optional<fs::path>& dev_gold) {
  require_file(ratings_path, "ratings file");
  auto ratings = load_dataset<RatingRecord>(ratings_path);
  const auto dev = load_dev(dev_path, dev_gold);
  if (ctx.dry_run) {
    ctx.plan("calibrate", 0, 0);
    return;
  }
  ctx.begin();
  const auto search = search_alpha(dev, ctx.config.calibration.alpha_step);
  assign_cosine_classes(ratings, ctx.config.calibration.binning);
  const auto training = build_training_set(ratings, search.alpha_star);

  save_dataset(training.records, ctx.out_dir / "training.jsonl");
  save_failures(training.excluded, ctx.out_dir / "excluded.jsonl");

  std::string report = "alpha\tpearson\n";
  for (const auto& [alpha, r] : search.per_alpha_correlations) report += fmt(alpha, 1) + "\t" + fmt(r) + "\n";
  report += "alpha_star\t" + fmt(search.alpha_star, 1) + "\n";
  report += "dev_records\t" + std::to_string(dev.size()) + "\n";
  write_text(ctx.out_dir / "alpha_report.tsv", report);

  std::vector<int> after;
  for (const auto& r : training.records) after.push_back(*r.final_class);
  const auto before_h = class_histogram<int>(training.classes_before, 1);
  const auto after_h = class_histogram<int>(after, 0);
  std::string hist = "class\tbefore_uniformize\tafter_uniformize\n";
  for (int c = 0; c < kNumClasses; ++c)
    hist += std::to_string(c + 1) + "\t" + std::to_string(before_h[c]) + "\t" + std::to_string(after_h[c]) + "\n";
  write_text(ctx.out_dir / "class_histogram.tsv", hist);
  *ctx.log << "calibrate: alpha*=" << fmt(search.alpha_star, 1) << ", " << training.records.size()
           << " training records, " << training.excluded.size() << " excluded\n";
}

// --- judge features -------------------------------------------------------

struct FeatureJob {
  std::string instruction;
  std::string response;
  std::optional<std::string> reference;
};

inline std::vector<JudgeFeatures> embed_features(Gateway& gateway, const EndpointConfig& embedder,
                                                 const std::vector<FeatureJob>& jobs) {
  const auto outcomes =
      bounded_map<JudgeFeatures>(jobs.size(), embedder.request_parallelism, [&](std::size_t i) {
        const auto& j = jobs[i];
        std::optional<EmbeddingVector> ref;
        if (j.reference) ref = gateway.embed(embedder, *j.reference);
        return featurize(gateway.embed(embedder, j.instruction), gateway.embed(embedder, j.response), ref);
      });
  std::vector<JudgeFeatures> out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok()) throw Error("embedding failed for record " + std::to_string(i) + ": " + outcomes[i].error);
    out.push_back(*outcomes[i].value);
  }
  return out;
}

// --- train-judge ----------------------------------------------------------

inline void train_judge_cmd(const Context& ctx, const fs::path& training_path, const fs::path& instructions_path,
                            const fs::path& responses_path) {
  require_file(training_path, "training file");
  require_file(instructions_path, "instructions file");
  require_file(responses_path, "responses file");
  const auto training = load_dataset<RatingRecord>(training_path);
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto responses = load_dataset<ResponseRecord>(responses_path);
  if (ctx.dry_run) {
    ctx.plan("train-judge", 0, 3 * training.size());
    return;
  }
  ctx.begin();
  const auto ins_by_id = index_by_key(instructions);
  const auto resp_by_key = index_by_key(responses);
  std::vector<FeatureJob> jobs;
  std::vector<int> labels;
  for (const auto& r : training) {
    if (!r.final_class) continue;
    const auto resp = resp_by_key.find(r.key());
    if (resp == resp_by_key.end()) throw Error("training record " + r.key() + " has no response");
    const auto ins = ins_by_id.find(r.instruction_id);
    if (ins == ins_by_id.end()) throw Error("training record " + r.key() + " has no instruction");
    if (!ins->second->reference) throw Error("instruction " + r.instruction_id + " has no reference");
    jobs.push_back({ins->second->instruction, resp->second->response, ins->second->reference});
    labels.push_back(*r.final_class);
  }
  require(!jobs.empty(), "train-judge: no labelled training records");
  auto gateway = ctx.make_gateway();
  const auto features = embed_features(gateway, ctx.config.embedder.endpoint, jobs);
  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < features.size(); ++i) examples.push_back({features[i], labels[i]});
  TrainReport report;
  const auto initial = mean_sd_loss(initialize_judge(examples, ctx.config.judge), examples, ctx.config.judge);
  const auto model = train_judge(examples, ctx.config.judge, &report);
  save_judge(model, ctx.out_dir / "judge.ckpt");
  std::string text = "epoch\tmean_batch_loss\n";
  text += "init\t" + fmt(initial) + "\n";
  for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e)
    text += std::to_string(e + 1) + "\t" + fmt(report.epoch_mean_loss[e]) + "\n";
  text += "final\t" + fmt(mean_sd_loss(model, examples, ctx.config.judge)) + "\n";
  write_text(ctx.out_dir / "train_report.tsv", text);
  *ctx.log << "train-judge: " << examples.size() << " examples, " << report.epoch_mean_loss.size() << " epochs\n";
}

// --- score ----------------------------------------------------------------

inline void score(const Context& ctx, const fs::path& checkpoint, const fs::path& instructions_path,
                  const fs::path& responses_path, JudgeMode mode) {
  require_file(checkpoint, "checkpoint");
  require_file(instructions_path, "instructions file");
  require_file(responses_path, "responses file");
  const auto model = load_judge(checkpoint);
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto responses = load_dataset<ResponseRecord>(responses_path);
  if (ctx.dry_run) {
    ctx.plan("score", 0, (mode == JudgeMode::teacher ? 3 : 2) * responses.size());
    return;
  }
  ctx.begin();
  const auto ins_by_id = index_by_key(instructions);
  std::vector<FeatureJob> jobs;
  for (const auto& r : responses) {
    const auto ins = ins_by_id.find(r.instruction_id);
    if (ins == ins_by_id.end()) throw Error("response " + r.key() + " has no instruction");
    std::optional<std::string> ref;
    if (mode == JudgeMode::teacher) {
      if (!ins->second->reference) throw Error("teacher mode needs a reference for " + r.instruction_id);
      ref = ins->second->reference;
    }
    jobs.push_back({ins->second->instruction, r.response, ref});
  }
  auto gateway = ctx.make_gateway();
  const auto features = embed_features(gateway, ctx.config.embedder.endpoint, jobs);
  Dataset<ScoreRecord> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& r = responses.records[i];
    const auto p = predict_score(model, features[i], mode);
    const double s = ctx.config.policy.use_argmax ? static_cast<double>(p.argmax) : p.expected;
    out.records.push_back({r.instruction_id, r.model_id, r.sample_index, s, p.distribution});
  }
  save_dataset(out, ctx.out_dir / "scores.jsonl");
  *ctx.log << "score: " << out.size() << " responses scored (" << to_string(mode) << ")\n";
}

// --- select ---------------------------------------------------------------

inline void select(const Context& ctx, const fs::path& scores_path) {
  require_file(scores_path, "scores file");
  const auto scores = load_dataset<ScoreRecord>(scores_path);
  if (ctx.dry_run) {
    ctx.plan("select", 0, 0);
    return;
  }
  ctx.begin();
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& s : scores) scored.emplace_back(s.key(), s.score);
  const SelectivePolicy policy{ctx.config.policy.threshold};
  const auto split = apply_threshold(scored, policy);
  const std::set<std::string> accepted(split.accepted.begin(), split.accepted.end());
  std::string text = "id\tscore\tdecision\n";
  for (const auto& [id, s] : scored) text += id + "\t" + fmt(s) + "\t" + (accepted.count(id) ? "accept" : "abstain") + "\n";
  write_text(ctx.out_dir / "selection.tsv", text);
  const double rate = scored.empty() ? 0.0 : static_cast<double>(split.abstained.size()) / scored.size();
  write_text(ctx.out_dir / "selection_summary.tsv", "threshold\taccepted\tabstained\tabstention_rate\n" +
                                                        fmt(policy.threshold) + "\t" +
                                                        std::to_string(split.accepted.size()) + "\t" +
                                                        std::to_string(split.abstained.size()) + "\t" + fmt(rate) + "\n");
  *ctx.log << "select: " << split.accepted.size() << " accepted, " << split.abstained.size() << " abstained\n";
}

// --- refine ---------------------------------------------------------------

inline void refine(const Context& ctx, const fs::path& instructions_path, const fs::path& responses_path,
                   const fs::path& scores_path) {
  require_file(instructions_path, "instructions file");
  require_file(responses_path, "responses file");
  require_file(scores_path, "scores file");
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto responses = load_dataset<ResponseRecord>(responses_path);
  const auto scores = load_dataset<ScoreRecord>(scores_path);
  const auto score_by_key = index_by_key(scores);
  const auto ins_by_id = index_by_key(instructions);
  const SelectivePolicy policy{ctx.config.policy.threshold};
  if (ctx.dry_run) {
    std::size_t below = 0;
    for (const auto& s : scores) below += s.score < policy.threshold;
    ctx.plan("refine", 2 * below, 0);
    return;
  }
  ctx.begin();
  auto gateway = ctx.make_gateway();
  struct Job {
    const ResponseRecord* response;
    const InstructionRecord* instruction;
    double score;
  };
  std::vector<Job> jobs;
  for (const auto& r : responses) {
    const auto s = score_by_key.find(r.key());
    if (s == score_by_key.end()) continue;
    const auto ins = ins_by_id.find(r.instruction_id);
    if (ins == ins_by_id.end()) throw Error("response " + r.key() + " has no instruction");
    jobs.push_back({&r, ins->second, s->second->score});
  }
  const auto outcomes = bounded_map<RefineOutcome>(
      jobs.size(), ctx.config.generator.endpoint.request_parallelism, [&](std::size_t i) {
        auto endpoint = ctx.config.generator.endpoint;
        endpoint.model_name = jobs[i].response->model_id;
        return selective_refine(gateway, jobs[i].instruction->id, jobs[i].instruction->instruction,
                                jobs[i].response->response, jobs[i].score, policy, endpoint, ctx.config.prompts);
      });
  std::ofstream out(ctx.out_dir / "refinements.jsonl", std::ios::binary | std::ios::trunc);
  Dataset<ResponseRecord> final_responses;
  std::vector<Failure> failures;
  std::size_t refined = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& r = *jobs[i].response;
    if (!outcomes[i].ok()) {
      failures.push_back({r.key(), "refine", outcomes[i].error});
      final_responses.records.push_back({r.instruction_id, r.model_id, r.sample_index, r.response, std::nullopt});
      continue;
    }
    const auto& o = *outcomes[i].value;
    json j{{"instruction_id", o.record.instruction_id},
           {"model_id", r.model_id},
           {"sample_index", r.sample_index},
           {"first_response", o.record.first_response},
           {"judge_score", o.record.judge_score},
           {"refined", o.refined},
           {"template_version", ctx.config.prompts.version}};
    if (o.record.feedback) j["feedback"] = *o.record.feedback;
    if (o.record.second_response) j["second_response"] = *o.record.second_response;
    out << j.dump() << '\n';
    if (o.failure) failures.push_back({r.key(), "refine", *o.failure});
    refined += o.refined;
    final_responses.records.push_back({r.instruction_id, r.model_id, r.sample_index,
                                       o.record.second_response.value_or(o.record.first_response), std::nullopt});
  }
  save_dataset(final_responses, ctx.out_dir / "final_responses.jsonl");
  save_failures(failures, ctx.out_dir / "failures.jsonl");
  *ctx.log << "refine: " << refined << " of " << jobs.size() << " responses refined\n";
}

// --- best-of-n ------------------------------------------------------------

inline void best_of_n_cmd(const Context& ctx, const fs::path& instructions_path, const fs::path& checkpoint) {
  require_file(instructions_path, "instructions file");
  require_file(checkpoint, "checkpoint");
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto model = load_judge(checkpoint);
  const auto n = ctx.config.policy.best_of_n;
  if (ctx.dry_run) {
    ctx.plan("best-of-n", instructions.size() * static_cast<std::size_t>(n),
             instructions.size() * static_cast<std::size_t>(n + 1));
    return;
  }
  ctx.begin();
  auto gateway = ctx.make_gateway();
  std::ofstream out(ctx.out_dir / "best_of_n.jsonl", std::ios::binary | std::ios::trunc);
  Dataset<ResponseRecord> best;
  std::vector<Failure> failures;
  for (const auto& ins : instructions) {
    try {
      const auto r = best_of_n(gateway, ins.instruction, ctx.config.generator.endpoint, ctx.config.embedder.endpoint,
                               model, n, ctx.config.policy.use_argmax);
      json scores = json::array();
      for (const auto& s : r.samples) scores.push_back({{"sample_index", s.sample_index}, {"score", s.score}});
      out << json{{"instruction_id", ins.id},
                  {"model_id", ctx.config.generator.endpoint.model_name},
                  {"n", n},
                  {"best_sample_index", r.best.sample_index},
                  {"best_score", r.best.score},
                  {"samples", scores}}
                 .dump()
          << '\n';
      best.records.push_back(
          {ins.id, ctx.config.generator.endpoint.model_name, r.best.sample_index, r.best.response, std::nullopt});
      for (const auto& f : r.failures) failures.push_back({ins.id, "best-of-n", f});
    } catch (const std::exception& e) {
      failures.push_back({ins.id, "best-of-n", e.what()});
    }
  }
  save_dataset(best, ctx.out_dir / "best_responses.jsonl");
  save_failures(failures, ctx.out_dir / "failures.jsonl");
  *ctx.log << "best-of-n: " << best.size() << " instructions, n=" << n << '\n';
}

// --- baselines ------------------------------------------------------------

inline void baselines(const Context& ctx, const fs::path& instructions_path, const fs::path& responses_path) {
  require_file(instructions_path, "instructions file");
  require_file(responses_path, "responses file");
  const auto instructions = load_dataset<InstructionRecord>(instructions_path);
  const auto responses = load_dataset<ResponseRecord>(responses_path);
  const auto k = static_cast<std::size_t>(ctx.config.policy.vro.extra_samples);
  if (ctx.dry_run) {
    ctx.plan("baselines", k * responses.size(), (k + 1) * responses.size());
    return;
  }
  ctx.begin();
  auto gateway = ctx.make_gateway();
  const auto ppl = ppl_scores(responses);
  const auto vro = vro_scores(gateway, instructions, responses, ctx.config.generator.endpoint,
                              ctx.config.embedder.endpoint, ctx.config.policy.vro);
  save_dataset(ppl.scores, ctx.out_dir / "ppl_scores.jsonl");
  save_dataset(vro.scores, ctx.out_dir / "vro_scores.jsonl");
  auto failures = ppl.failures;
  failures.insert(failures.end(), vro.failures.begin(), vro.failures.end());
  save_failures(failures, ctx.out_dir / "failures.jsonl");
  *ctx.log << "baselines: " << ppl.scores.size() << " ppl, " << vro.scores.size() << " vro scores\n";
}

// --- evaluate -------------------------------------------------------------

struct NamedScores {
  std::string label;
  fs::path path;
};

// "label=path" or a bare path (label = file stem).
inline NamedScores parse_named_scores(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {fs::path(arg).stem().string(), arg};
}

inline void evaluate(const Context& ctx, const std::vector<NamedScores>& inputs, const fs::path& gold_path) {
  require(!inputs.empty(), "evaluate: at least one scores file is required");
  require_file(gold_path, "gold file");
  for (const auto& in : inputs) require_file(in.path, "scores file");
  if (ctx.dry_run) {
    ctx.plan("evaluate", 0, 0);
    return;
  }
  ctx.begin();
  const auto gold = load_dataset<GoldRecord>(gold_path);
  std::map<std::string, double> gold_by_key;
  for (const auto& g : gold) gold_by_key.emplace(g.key(), g.gold_score);

  std::string corr = "method\tn\tpearson\tpearson_pct\tkendall_tau\tkendall_tau_pct\tsystem_tau\n";
  for (const auto& in : inputs) {
    const auto scores = load_dataset<ScoreRecord>(in.path);
    std::vector<double> judge, grader;
    std::vector<std::pair<double, double>> curve_input;
    for (const auto& s : scores) {
      const auto it = gold_by_key.find(s.key());
      if (it == gold_by_key.end()) continue;
      judge.push_back(s.score);
      grader.push_back(it->second);
      curve_input.emplace_back(s.score, it->second);
    }
    double p = std::numeric_limits<double>::quiet_NaN();
    double t = std::numeric_limits<double>::quiet_NaN();
    try {
      p = pearson(judge, grader);
    } catch (const Error& e) {
      *ctx.log << "evaluate: " << in.label << ": pearson undefined (" << e.what() << ")\n";
    }
    if (judge.size() >= 2) t = kendall_tau(judge, grader);

    double sys_tau = std::numeric_limits<double>::quiet_NaN();
    const auto systems = system_scores(scores, &gold_by_key);
    std::string ranking = "rank\tmodel_id\tmean_judge_score\tmean_reference_grader_score\n";
    if (systems.size() >= 2) {
      bool have_gold = true;
      for (const auto& s : systems) have_gold = have_gold && s.mean_reference_grader_score.has_value();
      const auto ranked = system_ranking(systems, have_gold);
      if (ranked.tau) sys_tau = *ranked.tau;
      for (std::size_t i = 0; i < ranked.ranked.size(); ++i) {
        const auto& s = ranked.ranked[i];
        ranking += std::to_string(i + 1) + "\t" + s.model_id + "\t" + fmt(s.mean_judge_score) + "\t" +
                   (s.mean_reference_grader_score ? fmt(*s.mean_reference_grader_score) : "NA") + "\n";
      }
      ranking += "kendall_tau\t" + fmt(sys_tau) + "\n";
    }
    write_text(ctx.out_dir / ("ranking_" + in.label + ".tsv"), ranking);

    std::string curve = "abstention_rate\tkept_count\tmean_quality\n";
    if (!curve_input.empty()) {
      for (const auto& pt : risk_coverage_curve(curve_input))
        curve += fmt(pt.abstention_rate) + "\t" + std::to_string(pt.kept_count) + "\t" +
                 (pt.mean_quality ? fmt(*pt.mean_quality) : "NA") + "\n";
    }
    write_text(ctx.out_dir / ("curve_" + in.label + ".tsv"), curve);

    corr += in.label + "\t" + std::to_string(judge.size()) + "\t" + fmt(p) + "\t" + fmt(100.0 * p, 2) + "\t" +
            fmt(t) + "\t" + fmt(100.0 * t, 2) + "\t" + fmt(sys_tau) + "\n";
  }
  write_text(ctx.out_dir / "correlations.tsv", corr);
  *ctx.log << "evaluate: " << inputs.size() << " score sets\n";
}

// --- fixture --------------------------------------------------------------

// Writes a small synthetic dataset for the mock backend: train/dev/test
// instructions with hidden references, grader scores for dev and test
// responses, and matching configs.
inline void write_fixture(const fs::path& dir, int train_count, int dev_count, int test_count) {
  fs::create_directories(dir);
  static const char* kTopics[] = {"explain", "summarize", "compare", "outline", "describe", "plan"};
  static const Category kCats[] = {Category::common, Category::coding, Category::academic};
  auto make = [&](const std::string& prefix, int count) {
    Dataset<InstructionRecord> ds;
    for (int i = 0; i < count; ++i) {
      InstructionRecord r;
      r.id = prefix + "-" + std::to_string(i);
      r.instruction = std::string(kTopics[i % 6]) + " topic " + prefix + std::to_string(i) +
                      " in a short paragraph";
      r.reference = mock::reference_answer(r.instruction);
      r.category = kCats[i % 3];
      ds.records.push_back(r);
    }
    return ds;
  };
  RunConfig c;
  auto mock_endpoint = [](const std::string& model, double temperature) {
    EndpointSettings s;
    s.endpoint.base_url = "mock://local";
    s.endpoint.model_name = model;
    s.endpoint.temperature = temperature;
    s.endpoint.request_parallelism = 4;
    s.endpoint.retry_base_delay = std::chrono::milliseconds(1);
    s.api_key_env = "";
    return s;
  };
  c.generator = mock_endpoint("mock-mid", 0.7);
  c.evaluator = mock_endpoint("mock-mid", 0.0);
  c.embedder = mock_endpoint("mock-embed", 0.0);
  c.judge.epochs = 60;
  c.judge.batch_size = 8;
  c.judge.hidden_width = 16;
  c.judge.learning_rate = 0.05;
  c.policy.best_of_n = 4;
  c.cache_root = "cache";
  c.output_dir = "out";

  const auto train = make("train", train_count);
  const auto dev = make("dev", dev_count);
  const auto test = make("test", test_count);
  save_dataset(train, dir / "train_instructions.jsonl");
  save_dataset(dev, dir / "dev_instructions.jsonl");
  save_dataset(test, dir / "test_instructions.jsonl");

  const int seed = c.generator.endpoint.temperature > 0.0 ? 0 : -1;
  Dataset<GoldRecord> dev_gold, test_gold;
  for (const auto& r : dev)
    dev_gold.records.push_back({r.id, c.generator.endpoint.model_name, 0,
                                mock::gold_score(c.generator.endpoint.model_name, r.instruction, seed)});
  const std::vector<std::string> systems = {"mock-strong", "mock-mid", "mock-weak"};
  for (const auto& m : systems)
    for (const auto& r : test) test_gold.records.push_back({r.id, m, 0, mock::gold_score(m, r.instruction, seed)});
  save_dataset(dev_gold, dir / "dev_gold.jsonl");
  save_dataset(test_gold, dir / "test_gold.jsonl");
  save_config(c, dir / "config.json");
  std::string systems_txt;
  for (const auto& m : systems) systems_txt += m + "\n";
  write_text(dir / "systems.txt", systems_txt);
}

}  // namespace selfj::cmd

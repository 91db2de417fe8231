// Command-line entry point for the judge pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "selfj/selfj.hpp"

namespace fs = std::filesystem;

namespace {

struct Shared {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> cache;
  bool dry_run = false;
};

void add_shared(CLI::App* sub, Shared& s) {
  sub->add_option("--config", s.config_path, "Run configuration (JSON)");
  sub->add_option("--out", s.out, "Output directory (default: config output_dir)");
  sub->add_option("--seed", s.seed, "Seed for judge training and shuffling");
  sub->add_option("--cache", s.cache, "Response cache directory; empty string disables caching");
  sub->add_flag("--dry-run", s.dry_run, "Print planned gateway calls and exit");
}

selfj::cmd::Context make_context(const Shared& s) {
  selfj::cmd::Context ctx;
  if (!s.config_path.empty()) ctx.config = selfj::load_config(s.config_path);
  if (s.seed) {
    ctx.config.seed = *s.seed;
    ctx.config.judge.seed = *s.seed;
  }
  if (s.cache) ctx.config.cache_root = *s.cache;
  ctx.config.validate();
  ctx.out_dir = s.out.empty() ? fs::path(ctx.config.output_dir) : fs::path(s.out);
  ctx.dry_run = s.dry_run;
  ctx.transport = std::make_shared<selfj::DefaultTransport>();
  return ctx;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw selfj::Error("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Judge training, scoring and judge-driven policies"};
  app.require_subcommand(1);
  Shared shared;

  std::string instructions, responses, ratings, dev, training, checkpoint, scores, gold, mode = "student";
  std::optional<std::string> dev_gold;
  std::vector<std::string> models, score_sets;
  std::string models_file;
  std::string fixture_dir;
  int fixture_train = 30, fixture_dev = 20, fixture_test = 15;

  auto* gen = app.add_subcommand("generate", "Sample responses from the generator model(s)");
  gen->add_option("--instructions", instructions)->required();
  gen->add_option("--model", models, "Generator model id; repeat for several systems");
  gen->add_option("--models-file", models_file, "File with one generator model id per line");

  auto* rate = app.add_subcommand("rate", "Self-evaluate responses and compute reference cosine");
  rate->add_option("--instructions", instructions)->required();
  rate->add_option("--responses", responses)->required();

  auto* cal = app.add_subcommand("calibrate", "Search alpha on dev data and build training labels");
  cal->add_option("--ratings", ratings)->required();
  cal->add_option("--dev", dev, "Dev records, or dev ratings when --dev-gold is given")->required();
  cal->add_option("--dev-gold", dev_gold, "Reference-grader scores for the dev ratings");

  auto* train = app.add_subcommand("train-judge", "Train the judge with self-distillation");
  train->add_option("--training", training)->required();
  train->add_option("--instructions", instructions)->required();
  train->add_option("--responses", responses)->required();

  auto* score = app.add_subcommand("score", "Score responses with a trained judge");
  score->add_option("--checkpoint", checkpoint)->required();
  score->add_option("--instructions", instructions)->required();
  score->add_option("--responses", responses)->required();
  score->add_option("--mode", mode, "student or teacher")->check(CLI::IsMember({"student", "teacher"}));

  auto* sel = app.add_subcommand("select", "Accept or abstain by judge score");
  sel->add_option("--scores", scores)->required();

  auto* ref = app.add_subcommand("refine", "Refine responses whose judge score is below threshold");
  ref->add_option("--instructions", instructions)->required();
  ref->add_option("--responses", responses)->required();
  ref->add_option("--scores", scores)->required();

  auto* bon = app.add_subcommand("best-of-n", "Sample N responses and keep the best-scored one");
  bon->add_option("--instructions", instructions)->required();
  bon->add_option("--checkpoint", checkpoint)->required();

  auto* base = app.add_subcommand("baselines", "Compute PPL and VRO confidence scores");
  base->add_option("--instructions", instructions)->required();
  base->add_option("--responses", responses)->required();

  auto* eval = app.add_subcommand("evaluate", "Correlations, system ranking and risk/coverage curves");
  eval->add_option("--scores", score_sets, "label=path; repeatable")->required();
  eval->add_option("--gold", gold)->required();

  auto* fix = app.add_subcommand("fixture", "Write a synthetic dataset for the mock backend");
  fix->add_option("--dir", fixture_dir)->required();
  fix->add_option("--train", fixture_train);
  fix->add_option("--dev", fixture_dev);
  fix->add_option("--test", fixture_test);

  for (auto* sub : {gen, rate, cal, train, score, sel, ref, bon, base, eval}) add_shared(sub, shared);

  CLI11_PARSE(app, argc, argv);

  try {
    namespace c = selfj::cmd;
    if (fix->parsed()) {
      c::write_fixture(fixture_dir, fixture_train, fixture_dev, fixture_test);
      return 0;
    }
    const auto ctx = make_context(shared);
    if (gen->parsed()) {
      if (!models_file.empty())
        for (auto& m : read_lines(models_file)) models.push_back(m);
      c::generate(ctx, instructions, models);
    } else if (rate->parsed()) {
      c::rate(ctx, instructions, responses);
    } else if (cal->parsed()) {
      std::optional<fs::path> dg;
      if (dev_gold) dg = *dev_gold;
      c::calibrate(ctx, ratings, dev, dg);
    } else if (train->parsed()) {
      c::train_judge_cmd(ctx, training, instructions, responses);
    } else if (score->parsed()) {
      c::score(ctx, checkpoint, instructions, responses, selfj::parse_judge_mode(mode));
    } else if (sel->parsed()) {
      c::select(ctx, scores);
    } else if (ref->parsed()) {
      c::refine(ctx, instructions, responses, scores);
    } else if (bon->parsed()) {
      c::best_of_n_cmd(ctx, instructions, checkpoint);
    } else if (base->parsed()) {
      c::baselines(ctx, instructions, responses);
    } else if (eval->parsed()) {
      std::vector<c::NamedScores> inputs;
      for (const auto& s : score_sets) inputs.push_back(c::parse_named_scores(s));
      c::evaluate(ctx, inputs, gold);
    }
  } catch (const std::exception& e) {
    std::cerr << "selfj: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

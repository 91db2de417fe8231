#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "selfj/commands.hpp"
#include "selfj/mock_backend.hpp"

using namespace selfj;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  Workspace(const std::string& name) {
    root = fs::temp_directory_path() / ("selfj_cmd_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    cmd::write_fixture(root / "fx", 12, 10, 6);
  }
  ~Workspace() { fs::remove_all(root); }

  cmd::Context context(const std::string& out, std::ostream& log) const {
    cmd::Context ctx;
    ctx.config = load_config(root / "fx" / "config.json");
    ctx.config.cache_root = (root / "cache").string();
    ctx.out_dir = root / out;
    ctx.transport = std::make_shared<mock::MockTransport>();
    ctx.log = &log;
    return ctx;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Commands, CalibrateFindsAlphaOneWhenGoldIsSelfEval) {
  Workspace ws("alpha");
  std::ostringstream log;
  auto ctx = ws.context("gen", log);
  const auto fx = ws.root / "fx";
  cmd::generate(ctx, fx / "train_instructions.jsonl");
  ctx.out_dir = ws.root / "rate";
  cmd::rate(ctx, fx / "train_instructions.jsonl", ws.root / "gen" / "responses.jsonl");

  std::ofstream dev(ws.root / "dev.jsonl");
  for (int i = 0; i < 30; ++i) {
    const double se = 1 + (i * 7) % 10;
    dev << json{{"self_eval", se}, {"cosine", std::sin(i * 1.3)}, {"gold_score", se}}.dump() << '\n';
  }
  dev.close();
  ctx.out_dir = ws.root / "cal";
  cmd::calibrate(ctx, ws.root / "rate" / "ratings.jsonl", ws.root / "dev.jsonl", std::nullopt);
  const auto report = slurp(ws.root / "cal" / "alpha_report.tsv");
  EXPECT_NE(report.find("alpha_star\t1.0\n"), std::string::npos) << report;
  EXPECT_TRUE(fs::exists(ws.root / "cal" / "class_histogram.tsv"));
  EXPECT_TRUE(fs::exists(ws.root / "cal" / "resolved_config.json"));
  const auto training = load_dataset<RatingRecord>(ws.root / "cal" / "training.jsonl");
  EXPECT_FALSE(training.empty());
  for (const auto& r : training) EXPECT_TRUE(r.final_class);
}

TEST(Commands, ScoreWithOneHotCheckpointGivesForcedClass) {
  Workspace ws("onehot");
  std::ostringstream log;
  auto ctx = ws.context("gen", log);
  const auto fx = ws.root / "fx";
  cmd::generate(ctx, fx / "test_instructions.jsonl");

  JudgeModel m;
  m.hidden_width = 2;
  m.student_dim = 3 * mock::kEmbeddingDim;
  m.teacher_dim = 5 * mock::kEmbeddingDim;
  m.student_scaler = {std::vector<double>(m.student_dim, 0.0), std::vector<double>(m.student_dim, 1.0)};
  m.teacher_scaler = {std::vector<double>(m.teacher_dim, 0.0), std::vector<double>(m.teacher_dim, 1.0)};
  for (auto [head, dim] : {std::pair{&m.student, m.student_dim}, std::pair{&m.teacher, m.teacher_dim}}) {
    head->input = dim;
    head->hidden = 2;
    head->classes = kJudgeClasses;
    head->w1.assign(2 * dim, 0.0);
    head->b1.assign(2, 0.0);
    head->w2.assign(kJudgeClasses * 2, 0.0);
    head->b2.assign(kJudgeClasses, -1000.0);
    head->b2[6] = 1000.0;
  }
  save_judge(m, ws.root / "forced.ckpt");
  ctx.out_dir = ws.root / "score";
  cmd::score(ctx, ws.root / "forced.ckpt", fx / "test_instructions.jsonl", ws.root / "gen" / "responses.jsonl",
             JudgeMode::student);
  const auto scores = load_dataset<ScoreRecord>(ws.root / "score" / "scores.jsonl");
  ASSERT_EQ(scores.size(), 6u);
  for (const auto& s : scores) EXPECT_EQ(s.score, 6.0);
}

TEST(Commands, DryRunWritesNothingAndMakesNoCalls) {
  Workspace ws("dry");
  std::ostringstream log;
  auto ctx = ws.context("gen", log);
  ctx.dry_run = true;
  cmd::generate(ctx, ws.root / "fx" / "train_instructions.jsonl", {"mock-strong", "mock-weak"});
  EXPECT_FALSE(fs::exists(ws.root / "gen"));
  EXPECT_FALSE(fs::exists(ws.root / "cache"));
  EXPECT_NE(log.str().find("chat=24"), std::string::npos) << log.str();
}

TEST(Commands, MissingInputIsADiagnostic) {
  Workspace ws("missing");
  std::ostringstream log;
  auto ctx = ws.context("x", log);
  try {
    cmd::rate(ctx, ws.root / "nope.jsonl", ws.root / "nope2.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("nope.jsonl"), std::string::npos);
  }
}

TEST(Commands, NamedScoresParsing) {
  auto a = cmd::parse_named_scores("judge=out/scores.jsonl");
  EXPECT_EQ(a.label, "judge");
  EXPECT_EQ(a.path, "out/scores.jsonl");
  auto b = cmd::parse_named_scores("dir/ppl_scores.jsonl");
  EXPECT_EQ(b.label, "ppl_scores");
}

TEST(Commands, WarmCacheRerunIsByteIdentical) {
  Workspace ws("warm");
  std::ostringstream log;
  const auto fx = ws.root / "fx";
  for (const char* out : {"a", "b"}) {
    auto ctx = ws.context(out, log);
    cmd::generate(ctx, fx / "test_instructions.jsonl", {"mock-strong", "mock-weak"});
    ctx.out_dir = ws.root / out / "base";
    cmd::baselines(ctx, fx / "test_instructions.jsonl", ws.root / out / "responses.jsonl");
  }
  EXPECT_EQ(slurp(ws.root / "a" / "responses.jsonl"), slurp(ws.root / "b" / "responses.jsonl"));
  EXPECT_EQ(slurp(ws.root / "a" / "base" / "vro_scores.jsonl"), slurp(ws.root / "b" / "base" / "vro_scores.jsonl"));
}

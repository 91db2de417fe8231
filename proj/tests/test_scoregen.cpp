#include <gtest/gtest.h>

#include <deque>
#include <mutex>
#include <set>

#include "selfj/mock_backend.hpp"
#include "selfj/scoregen.hpp"

using namespace selfj;

namespace {

class ReplyTransport : public Transport {
 public:
  explicit ReplyTransport(std::deque<std::string> replies) : replies_(std::move(replies)) {}

  HttpResponse post(const EndpointConfig&, const std::string&, const std::string& body) override {
    std::lock_guard lock(mu_);
    prompts.push_back(json::parse(body)["messages"][0]["content"].get<std::string>());
    auto text = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    json choice{{"message", {{"role", "assistant"}, {"content", text}}}};
    return {200, json{{"choices", {choice}}}.dump()};
  }

  std::vector<std::string> prompts;

 private:
  std::mutex mu_;
  std::deque<std::string> replies_;
};

EndpointConfig mock_endpoint(const std::string& model, double temperature = 0.0) {
  EndpointConfig c;
  c.base_url = "mock://local";
  c.model_name = model;
  c.temperature = temperature;
  c.max_retries = 0;
  return c;
}

Dataset<InstructionRecord> instructions(int n) {
  Dataset<InstructionRecord> ds;
  for (int i = 0; i < n; ++i) {
    std::string text = "describe item " + std::to_string(i);
    ds.records.push_back({"q" + std::to_string(i), text, mock::reference_answer(text), Category::common});
  }
  return ds;
}

}  // namespace

TEST(ScoreGen, PromptContainsSlotsInTemplateOrder) {
  const auto p = build_self_eval_prompt("QQQ", "AAA", "RRR").rendered;
  const auto q = p.find("QQQ"), r = p.find("RRR"), a = p.find("AAA");
  ASSERT_NE(q, std::string::npos);
  ASSERT_NE(r, std::string::npos);
  ASSERT_NE(a, std::string::npos);
  EXPECT_LT(q, r);
  EXPECT_LT(r, a);
  EXPECT_NE(p.find(prompts::kRatingInstruction), std::string::npos);
  EXPECT_EQ(p, build_self_eval_prompt("QQQ", "AAA", "RRR").rendered);
}

TEST(ScoreGen, PromptRejectsEmptySlots) {
  EXPECT_THROW(build_self_eval_prompt("Q", "A", ""), Error);
  EXPECT_THROW(build_self_eval_prompt("", "A", "R"), Error);
  EXPECT_THROW(build_self_eval_prompt("Q", "", "R"), Error);
}

TEST(ScoreGen, SlotLookalikesInsideContentAreNotExpanded) {
  const auto p = build_self_eval_prompt("{answer}", "the answer", "ref").rendered;
  EXPECT_NE(p.find("{answer}"), std::string::npos);
}

TEST(ScoreGen, SelfEvaluateParsesRating) {
  auto t = std::make_shared<ReplyTransport>(std::deque<std::string>{R"({"rating": 5})"});
  Gateway g(t, std::nullopt);
  const auto r = self_evaluate(g, mock_endpoint("e"), "Q", "A", "R");
  EXPECT_EQ(r.rating, 5);
  EXPECT_EQ(r.attempts, 1);
}

TEST(ScoreGen, SelfEvaluateProseThenRating) {
  auto t = std::make_shared<ReplyTransport>(std::deque<std::string>{"Thorough and correct.\n{\"rating\": 10}"});
  Gateway g(t, std::nullopt);
  EXPECT_EQ(self_evaluate(g, mock_endpoint("e"), "Q", "A", "R").rating, 10);
}

TEST(ScoreGen, SelfEvaluateRetriesOnceWithReminder) {
  auto t = std::make_shared<ReplyTransport>(std::deque<std::string>{"no idea", R"({"rating": 4})"});
  Gateway g(t, std::nullopt);
  const auto r = self_evaluate(g, mock_endpoint("e"), "Q", "A", "R");
  EXPECT_EQ(r.rating, 4);
  EXPECT_EQ(r.attempts, 2);
  ASSERT_EQ(t->prompts.size(), 2u);
  EXPECT_NE(t->prompts[1].find(prompts::kFormatReminder), std::string::npos);
}

TEST(ScoreGen, SelfEvaluateTwoFailuresLeaveUnscored) {
  auto t = std::make_shared<ReplyTransport>(std::deque<std::string>{"no rating here"});
  Gateway g(t, std::nullopt);
  const auto r = self_evaluate(g, mock_endpoint("e"), "Q", "A", "R");
  EXPECT_FALSE(r.rating);
  EXPECT_EQ(r.attempts, 2);
  EXPECT_FALSE(r.reason.empty());
}

TEST(ScoreGen, CosineExamples) {
  const EmbeddingVector x(std::vector<double>{1, 0}), y(std::vector<double>{0, 1}), z(std::vector<double>{0.6, 0.8});
  EXPECT_DOUBLE_EQ(cosine_similarity(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(x, y), 0.0);
  EXPECT_NEAR(cosine_similarity(x, z), 0.6, 1e-15);
  EXPECT_THROW(cosine_similarity(x, EmbeddingVector(std::vector<double>{1, 0, 0})), Error);
  EXPECT_THROW(cosine_similarity(x, EmbeddingVector(std::vector<double>{0, 0})), Error);
}

TEST(ScoreGen, CosineOfIdenticalTextsIsOne) {
  Gateway g(std::make_shared<mock::MockTransport>(), std::nullopt);
  EXPECT_NEAR(cosine_score(g, mock_endpoint("mock-embed"), "same words here", "same words here"), 1.0, 1e-12);
}

TEST(ScoreGen, SamplingCardinality) {
  Gateway g(std::make_shared<mock::MockTransport>(), std::nullopt);
  const auto ins = instructions(3);
  const auto one = sample_responses(g, ins, mock_endpoint("mock-mid", 0.7), 1, true);
  EXPECT_EQ(one.responses.size(), 3u);
  EXPECT_TRUE(one.failures.empty());
  for (const auto& r : one.responses) EXPECT_TRUE(r.token_logprobs && !r.token_logprobs->empty());

  const auto four = sample_responses(g, ins, mock_endpoint("mock-mid", 0.7), 4, false);
  ASSERT_EQ(four.responses.size(), 12u);
  for (int q = 0; q < 3; ++q) {
    std::set<int> idx;
    for (const auto& r : four.responses)
      if (r.instruction_id == "q" + std::to_string(q)) idx.insert(r.sample_index);
    EXPECT_EQ(idx, (std::set<int>{0, 1, 2, 3}));
  }
  // Distinct seeds give distinct samples.
  EXPECT_NE(four.responses.records[0].response, four.responses.records[1].response);
}

TEST(ScoreGen, FailedInstructionIsReportedOthersKept) {
  Gateway g(std::make_shared<mock::MockTransport>(), std::nullopt, [](auto) {});
  auto ins = instructions(3);
  ins.records[1].instruction = "broken " + std::string(mock::kFailMarker);
  const auto r = sample_responses(g, ins, mock_endpoint("mock-mid"), 1, false);
  EXPECT_EQ(r.responses.size(), 2u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures[0].id.find("q1"), std::string::npos);
  EXPECT_EQ(r.failures[0].stage, "generate");
}

TEST(ScoreGen, RateFillsBothSignals) {
  Gateway g(std::make_shared<mock::MockTransport>(), std::nullopt);
  const auto ins = instructions(20);
  const auto resp = sample_responses(g, ins, mock_endpoint("mock-mid", 0.7), 1, false).responses;
  const auto rated = rate_responses(g, ins, resp, mock_endpoint("mock-mid"), mock_endpoint("mock-embed"));
  ASSERT_EQ(rated.ratings.size(), 20u);
  for (const auto& r : rated.ratings) {
    ASSERT_TRUE(r.self_eval);
    EXPECT_GE(*r.self_eval, 1);
    EXPECT_LE(*r.self_eval, 10);
    ASSERT_TRUE(r.cosine_raw);
    EXPECT_GE(*r.cosine_raw, -1.0);
    EXPECT_LE(*r.cosine_raw, 1.0);
  }
}

TEST(ScoreGen, RateWithoutReferenceReportsFailure) {
  Gateway g(std::make_shared<mock::MockTransport>(), std::nullopt);
  auto ins = instructions(2);
  ins.records[0].reference.reset();
  Dataset<ResponseRecord> resp;
  resp.records.push_back({"q0", "m", 0, "text", std::nullopt});
  resp.records.push_back({"q1", "m", 0, "text", std::nullopt});
  const auto rated = rate_responses(g, ins, resp, mock_endpoint("mock-mid"), mock_endpoint("mock-embed"));
  ASSERT_EQ(rated.ratings.size(), 2u);
  EXPECT_FALSE(rated.ratings.records[0].self_eval);
  EXPECT_FALSE(rated.ratings.records[0].cosine_raw);
  EXPECT_TRUE(rated.ratings.records[1].cosine_raw);
  ASSERT_FALSE(rated.failures.empty());
  EXPECT_EQ(rated.failures[0].id, "q0|m|0");
}

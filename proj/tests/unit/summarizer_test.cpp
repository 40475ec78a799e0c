#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "coachpipe/errors.hpp"
#include "coachpipe/fixtures.hpp"
#include "coachpipe/summarizer.hpp"

using namespace coachpipe;
using namespace coachpipe::summarizer;
using goalkit::Instruction;
using goalkit::SlotGroup;

namespace {

std::vector<PositiveExample> positives_of(const fixtures::CoachingFixture& fx) {
  std::stringstream io;
  fixtures::write_positives_jsonl(fx.positives, io);
  return read_positives(io, fx.corpus);
}

}  // namespace

TEST(Protocol, FormatParseRoundTrip) {
  for (const auto& ins : goalkit::all_instructions()) {
    auto raw = format_protocol("walk 2500 steps", ins);
    auto p = parse_protocol(raw);
    ASSERT_TRUE(p) << raw;
    EXPECT_EQ(p->partial, "walk 2500 steps");
    EXPECT_EQ(p->instruction, ins);
  }
  EXPECT_EQ(format_protocol("walk", Instruction::copy(SlotGroup::Days)), "PARTIAL: walk || INSTR: Copy {Days}");
  auto empty = parse_protocol(format_protocol("", Instruction::copy(SlotGroup::All)));
  ASSERT_TRUE(empty);
  EXPECT_EQ(empty->partial, "");
}

TEST(Protocol, RejectsMalformedOutputs) {
  EXPECT_FALSE(parse_protocol("walk 2500 steps"));
  EXPECT_FALSE(parse_protocol("PARTIAL: a || INSTR: Pass || INSTR: Pass"));
  EXPECT_FALSE(parse_protocol("PARTIAL: a || INSTR: Copy {Color}"));
  EXPECT_FALSE(parse_protocol("PARTIAL: a || Copy {Days}"));
}

TEST(Reward, ExecutedOutputAgainstGold) {
  goalkit::GoalFrame ref{{"activity", "walk"}, {"days", "monday-friday"}};
  EXPECT_DOUBLE_EQ(reward("PARTIAL: walk 2500 steps || INSTR: Copy {Days}",
                          "Walk 2,500 steps from Monday to Friday", ref),
                   1.0);
  EXPECT_LT(reward("PARTIAL: walk 2500 steps || INSTR: Pass", "Walk 2,500 steps from Monday to Friday", ref), 1.0);
  EXPECT_DOUBLE_EQ(reward("garbage", "walk", ref), 0.0);
  EXPECT_DOUBLE_EQ(reward("PARTIAL: walk 2 miles || INSTR: Add {Num}", "walk",
                          goalkit::GoalFrame{{"amount", "3000 steps"}}),
                   0.0);
}

TEST(Fixture, PositivesAchieveFullReward) {
  fixtures::CoachingOptions o;
  o.conversations = 20;
  o.seed = 3;
  auto fx = fixtures::coaching_corpus(o);
  auto positives = positives_of(fx);
  ASSERT_EQ(positives.size(), fx.corpus.size());
  std::size_t i = 0;
  for (const auto& s : fx.corpus.sessions()) {
    auto ref = previous_gold_frame(fx.corpus, s);
    EXPECT_DOUBLE_EQ(reward(fx.positives[i].output, *s.gold_goal_text, ref), 1.0) << fx.positives[i].output;
    ++i;
  }
}

TEST(Positives, RejectUnknownSessionsAndBadProtocol) {
  auto fx = fixtures::coaching_corpus({});
  std::istringstream unknown(R"({"conversation_id":"nope","week":1,"output":"PARTIAL: a || INSTR: Pass"})");
  EXPECT_THROW(read_positives(unknown, fx.corpus), ValidationError);
  const auto& k = fx.corpus.sessions()[0];
  std::istringstream bad(R"({"conversation_id":")" + k.conversation_id + R"(","week":1,"output":"walk"})");
  EXPECT_THROW(read_positives(bad, fx.corpus), ValidationError);
}

TEST(Vocabulary, ProtocolTokensComeFirst) {
  auto fx = fixtures::coaching_corpus({});
  auto v = summarizer_vocabulary(fx.corpus, positives_of(fx));
  EXPECT_EQ(v.token(2), "PARTIAL:");
  EXPECT_EQ(v.token(3), "||");
  EXPECT_EQ(v.token(4), "INSTR:");
  for (const auto& s : fx.corpus.sessions())
    for (const auto& tok : seqmodel::tokenize(dialogue_source(s))) EXPECT_TRUE(v.contains(tok)) << tok;
}

TEST(WarmStart, LearnsProtocolOutputs) {
  fixtures::CoachingOptions o;
  o.conversations = 16;
  auto fx = fixtures::coaching_corpus(o);
  auto positives = positives_of(fx);
  seqmodel::ReferenceModel m(summarizer_vocabulary(fx.corpus, positives));
  WarmStartConfig cfg;
  cfg.phase1 = {2, 0.3, 16, 1};
  cfg.phase2 = {10, 0.3, 16, 2};
  auto report = warm_start(m, fx.corpus, positives, cfg);
  EXPECT_EQ(report.phase1_pairs, fx.corpus.size());
  EXPECT_EQ(report.phase2_pairs, positives.size());
  std::size_t parsed = 0;
  for (const auto& p : positives) parsed += parse_protocol(seqmodel::greedy(m, p.source, 64)).has_value();
  EXPECT_GT(parsed, positives.size() * 9 / 10);
}

TEST(WarmStart, NoGoldGoalsIsAConfigError) {
  auto c = fixtures::qa_corpus(20, true, 1);
  seqmodel::ReferenceModel m(seqmodel::Vocabulary::build({"a"}));
  EXPECT_THROW(warm_start(m, c, {}, {}), ConfigError);
}

TEST(Contrastive, RaisesTheGap) {
  seqmodel::ReferenceModel m(seqmodel::Vocabulary::build({"src good output bad thing"}));
  std::vector<ContrastiveGroup> groups = {{"src", {"good output"}, {"bad thing", "bad output"}}};
  double before = contrastive_gap(m, groups[0]);
  ContrastiveConfig cfg;
  cfg.margin = 5.0;
  cfg.epochs = 10;
  cfg.learning_rate = 0.2;
  auto report = contrastive_refine(m, groups, cfg);
  EXPECT_DOUBLE_EQ(report.mean_gap_before, before);
  EXPECT_GT(report.mean_gap_after, before + 1.0);
  EXPECT_GT(report.updates, 0u);
  EXPECT_THROW(contrastive_refine(m, {{"src", {}, {"x"}}}, cfg), ConfigError);
}

TEST(Negatives, NeverReachTheGold) {
  auto fx = fixtures::copy_days_task(10, 2);
  auto positives = positives_of(fx);
  seqmodel::ReferenceModel m(summarizer_vocabulary(fx.corpus, positives));
  const auto& s = fx.corpus.sessions()[1];
  auto ref = previous_gold_frame(fx.corpus, s);
  auto negs = sample_negatives(m, dialogue_source(s), *s.gold_goal_text, ref, 5, 4);
  EXPECT_FALSE(negs.empty());
  for (const auto& n : negs) EXPECT_LT(reward(n, *s.gold_goal_text, ref), 1.0);
}

TEST(Ppo, ConfigValidation) {
  RLConfig c;
  c.kl_coefficient = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.ppo_clip = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Ppo, RequiresFrozenBase) {
  auto fx = fixtures::copy_days_task(4, 1);
  seqmodel::ReferenceModel policy(summarizer_vocabulary(fx.corpus, positives_of(fx)));
  seqmodel::ReferenceModel base(policy.vocabulary());
  RLConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(rl_tune(policy, base, rl_examples(fx.corpus), cfg), ConfigError);
}

TEST(Ppo, ZeroKlObjectiveEqualsRewardAndTraceIsDeterministic) {
  auto fx = fixtures::copy_days_task(6, 1);
  seqmodel::ReferenceModel policy(summarizer_vocabulary(fx.corpus, positives_of(fx)));
  auto base = policy.clone_frozen();
  auto policy2 = policy.clone();
  RLConfig cfg;
  cfg.steps = 5;
  cfg.kl_coefficient = 0;
  cfg.max_length = 16;
  auto examples = rl_examples(fx.corpus);
  auto trace = rl_tune(policy, *base, examples, cfg);
  ASSERT_EQ(trace.size(), 5u);
  for (const auto& e : trace) EXPECT_EQ(e.objective, e.mean_reward);
  auto trace2 = rl_tune(*policy2, *base, examples, cfg);
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(trace[i].mean_reward, trace2[i].mean_reward);
  std::ostringstream out;
  write_trace_jsonl(trace, out);
  const auto dumped = out.str();
  EXPECT_EQ(std::count(dumped.begin(), dumped.end(), '\n'), 5);
}

TEST(Summarize, FallbackAndRetries) {
  auto fx = fixtures::coaching_corpus({});
  seqmodel::ReferenceModel untrained(summarizer_vocabulary(fx.corpus, positives_of(fx)));
  SummarizeOptions opts;
  opts.decode.max_length = 8;
  opts.max_attempts = 2;
  const auto& s = fx.corpus.sessions()[0];
  auto out = summarize(untrained, s, {}, opts);
  EXPECT_EQ(out.attempts, 2u);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.instruction, Instruction::pass());
  EXPECT_EQ(out.full_goal_text, out.raw);
  opts.max_attempts = 0;
  EXPECT_THROW(summarize(untrained, s, {}, opts), ConfigError);
}

TEST(Summarize, TrainedPolicyChainsWeeks) {
  auto fx = fixtures::copy_days_task(20, 5);
  auto positives = positives_of(fx);
  seqmodel::ReferenceModel m(summarizer_vocabulary(fx.corpus, positives));
  WarmStartConfig cfg;
  cfg.phase1 = {2, 0.3, 16, 1};
  cfg.phase2 = {12, 0.3, 16, 2};
  warm_start(m, fx.corpus, positives, cfg);
  m.freeze();
  SummarizeOptions opts;
  opts.decode.top_k = 1;
  opts.decode.max_length = 48;
  auto summaries = summarize_corpus(m, fx.corpus, opts);
  ASSERT_EQ(summaries.size(), fx.corpus.size());
  std::size_t correct = 0;
  for (const auto& s : fx.corpus.sessions()) {
    const auto& out = summaries.at(s.key());
    correct += out.full_frame == *s.gold_frame;
  }
  EXPECT_GE(correct, fx.corpus.size() / 2);
  auto again = summarize_corpus(m, fx.corpus, opts);
  for (const auto& [k, v] : summaries) EXPECT_EQ(again.at(k).raw, v.raw);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "coachpipe/errors.hpp"
#include "coachpipe/seqmodel.hpp"

using namespace coachpipe;
using namespace coachpipe::seqmodel;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("coachpipe_seqmodel_" + name);
  std::filesystem::remove_all(p);
  return p;
}

double logsumexp(const std::vector<double>& v) {
  double m = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<TrainPair> toy_pairs() {
  std::vector<TrainPair> out;
  for (int i = 0; i < 40; ++i) {
    out.push_back({"ping one", "pong one"});
    out.push_back({"ping two", "pong two two"});
  }
  return out;
}

}  // namespace

TEST(Vocabulary, ReservedEntriesThenExtrasThenFirstSeen) {
  auto v = Vocabulary::build({"b a", "c b"}, {"<x>"});
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<unk>", "</s>", "<x>", "b", "a", "c"}));
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_EQ(v.decode(v.encode("a b zzz")), "a b <unk>");
  std::vector<int> ids = {v.id("a"), Vocabulary::kEos, v.id("b")};
  EXPECT_EQ(v.decode(ids), "a");
  EXPECT_THROW(Vocabulary::from_tokens({"a", "a"}), ConfigError);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  auto dir = temp_dir("vocab");
  std::filesystem::create_directories(dir);
  auto v = Vocabulary::build({"walk 2500 steps 😊"});
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
}

TEST(ReferenceModel, ZeroParametersAreUniform) {
  ReferenceModel m(Vocabulary::build({"a b c d e f"}));
  auto ctx = m.condition("a b");
  std::vector<double> lp;
  m.next_log_probs(*ctx, std::vector<int>{2, 3}, lp);
  ASSERT_EQ(lp.size(), 8u);
  for (double x : lp) EXPECT_NEAR(x, -std::log(8.0), 1e-12);
  for (double x : token_log_probs(m, "a", "b c")) EXPECT_NEAR(x, -3.0, 1e-12);
}

TEST(ReferenceModel, DistributionsAreNormalizedAfterTraining) {
  auto pairs = toy_pairs();
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  m.fit(pairs, {3, 0.2, 8, 1});
  auto ctx = m.condition("ping two");
  std::vector<double> lp;
  for (std::vector<int> prefix : {std::vector<int>{}, {m.vocabulary().id("pong")}, {3, 4, 5}}) {
    m.next_log_probs(*ctx, prefix, lp);
    EXPECT_NEAR(logsumexp(lp), 0.0, 1e-12);
  }
}

TEST(ReferenceModel, FitLearnsConditionalTargets) {
  auto pairs = toy_pairs();
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  auto report = m.fit(pairs, {5, 0.3, 8, 1});
  EXPECT_EQ(report.examples, 400u);
  EXPECT_EQ(report.steps, 50u);
  EXPECT_LT(report.step_loss.back(), report.step_loss.front() * 0.5);
  EXPECT_EQ(greedy(m, "ping one"), "pong one");
  EXPECT_EQ(greedy(m, "ping two"), "pong two two");
}

TEST(ReferenceModel, ZeroEpochsLeavesModelUnchanged) {
  ReferenceModel m(Vocabulary::build({"a b"}));
  m.fit({{"a", "b"}}, {0, 0.5, 4, 0});
  for (double x : token_log_probs(m, "a", "b")) EXPECT_NEAR(x, -2.0, 1e-12);
}

TEST(ReferenceModel, FrozenAndInvalidFitsThrow) {
  ReferenceModel m(Vocabulary::build({"a b"}));
  EXPECT_THROW(m.fit({}, {}), ConfigError);
  EXPECT_THROW(m.fit({{"a", "b"}}, {1, -1, 4, 0}), ConfigError);
  m.freeze();
  EXPECT_THROW(m.fit({{"a", "b"}}, {1, 0.1, 4, 0}), ContractError);
  EXPECT_THROW(m.apply_gradients({}, 0.1), ContractError);
}

TEST(ReferenceModel, FitIsDeterministicUnderSeed) {
  auto pairs = toy_pairs();
  ReferenceModel a(Vocabulary::build({"ping pong one two"}));
  ReferenceModel b(Vocabulary::build({"ping pong one two"}));
  a.fit(pairs, {2, 0.2, 8, 42});
  b.fit(pairs, {2, 0.2, 8, 42});
  EXPECT_EQ(token_log_probs(a, "ping one", "pong one"), token_log_probs(b, "ping one", "pong one"));
}

TEST(ReferenceModel, CheckpointRoundTrip) {
  auto dir = temp_dir("ckpt");
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  m.fit(toy_pairs(), {2, 0.2, 8, 3});
  m.save(dir);
  auto loaded = load_model(dir);
  EXPECT_EQ(loaded->backend_id(), "reference-ngram");
  EXPECT_EQ(loaded->vocabulary(), m.vocabulary());
  for (auto* src : {"ping one", "ping two", ""})
    EXPECT_EQ(token_log_probs(*loaded, src, "pong two one"), token_log_probs(m, src, "pong two one"));
  EXPECT_THROW(load_model(dir / "missing"), MissingArtifactError);
}

TEST(ReferenceModel, CloneFrozenIsIndependent) {
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  auto base = m.clone_frozen();
  EXPECT_TRUE(base->frozen());
  m.fit(toy_pairs(), {1, 0.3, 8, 0});
  EXPECT_NE(token_log_probs(m, "ping one", "pong"), token_log_probs(*base, "ping one", "pong"));
  EXPECT_NEAR(token_log_probs(*base, "ping one", "pong")[0], -std::log2(6.0), 1e-12);
}

TEST(ReferenceModel, ApplyGradientsMovesTowardTarget) {
  ReferenceModel m(Vocabulary::build({"a b c"}));
  const int b = m.vocabulary().id("b");
  auto ctx = m.condition("a");
  std::vector<double> p;
  m.next_log_probs(*ctx, std::vector<int>{}, p);
  SequenceGradient g{"a", {b}, {std::vector<double>(p.size())}};
  for (std::size_t i = 0; i < p.size(); ++i) g.d_logits[0][i] = (static_cast<int>(i) == b) - std::exp(p[i]);
  double before = token_log_probs(m, "a", "b")[0];
  m.apply_gradients(std::span<const SequenceGradient>(&g, 1), 0.5);
  EXPECT_GT(token_log_probs(m, "a", "b")[0], before);
}

TEST(Sampling, DeterministicUnderSeedAndTopOneIsGreedy) {
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  m.fit(toy_pairs(), {3, 0.2, 8, 0});
  DecodeConfig cfg;
  cfg.top_k = 5;
  cfg.seed = 9;
  cfg.max_length = 10;
  EXPECT_EQ(sample(m, "ping two", cfg), sample(m, "ping two", cfg));
  cfg.top_k = 1;
  EXPECT_EQ(sample(m, "ping two", cfg), greedy(m, "ping two", 10));
}

TEST(Sampling, RespectsMaxLengthAndValidation) {
  ReferenceModel m(Vocabulary::build({"a b c d"}));
  DecodeConfig cfg;
  cfg.top_k = 6;
  cfg.max_length = 3;
  for (std::uint64_t s = 0; s < 20; ++s) {
    cfg.seed = s;
    EXPECT_LE(tokenize(sample(m, "a", cfg)).size(), 3u);
  }
  DecodeConfig bad;
  bad.top_k = 0;
  EXPECT_THROW(bad.validate(6), ConfigError);
  bad.top_k = 1;
  bad.top_p = 1.5;
  EXPECT_THROW(bad.validate(6), ConfigError);
}

TEST(Sampling, TopKRestrictsSupport) {
  // With a strongly preferred pair of tokens, top_k=2 never emits anything else.
  ReferenceModel m(Vocabulary::build({"x y z w"}));
  m.bias()[m.vocabulary().id("x")] = 5;
  m.bias()[m.vocabulary().id("y")] = 4;
  DecodeConfig cfg;
  cfg.top_k = 2;
  cfg.max_length = 6;
  for (std::uint64_t s = 0; s < 30; ++s) {
    cfg.seed = s;
    for (const auto& t : tokenize(sample(m, "", cfg))) EXPECT_TRUE(t == "x" || t == "y") << t;
  }
}

TEST(Kl, ZeroForIdenticalModelsPositiveOtherwise) {
  ReferenceModel p(Vocabulary::build({"ping pong one two"}));
  p.fit(toy_pairs(), {1, 0.2, 8, 0});
  auto q = p.clone_frozen();
  auto target = p.vocabulary().encode("pong one");
  EXPECT_NEAR(sequence_kl(p, *q, "ping one", target), 0.0, 1e-12);
  ReferenceModel u(p.vocabulary());
  EXPECT_GT(sequence_kl(p, u, "ping one", target), 0.0);
}

TEST(Kl, MatchesDirectComputation) {
  ReferenceModel p(Vocabulary::build({"ping pong one two"}));
  p.fit(toy_pairs(), {1, 0.2, 8, 0});
  ReferenceModel q(p.vocabulary());
  q.bias()[3] = 1.0;
  auto target = p.vocabulary().encode("pong two");
  auto cp = p.condition("ping two");
  auto cq = q.condition("ping two");
  double total = 0;
  std::vector<double> lp, lq;
  for (std::size_t i = 0; i <= target.size(); ++i) {
    std::span<const int> prefix(target.data(), i);
    p.next_log_probs(*cp, prefix, lp);
    q.next_log_probs(*cq, prefix, lq);
    for (std::size_t k = 0; k < lp.size(); ++k) total += std::exp(lp[k]) * (lp[k] - lq[k]);
  }
  EXPECT_NEAR(sequence_kl(p, q, "ping two", target), total / static_cast<double>(target.size() + 1), 1e-12);
}

TEST(SequenceLogProb, SumsStepLogProbs) {
  ReferenceModel m(Vocabulary::build({"ping pong one two"}));
  m.fit(toy_pairs(), {1, 0.2, 8, 0});
  auto ids = m.vocabulary().encode("pong two two");
  auto ctx = m.condition("ping two");
  double bits = 0;
  for (double x : token_log_probs(m, "ping two", "pong two two")) bits += x;
  EXPECT_NEAR(sequence_log_prob(m, *ctx, ids, false), bits * std::log(2.0), 1e-9);
  EXPECT_LT(sequence_log_prob(m, *ctx, ids, true), sequence_log_prob(m, *ctx, ids, false));
}

TEST(Embedding, HashingEmbedderIsNormalizedAndStable) {
  HashingEmbedder e(64);
  auto a = e.encode("Walk the dog 😊");
  EXPECT_EQ(a.size(), 64u);
  EXPECT_NEAR(std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0)), 1.0, 1e-12);
  EXPECT_EQ(a, e.encode("Walk the dog 😊"));
  EXPECT_NEAR(cosine(a, e.encode("walk the DOG 😊")), 1.0, 1e-12);
  auto z = e.encode("   ");
  EXPECT_TRUE(std::all_of(z.begin(), z.end(), [](double x) { return x == 0.0; }));
  EXPECT_EQ(e.id(), "hash-bow-64");
  EXPECT_EQ(make_embedder("hash-bow-64")->encode("x"), e.encode("x"));
  EXPECT_THROW(make_embedder("bert"), ConfigError);
}

TEST(Embedding, DistanceHelpers) {
  std::vector<double> a = {1, 0, 0}, b = {0, 2, 0};
  EXPECT_DOUBLE_EQ(squared_distance(a, b), 5.0);
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine(a, a), 1.0);
}

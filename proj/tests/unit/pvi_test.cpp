#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <sstream>

#include "coachpipe/errors.hpp"
#include "coachpipe/fixtures.hpp"
#include "coachpipe/pvi.hpp"
#include "coachpipe/text.hpp"
#include "oracles.hpp"

using namespace coachpipe;
using namespace coachpipe::pvi;
using coachpipe::testing::TableModel;

namespace {

// 14 ordinary tokens + <unk> + <eos> = 16.
seqmodel::Vocabulary sixteen() {
  std::vector<std::string> toks;
  for (int i = 0; i < 14; ++i) toks.push_back("w" + std::to_string(i));
  return seqmodel::Vocabulary::from_tokens(toks);
}

PviModels table_models(std::shared_ptr<const seqmodel::SequenceModel> g,
                       std::shared_ptr<const seqmodel::SequenceModel> g_null) {
  return {std::move(g), std::move(g_null), "table"};
}

std::vector<ScoredInstance> scored_with(const std::vector<double>& values) {
  std::vector<ScoredInstance> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.push_back({{"c" + std::to_string(i), 1}, 1, "ctx", "resp", values[i], false});
  return out;
}

// Manual PVI assignment: odd replies get strongly negative values.
std::vector<ScoredInstance> label_by_oddness(const corpus::DialogueCorpus& c) {
  auto inst = pvi_instances(c, 3).instances;
  std::vector<ScoredInstance> out;
  int i = 0;
  for (const auto& x : inst) {
    bool odd = x.response.find(" felt ") == std::string::npos;
    double v = odd ? -3.0 - 0.01 * i : 1.0 + 0.01 * i;
    out.push_back({x.key, x.turn_index, x.context, x.response, v, false});
    ++i;
  }
  return out;
}

}  // namespace

TEST(Score, AnalyticOracleTwelveBits) {
  auto v = sixteen();
  auto g = std::make_shared<TableModel>(v);
  g->make_deterministic("ctx", "w1 w2 w3");
  g->freeze();
  auto g_null = std::make_shared<TableModel>(v);
  g_null->freeze();
  auto models = table_models(g, g_null);
  // g is certain (0 bits per token); g_null pays log2(16) = 4 bits on each of three tokens.
  EXPECT_NEAR(score(models, "ctx", "w1 w2 w3"), 12.0, 1e-9);
}

TEST(Score, IdenticalModelsGiveZero) {
  auto c = fixtures::qa_corpus(40, true, 3);
  PviTrainConfig cfg;
  cfg.learning_rate = 0.2;
  auto factory = [](const seqmodel::Vocabulary& v) { return std::make_unique<seqmodel::ReferenceModel>(v); };
  auto trained = train_pvi_models(c, factory, cfg);
  // The null model never saw a context token, so it reads every context the same way.
  PviModels models{trained.g_null, trained.g_null, trained.backend_id};
  for (const auto& s : score_corpus(models, c).instances) EXPECT_EQ(s.pvi, 0.0);

  auto v = sixteen();
  auto uniform = std::make_shared<TableModel>(v);
  uniform->freeze();
  EXPECT_EQ(score(table_models(uniform, uniform), "ctx", "w1 w2"), 0.0);
}

TEST(Score, Errors) {
  auto v = sixteen();
  auto a = std::make_shared<TableModel>(v);
  auto b = std::make_shared<seqmodel::ReferenceModel>(v);
  EXPECT_THROW(score(table_models(a, a), "ctx", "   "), ConfigError);
  EXPECT_THROW(score(PviModels{a, b, "table"}, "ctx", "w1"), ConfigError);
}

TEST(Score, ThreadCountDoesNotChangeResults) {
  auto c = fixtures::qa_corpus(60, true, 4);
  PviTrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.batch_size = 4;
  auto factory = [](const seqmodel::Vocabulary& v) { return std::make_unique<seqmodel::ReferenceModel>(v); };
  auto models = train_pvi_models(c, factory, cfg);
  EXPECT_TRUE(models.g->frozen());
  EXPECT_TRUE(models.g_null->frozen());
  auto inst = pvi_instances(c).instances;
  auto one = score_instances(models, inst, 1);
  auto four = score_instances(models, inst, 4);
  EXPECT_EQ(one, four);
  for (std::size_t i = 0; i < inst.size(); i += 7)
    EXPECT_DOUBLE_EQ(one[i].pvi, score(models, inst[i].context, inst[i].response));
}

TEST(Instances, ContextWindowAndExclusions) {
  corpus::WeekSession s;
  s.conversation_id = "c";
  s.patient_id = "p";
  s.coach_id = "k";
  const char* texts[] = {"hello", "hi coach", "how are you", "good", "great"};
  for (int i = 0; i < 5; ++i)
    s.turns.push_back({i, "2023-01-01T09:0" + std::to_string(i) + ":00",
                       i == 1 || i == 3 ? corpus::Speaker::Patient : corpus::Speaker::Coach, texts[i], {}});
  EXPECT_EQ(context_text(s, 3, 2), "patient: hi coach coach: how are you");
  EXPECT_EQ(context_text(s, 3, 3), "coach: hello patient: hi coach coach: how are you");
  EXPECT_EQ(context_text(s, 0, 3), "");

  corpus::WeekSession lead = s;
  lead.conversation_id = "d";
  lead.turns[0].speaker = corpus::Speaker::Patient;
  corpus::DialogueCorpus c({s, lead});
  auto set = pvi_instances(c, 3);
  EXPECT_EQ(set.excluded, 1u);
  EXPECT_EQ(set.instances.size(), 4u);
  EXPECT_EQ(set.instances[0].key.conversation_id, "c");
  EXPECT_EQ(set.instances[0].turn_index, 1);
}

TEST(Flag, FractionModeTakesMostNegative) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i < 30 ? -1.0 - i : 1.0 + i;
  auto inst = scored_with(v);
  auto idx = flag(inst, {std::nullopt, 0.05});
  EXPECT_EQ(idx, (std::vector<std::size_t>{29, 28, 27, 26, 25}));
  int flagged = 0;
  for (const auto& s : inst) flagged += s.flagged;
  EXPECT_EQ(flagged, 5);
}

TEST(Flag, FractionModeRespectsNegativity) {
  auto positive = scored_with(std::vector<double>(100, 0.5));
  EXPECT_TRUE(flag(positive, {std::nullopt, 0.05}).empty());
  std::vector<double> v(100, 2.0);
  v[3] = -0.1;
  v[50] = -4;
  auto few = scored_with(v);
  EXPECT_EQ(flag(few, {std::nullopt, 0.05}), (std::vector<std::size_t>{50, 3}));
}

TEST(Flag, ThresholdModeAndValidation) {
  auto inst = scored_with({-1.2, -0.4, 0.3, -0.6, -0.5});
  auto idx = flag(inst, {-0.5, std::nullopt});
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 3}));
  for (std::size_t i = 0; i < inst.size(); ++i) EXPECT_EQ(inst[i].flagged, inst[i].pvi < -0.5);
  EXPECT_THROW(flag(inst, {}), ConfigError);
  EXPECT_THROW(flag(inst, {-0.5, 0.05}), ConfigError);
  EXPECT_THROW(flag(inst, {std::nullopt, 1.5}), ConfigError);
}

TEST(Flag, SizeBoundProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + text::uniform_index(rng, 150);
    std::vector<double> v(n);
    std::size_t neg = 0;
    for (auto& x : v) {
      x = text::uniform01(rng) * 4 - 1;
      neg += x < 0;
    }
    double f = text::uniform01(rng) * 0.3;
    auto inst = scored_with(v);
    auto idx = flag(inst, {std::nullopt, f});
    auto quota = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
    EXPECT_EQ(idx.size(), std::min(quota, neg));
  }
}

TEST(Curate, ReplacementsMatchBruteForceNearestNeighbour) {
  auto c = fixtures::curation_corpus(8, 1);
  auto scored = label_by_oddness(c);
  seqmodel::HashingEmbedder e(128);
  auto result = low_pvi_replace(c, scored, e, {std::nullopt, 0.05});
  ASSERT_EQ(result.log.size(), 5u);
  for (const auto& r : result.log) {
    ASSERT_TRUE(r.donor_key);
    EXPECT_GT(*r.donor_pvi, 0.0);
    EXPECT_NE(*r.donor_key, r.victim_key);
    const auto* vs = c.find(r.victim_key);
    auto victim_vec = e.encode(preceding_coach_turn(*vs, r.victim_turn)->text);
    double best = -2;
    corpus::SessionKey best_key;
    int best_turn = -1;
    for (const auto& s : scored) {
      if (s.pvi <= 0 || s.key == r.victim_key) continue;
      const auto* coach = preceding_coach_turn(*c.find(s.key), s.turn_index);
      if (!coach) continue;
      double cos = seqmodel::cosine(victim_vec, e.encode(coach->text));
      bool earlier = std::tie(s.key, s.turn_index) < std::tie(best_key, best_turn);
      if (cos > best || (cos == best && earlier)) {
        best = cos;
        best_key = s.key;
        best_turn = s.turn_index;
      }
    }
    EXPECT_EQ(*r.donor_key, best_key);
    EXPECT_EQ(*r.donor_turn, best_turn);
    EXPECT_NEAR(*r.cosine, best, 1e-12);
    const auto* donor = c.find(best_key);
    EXPECT_EQ(result.corpus.find(r.victim_key)->turns[static_cast<std::size_t>(r.victim_turn)].text,
              donor->turns[static_cast<std::size_t>(best_turn)].text);
  }
}

TEST(Curate, PreservesEverythingElse) {
  auto c = fixtures::curation_corpus(8, 2);
  auto scored = label_by_oddness(c);
  seqmodel::HashingEmbedder e(128);
  auto result = low_pvi_replace(c, scored, e, {std::nullopt, 0.05});
  std::set<std::pair<corpus::SessionKey, int>> victims;
  for (const auto& r : result.log) victims.insert({r.victim_key, r.victim_turn});
  ASSERT_EQ(result.corpus.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& a = c.sessions()[i];
    const auto& b = result.corpus.sessions()[i];
    ASSERT_EQ(a.turns.size(), b.turns.size());
    for (std::size_t t = 0; t < a.turns.size(); ++t) {
      if (victims.count({a.key(), a.turns[t].turn_index})) {
        EXPECT_EQ(a.turns[t].speaker, b.turns[t].speaker);
        continue;
      }
      EXPECT_EQ(a.turns[t], b.turns[t]);
    }
  }
}

TEST(Curate, ZeroFlaggedIsByteIdentical) {
  auto c = fixtures::curation_corpus(0, 3);
  auto scored = label_by_oddness(c);
  seqmodel::HashingEmbedder e(64);
  auto result = low_pvi_replace(c, scored, e, {std::nullopt, 0.05});
  EXPECT_TRUE(result.log.empty());
  std::ostringstream a, b;
  corpus::emit(c, a);
  corpus::emit(result.corpus, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Curate, RejectsInstancesFromAnotherCorpus) {
  auto c = fixtures::curation_corpus(0, 3);
  auto scored = scored_with({-1.0});
  seqmodel::HashingEmbedder e(64);
  EXPECT_ANY_THROW(low_pvi_replace(c, scored, e, {std::nullopt, 0.05}));
}

TEST(Io, ScoresRoundTrip) {
  auto inst = scored_with({-1.5, 0.25, 3.0});
  inst[0].flagged = true;
  inst[1].response = "Thanks 😊";
  std::stringstream io;
  write_scores_jsonl(inst, io);
  EXPECT_EQ(read_scores_jsonl(io), inst);
}

TEST(Behavior, DeterministicContextBeatsShuffledContext) {
  auto train = fixtures::qa_corpus(300, true, 1);
  auto held = fixtures::qa_corpus(200, true, 1001);
  PviTrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.batch_size = 4;
  auto factory = [](const seqmodel::Vocabulary& v) { return std::make_unique<seqmodel::ReferenceModel>(v); };
  auto models = train_pvi_models(train, factory, cfg);
  auto inst = pvi_instances(held).instances;
  auto scored = score_instances(models, inst, 1);
  EXPECT_GT(v_information(scored), 1.0);
  std::mt19937_64 rng(3);
  std::vector<std::size_t> perm(inst.size());
  std::iota(perm.begin(), perm.end(), 0);
  text::shuffle(perm, rng);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < inst.size(); ++i)
    wins += scored[i].pvi > score(models, inst[perm[i]].context, inst[i].response);
  EXPECT_GE(wins * 100, inst.size() * 90);
}

#include "coachpipe/pvi.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <thread>
#include <tuple>

#include "coachpipe/text.hpp"

namespace coachpipe::pvi {

namespace {

std::string_view speaker_tag(corpus::Speaker s) {
  return s == corpus::Speaker::Coach ? "coach:" : "patient:";
}

nlohmann::ordered_json key_json(const corpus::SessionKey& key, int turn) {
  nlohmann::ordered_json j;
  j["conversation_id"] = key.conversation_id;
  j["week"] = key.week;
  j["turn_index"] = turn;
  return j;
}

}  // namespace

std::string context_text(const corpus::WeekSession& session, std::size_t index, std::size_t window) {
  std::size_t begin = index > window ? index - window : 0;
  std::string out;
  for (std::size_t i = begin; i < index; ++i) {
    if (!out.empty()) out += ' ';
    out += speaker_tag(session.turns[i].speaker);
    out += ' ';
    out += session.turns[i].text;
  }
  return out;
}

InstanceSet pvi_instances(const corpus::DialogueCorpus& corpus, std::size_t window) {
  if (window == 0) throw ConfigError("pvi: context_window must be positive");
  InstanceSet set;
  for (const auto& s : corpus.sessions()) {
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
      if (s.turns[i].speaker != corpus::Speaker::Patient) continue;
      if (i == 0) {
        ++set.excluded;
        continue;
      }
      set.instances.push_back({s.key(), s.turns[i].turn_index, context_text(s, i, window), s.turns[i].text});
    }
  }
  return set;
}

nlohmann::json PviTrainConfig::to_json() const {
  return {{"context_window", context_window}, {"g_epochs", g_epochs},
          {"g_null_epochs", g_null_epochs},   {"learning_rate", learning_rate},
          {"batch_size", batch_size},         {"seed", seed}};
}

PviModels train_pvi_models(const corpus::DialogueCorpus& train, const ModelFactory& factory,
                           const PviTrainConfig& cfg) {
  auto set = pvi_instances(train, cfg.context_window);
  if (set.instances.empty()) throw ConfigError("pvi: no patient turn with preceding context");
  std::vector<std::string> texts;
  std::vector<seqmodel::TrainPair> with_context, without_context;
  for (const auto& inst : set.instances) {
    texts.push_back(inst.context);
    texts.push_back(inst.response);
    with_context.push_back({inst.context, inst.response});
    without_context.push_back({"", inst.response});
  }
  auto vocab = seqmodel::Vocabulary::build(texts);

  auto g = factory(vocab);
  auto g_null = factory(vocab);
  if (!g || !g_null) throw ConfigError("pvi: model factory returned nothing");
  g->fit(with_context, {cfg.g_epochs, cfg.learning_rate, cfg.batch_size, cfg.seed});
  g_null->fit(without_context,
              {cfg.g_null_epochs, cfg.learning_rate, cfg.batch_size, text::mix_seed(cfg.seed, 1)});
  g->freeze();
  g_null->freeze();
  PviModels models;
  models.backend_id = g->backend_id();
  models.g = std::move(g);
  models.g_null = std::move(g_null);
  return models;
}

double score(const PviModels& models, std::string_view context, std::string_view response) {
  if (text::is_blank(response)) throw ConfigError("pvi: response is blank");
  if (!models.g || !models.g_null) throw ConfigError("pvi: models not loaded");
  if (models.g->backend_id() != models.g_null->backend_id())
    throw ConfigError("pvi: g and g_null come from different backends");
  double with_context = 0, without = 0;
  for (double lp : seqmodel::token_log_probs(*models.g, context, response)) with_context += lp;
  for (double lp : seqmodel::token_log_probs(*models.g_null, "", response)) without += lp;
  return with_context - without;
}

std::vector<ScoredInstance> score_instances(const PviModels& models,
                                            const std::vector<PviInstance>& instances,
                                            std::size_t threads) {
  if (!models.g || !models.g_null || !models.g->frozen() || !models.g_null->frozen())
    throw ContractError("pvi: models must be frozen before scoring");
  std::vector<ScoredInstance> out(instances.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& inst = instances[i];
      out[i] = {inst.key, inst.turn_index, inst.context, inst.response,
                score(models, inst.context, inst.response), false};
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, instances.size()));
  if (threads <= 1) {
    work(0, instances.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  std::size_t chunk = (instances.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    std::size_t begin = std::min(instances.size(), t * chunk);
    std::size_t end = std::min(instances.size(), begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        work(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

ScoredSet score_corpus(const PviModels& models, const corpus::DialogueCorpus& corpus,
                       std::size_t context_window, std::size_t threads) {
  auto set = pvi_instances(corpus, context_window);
  return {score_instances(models, set.instances, threads), set.excluded};
}

double v_information(const std::vector<ScoredInstance>& instances) {
  if (instances.empty()) throw ConfigError("v_information: no instances");
  double sum = 0;
  for (const auto& i : instances) sum += i.pvi;
  return sum / static_cast<double>(instances.size());
}

std::vector<std::size_t> flag(std::vector<ScoredInstance>& instances, const FlagOptions& options) {
  if (options.threshold.has_value() == options.fraction.has_value())
    throw ConfigError("pvi flag: set exactly one of threshold and fraction");
  if (options.fraction && !(*options.fraction >= 0 && *options.fraction <= 1))
    throw ConfigError("pvi flag: fraction must lie in [0, 1]");

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return instances[a].pvi < instances[b].pvi; });

  std::vector<std::size_t> flagged;
  if (options.threshold) {
    for (std::size_t i : order)
      if (instances[i].pvi < *options.threshold) flagged.push_back(i);
  } else {
    auto quota = static_cast<std::size_t>(
        std::ceil(*options.fraction * static_cast<double>(instances.size()) - 1e-9));
    for (std::size_t i : order) {
      if (flagged.size() >= quota || !(instances[i].pvi < 0)) break;
      flagged.push_back(i);
    }
  }
  for (auto& inst : instances) inst.flagged = false;
  for (std::size_t i : flagged) instances[i].flagged = true;
  return flagged;
}

const corpus::Turn* preceding_coach_turn(const corpus::WeekSession& session, int turn_index) {
  const corpus::Turn* found = nullptr;
  for (const auto& t : session.turns) {
    if (t.turn_index >= turn_index) break;
    if (t.speaker == corpus::Speaker::Coach) found = &t;
  }
  return found;
}

CurationResult low_pvi_replace(const corpus::DialogueCorpus& corpus,
                               std::vector<ScoredInstance> instances,
                               const seqmodel::EmbeddingProvider& embedder,
                               const FlagOptions& options) {
  auto locate = [&](const ScoredInstance& inst) {
    const corpus::WeekSession* s = corpus.find(inst.key);
    if (!s) throw ValidationError("conversation_id", "scores refer to unknown session " +
                                                         corpus::to_string(inst.key));
    auto it = std::find_if(s->turns.begin(), s->turns.end(),
                           [&](const corpus::Turn& t) { return t.turn_index == inst.turn_index; });
    if (it == s->turns.end() || it->speaker != corpus::Speaker::Patient)
      throw ValidationError("turn_index", "no patient turn " + std::to_string(inst.turn_index) +
                                              " in " + corpus::to_string(inst.key));
    return s;
  };

  // Preceding coach embedding per instance, computed once.
  std::vector<std::optional<std::vector<double>>> coach_vec(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto* s = locate(instances[i]);
    if (const auto* c = preceding_coach_turn(*s, instances[i].turn_index)) coach_vec[i] = embedder.encode(c->text);
  }

  // Donor candidates in (key, turn) order so strict improvement keeps the lowest on ties.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].pvi > 0 && coach_vec[i]) candidates.push_back(i);
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(instances[a].key, instances[a].turn_index) <
           std::tie(instances[b].key, instances[b].turn_index);
  });

  CurationResult result{corpus, {}};
  auto flagged = flag(instances, options);
  for (std::size_t v : flagged) {
    const auto& victim = instances[v];
    Replacement rep;
    rep.victim_key = victim.key;
    rep.victim_turn = victim.turn_index;
    rep.victim_pvi = victim.pvi;
    std::optional<std::size_t> donor;
    double best = -std::numeric_limits<double>::infinity();
    if (coach_vec[v]) {
      for (std::size_t d : candidates) {
        if (instances[d].key == victim.key) continue;
        double sim = seqmodel::cosine(*coach_vec[v], *coach_vec[d]);
        if (sim > best) {
          best = sim;
          donor = d;
        }
      }
    }
    if (donor) {
      const auto& d = instances[*donor];
      rep.donor_key = d.key;
      rep.donor_turn = d.turn_index;
      rep.cosine = best;
      rep.donor_pvi = d.pvi;
      for (auto& s : result.corpus.mutable_sessions()) {
        if (s.key() != victim.key) continue;
        for (auto& t : s.turns)
          if (t.turn_index == victim.turn_index) t.text = d.response;
      }
    }
    result.log.push_back(std::move(rep));
  }
  return result;
}

void write_scores_jsonl(const std::vector<ScoredInstance>& instances, std::ostream& out) {
  for (const auto& i : instances) {
    auto j = key_json(i.key, i.turn_index);
    j["context"] = i.context;
    j["response"] = i.response;
    j["pvi"] = i.pvi;
    j["flagged"] = i.flagged;
    out << j.dump() << '\n';
  }
}

std::vector<ScoredInstance> read_scores_jsonl(std::istream& in) {
  std::vector<ScoredInstance> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ScoredInstance s;
      s.key = {j.at("conversation_id").get<std::string>(), j.at("week").get<int>()};
      s.turn_index = j.at("turn_index").get<int>();
      s.context = j.at("context").get<std::string>();
      s.response = j.at("response").get<std::string>();
      s.pvi = j.at("pvi").get<double>();
      s.flagged = j.at("flagged").get<bool>();
      if (!std::isfinite(s.pvi)) throw ValidationError("pvi", "must be finite", n);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return out;
}

void write_replacements_jsonl(const std::vector<Replacement>& log, std::ostream& out) {
  for (const auto& r : log) {
    nlohmann::ordered_json j;
    j["victim_key"] = key_json(r.victim_key, r.victim_turn);
    j["donor_key"] = r.donor_key ? nlohmann::ordered_json(key_json(*r.donor_key, *r.donor_turn))
                                 : nlohmann::ordered_json(nullptr);
    j["cosine"] = r.cosine ? nlohmann::ordered_json(*r.cosine) : nlohmann::ordered_json(nullptr);
    j["victim_pvi"] = r.victim_pvi;
    j["donor_pvi"] = r.donor_pvi ? nlohmann::ordered_json(*r.donor_pvi) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace coachpipe::pvi

#include "coachpipe/summarizer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "coachpipe/text.hpp"

namespace coachpipe::summarizer {

namespace {

constexpr std::string_view kPartialLabel = "PARTIAL:";
constexpr std::string_view kInstrLabel = "INSTR:";
constexpr std::string_view kDelimiter = "||";

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string_view::npos;
       pos = s.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Gradient of log p(target) with respect to the logits at every step,
// EOS step included, scaled by `weight`.
std::vector<std::vector<double>> sequence_grad(const seqmodel::SequenceModel& model,
                                               const seqmodel::SourceContext& ctx,
                                               const std::vector<int>& target, double weight) {
  std::vector<std::vector<double>> d(target.size() + 1);
  std::vector<double> lp;
  for (std::size_t i = 0; i <= target.size(); ++i) {
    model.next_log_probs(ctx, std::span<const int>(target.data(), i), lp);
    d[i].resize(lp.size());
    for (std::size_t k = 0; k < lp.size(); ++k) d[i][k] = -weight * std::exp(lp[k]);
    int y = i < target.size() ? target[i] : seqmodel::Vocabulary::kEos;
    d[i][static_cast<std::size_t>(y)] += weight;
  }
  return d;
}

double mean_sequence_log_prob(const seqmodel::SequenceModel& model,
                              const seqmodel::SourceContext& ctx,
                              const std::vector<std::string>& outputs) {
  double sum = 0;
  for (const auto& o : outputs) {
    auto ids = model.vocabulary().encode(o);
    sum += seqmodel::sequence_log_prob(model, ctx, ids);
  }
  return sum / static_cast<double>(outputs.size());
}

}  // namespace

// --- protocol ---------------------------------------------------------------------------

std::string format_protocol(std::string_view partial, const goalkit::Instruction& instruction) {
  std::string out(kPartialLabel);
  std::string p = text::trim(partial);
  if (!p.empty()) out += " " + p;
  out += " ";
  out += kDelimiter;
  out += " ";
  out += kInstrLabel;
  out += " " + goalkit::to_string(instruction);
  return out;
}

std::optional<ProtocolOutput> parse_protocol(std::string_view raw) {
  if (count_occurrences(raw, kDelimiter) != 1) return std::nullopt;
  auto pos = raw.find(kDelimiter);
  std::string left = text::trim(raw.substr(0, pos));
  std::string right = text::trim(raw.substr(pos + kDelimiter.size()));
  if (left.rfind(kPartialLabel, 0) != 0 || right.rfind(kInstrLabel, 0) != 0) return std::nullopt;
  ProtocolOutput out;
  out.partial = text::trim(std::string_view(left).substr(kPartialLabel.size()));
  try {
    out.instruction = goalkit::parse_instruction(std::string_view(right).substr(kInstrLabel.size()));
  } catch (const goalkit::UnknownInstructionError&) {
    return std::nullopt;
  }
  return out;
}

std::string dialogue_source(const corpus::WeekSession& session) {
  std::string out;
  for (const auto& t : session.turns) {
    if (!out.empty()) out += ' ';
    out += t.speaker == corpus::Speaker::Coach ? "coach:" : "patient:";
    std::string body = goalkit::normalize_text(t.text);
    if (!body.empty()) out += " " + body;
  }
  return out;
}

std::string normalize_goal(std::string_view goal_text) { return goalkit::normalize_text(goal_text); }

double reward(std::string_view raw, std::string_view gold_goal_text,
              const goalkit::GoalFrame& reference, evalkit::RougeMetric metric,
              const goalkit::Schema& schema) {
  auto parsed = parse_protocol(raw);
  if (!parsed) return 0.0;
  try {
    auto result = goalkit::execute(parsed->partial, parsed->instruction, reference, schema);
    return evalkit::rouge(metric, normalize_goal(result.text), normalize_goal(gold_goal_text));
  } catch (const goalkit::UnitMismatchError&) {
    return 0.0;
  }
}

goalkit::GoalFrame previous_gold_frame(const corpus::DialogueCorpus& corpus,
                                       const corpus::WeekSession& session,
                                       const goalkit::Schema& schema) {
  const corpus::WeekSession* prev = corpus.previous_week(session);
  if (!prev) return {};
  if (prev->gold_frame) return *prev->gold_frame;
  if (prev->gold_goal_text) return goalkit::extract_frame(*prev->gold_goal_text, schema);
  return {};
}

seqmodel::Vocabulary summarizer_vocabulary(const corpus::DialogueCorpus& corpus,
                                           const std::vector<PositiveExample>& positives) {
  std::vector<std::string> extra{std::string(kPartialLabel), std::string(kDelimiter),
                                 std::string(kInstrLabel)};
  for (const auto& in : goalkit::all_instructions())
    for (auto& tok : text::split_whitespace(goalkit::to_string(in))) extra.push_back(std::move(tok));
  std::sort(extra.begin() + 3, extra.end());
  extra.erase(std::unique(extra.begin() + 3, extra.end()), extra.end());
  std::vector<std::string> texts;
  for (const auto& s : corpus.sessions()) {
    texts.push_back(dialogue_source(s));
    if (s.gold_goal_text) texts.push_back(normalize_goal(*s.gold_goal_text));
  }
  for (const auto& p : positives) texts.push_back(p.output);
  return seqmodel::Vocabulary::build(texts, extra);
}

// --- warm start ----------------------------------------------------------------------------

std::vector<PositiveExample> read_positives(std::istream& in, const corpus::DialogueCorpus& corpus) {
  std::vector<PositiveExample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    }
    for (const char* f : {"conversation_id", "week", "output"}) {
      if (!j.contains(f)) throw ValidationError(f, "missing", n);
    }
    if (!j["conversation_id"].is_string() || !j["week"].is_number_integer() ||
        !j["output"].is_string())
      throw ValidationError("output", "conversation_id/output must be strings, week an integer", n);
    corpus::SessionKey key{j["conversation_id"].get<std::string>(), j["week"].get<int>()};
    const corpus::WeekSession* s = corpus.find(key);
    if (!s) throw ValidationError("conversation_id", "no session " + corpus::to_string(key), n);
    std::string output = j["output"].get<std::string>();
    if (!parse_protocol(output)) throw ValidationError("output", "not a valid protocol sequence", n);
    out.push_back({dialogue_source(*s), std::move(output)});
  }
  return out;
}

WarmStartReport warm_start(seqmodel::SequenceModel& model, const corpus::DialogueCorpus& corpus,
                           const std::vector<PositiveExample>& positives,
                           const WarmStartConfig& cfg) {
  WarmStartReport report;
  std::vector<seqmodel::TrainPair> phase1;
  for (const auto& s : corpus.sessions()) {
    if (!s.gold_goal_text) {
      ++report.skipped;
      continue;
    }
    phase1.push_back({dialogue_source(s), normalize_goal(*s.gold_goal_text)});
  }
  if (phase1.empty()) throw ConfigError("warm_start: no supervised pairs");
  report.phase1_pairs = phase1.size();
  report.phase1 = model.fit(phase1, cfg.phase1);

  if (!positives.empty()) {
    std::vector<seqmodel::TrainPair> phase2;
    phase2.reserve(positives.size());
    for (const auto& p : positives) phase2.push_back({p.source, p.output});
    report.phase2_pairs = phase2.size();
    report.phase2 = model.fit(phase2, cfg.phase2);
  }
  return report;
}

// --- contrastive ------------------------------------------------------------------------------

double contrastive_gap(const seqmodel::SequenceModel& model, const ContrastiveGroup& group) {
  if (group.positives.empty() || group.negatives.empty())
    throw ConfigError("contrastive: every dialogue needs positives and negatives");
  auto ctx = model.condition(group.source);
  return mean_sequence_log_prob(model, *ctx, group.positives) -
         mean_sequence_log_prob(model, *ctx, group.negatives);
}

ContrastiveReport contrastive_refine(seqmodel::SequenceModel& model,
                                     const std::vector<ContrastiveGroup>& groups,
                                     const ContrastiveConfig& cfg) {
  if (groups.empty()) throw ConfigError("contrastive_refine: no groups");
  if (!(cfg.margin >= 0)) throw ConfigError("contrastive_refine: margin must be non-negative");
  if (!(cfg.learning_rate > 0)) throw ConfigError("contrastive_refine: learning_rate must be positive");
  ContrastiveReport report;
  for (const auto& g : groups) report.mean_gap_before += contrastive_gap(model, g);
  report.mean_gap_before /= static_cast<double>(groups.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& g : groups) {
      if (contrastive_gap(model, g) >= cfg.margin) continue;
      auto ctx = model.condition(g.source);
      std::vector<seqmodel::SequenceGradient> grads;
      auto add = [&](const std::vector<std::string>& outputs, double weight) {
        for (const auto& o : outputs) {
          auto ids = model.vocabulary().encode(o);
          grads.push_back({g.source, ids, sequence_grad(model, *ctx, ids, weight)});
        }
      };
      add(g.positives, 1.0 / static_cast<double>(g.positives.size()));
      add(g.negatives, -1.0 / static_cast<double>(g.negatives.size()));
      model.apply_gradients(grads, cfg.learning_rate);
      ++report.updates;
    }
  }
  for (const auto& g : groups) report.mean_gap_after += contrastive_gap(model, g);
  report.mean_gap_after /= static_cast<double>(groups.size());
  return report;
}

std::vector<std::string> sample_negatives(const seqmodel::SequenceModel& model,
                                          std::string_view source, std::string_view gold_goal_text,
                                          const goalkit::GoalFrame& reference, std::size_t count,
                                          std::uint64_t seed) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  seqmodel::DecodeConfig cfg;
  cfg.top_k = model.vocabulary().size();
  cfg.max_length = 64;
  auto ctx = model.condition(source);
  std::mt19937_64 rng(seed);
  for (std::size_t attempt = 0; attempt < count * 8 && out.size() < count; ++attempt) {
    std::string raw = model.vocabulary().decode(seqmodel::sample_ids(model, *ctx, cfg, rng));
    if (!seen.insert(raw).second) continue;
    if (reward(raw, gold_goal_text, reference) < 1.0) out.push_back(std::move(raw));
  }
  return out;
}

// --- PPO -----------------------------------------------------------------------------------------

std::vector<RLExample> rl_examples(const corpus::DialogueCorpus& corpus,
                                   const goalkit::Schema& schema) {
  std::vector<RLExample> out;
  for (const auto& s : corpus.sessions()) {
    if (!s.gold_goal_text) continue;
    out.push_back({dialogue_source(s), *s.gold_goal_text, previous_gold_frame(corpus, s, schema)});
  }
  return out;
}

void RLConfig::validate() const {
  if (!(kl_coefficient >= 0)) throw ConfigError("rl: kl_coefficient must be >= 0");
  if (!(ppo_clip > 0 && ppo_clip <= 1)) throw ConfigError("rl: ppo_clip must lie in (0, 1]");
  if (batch_size == 0) throw ConfigError("rl: batch_size must be positive");
  if (steps == 0) throw ConfigError("rl: steps must be positive");
  if (!(learning_rate > 0)) throw ConfigError("rl: learning_rate must be positive");
  if (!(baseline_momentum >= 0 && baseline_momentum < 1))
    throw ConfigError("rl: baseline_momentum must lie in [0, 1)");
  if (max_length == 0) throw ConfigError("rl: max_length must be positive");
}

nlohmann::json RLConfig::to_json() const {
  return {{"reward_metric", std::string(evalkit::to_string(reward_metric))},
          {"kl_coefficient", kl_coefficient},
          {"ppo_clip", ppo_clip},
          {"batch_size", batch_size},
          {"steps", steps},
          {"seed", seed},
          {"learning_rate", learning_rate},
          {"ppo_epochs", ppo_epochs},
          {"baseline_momentum", baseline_momentum},
          {"max_length", max_length}};
}

void write_trace_jsonl(const std::vector<TraceEntry>& trace, std::ostream& out) {
  for (const auto& e : trace) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["mean_reward"] = e.mean_reward;
    j["mean_kl"] = e.mean_kl;
    j["objective"] = e.objective;
    out << j.dump() << '\n';
  }
}

std::vector<TraceEntry> rl_tune(seqmodel::SequenceModel& policy, const seqmodel::SequenceModel& base,
                                const std::vector<RLExample>& examples, const RLConfig& cfg,
                                const goalkit::Schema& schema) {
  cfg.validate();
  if (!base.frozen()) throw ConfigError("rl: base model must be frozen");
  if (policy.frozen()) throw ContractError("rl: policy is frozen");
  if (examples.empty()) throw ConfigError("rl: no training examples");
  if (!(policy.vocabulary() == base.vocabulary()))
    throw ConfigError("rl: policy and base vocabularies differ");

  const std::size_t v = policy.vocabulary().size();
  const double lambda = cfg.kl_coefficient;
  const double step_size = cfg.learning_rate / (1.0 + cfg.learning_rate * lambda);
  seqmodel::DecodeConfig rollout_cfg;
  rollout_cfg.max_length = cfg.max_length;
  rollout_cfg.top_k = v;

  struct Rollout {
    const RLExample* example = nullptr;
    std::vector<int> ids;
    double reward = 0;
    double kl = 0;
    std::vector<double> old_lp;
    std::vector<std::vector<double>> base_lp;
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::optional<double> baseline;
  std::vector<TraceEntry> trace;
  std::vector<double> lp;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<Rollout> batch(cfg.batch_size);
    double reward_sum = 0, kl_sum = 0;
    for (auto& r : batch) {
      if (cursor == order.size()) {
        order.resize(examples.size());
        std::iota(order.begin(), order.end(), 0);
        text::shuffle(order, rng);
        cursor = 0;
      }
      r.example = &examples[order[cursor++]];
      auto pctx = policy.condition(r.example->source);
      auto bctx = base.condition(r.example->source);
      r.ids = seqmodel::sample_ids(policy, *pctx, rollout_cfg, rng);
      r.reward = reward(policy.vocabulary().decode(r.ids), r.example->gold_goal_text,
                        r.example->reference, cfg.reward_metric, schema);
      r.base_lp.resize(r.ids.size() + 1);
      for (std::size_t t = 0; t <= r.ids.size(); ++t) {
        auto prefix = std::span<const int>(r.ids.data(), t);
        policy.next_log_probs(*pctx, prefix, lp);
        base.next_log_probs(*bctx, prefix, r.base_lp[t]);
        int y = t < r.ids.size() ? r.ids[t] : seqmodel::Vocabulary::kEos;
        r.old_lp.push_back(lp[static_cast<std::size_t>(y)]);
        double kl = 0;
        for (std::size_t k = 0; k < v; ++k) kl += std::exp(lp[k]) * (lp[k] - r.base_lp[t][k]);
        r.kl += std::max(0.0, kl);
      }
      reward_sum += r.reward;
      kl_sum += r.kl;
    }
    const double n = static_cast<double>(batch.size());
    TraceEntry entry;
    entry.step = step;
    entry.mean_reward = reward_sum / n;
    entry.mean_kl = kl_sum / n;
    entry.objective = entry.mean_reward - lambda * entry.mean_kl;
    trace.push_back(entry);

    if (!baseline) baseline = entry.mean_reward;
    for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
      std::vector<seqmodel::SequenceGradient> grads;
      grads.reserve(batch.size());
      for (const auto& r : batch) {
        const double advantage = r.reward - *baseline;
        auto pctx = policy.condition(r.example->source);
        seqmodel::SequenceGradient g{r.example->source, r.ids, {}};
        g.d_logits.resize(r.ids.size() + 1);
        for (std::size_t t = 0; t <= r.ids.size(); ++t) {
          policy.next_log_probs(*pctx, std::span<const int>(r.ids.data(), t), lp);
          const auto& lb = r.base_lp[t];
          int y = t < r.ids.size() ? r.ids[t] : seqmodel::Vocabulary::kEos;
          const double ratio = std::exp(lp[static_cast<std::size_t>(y)] - r.old_lp[t]);
          const bool clipped = (advantage > 0 && ratio > 1 + cfg.ppo_clip) ||
                               (advantage < 0 && ratio < 1 - cfg.ppo_clip);
          const double coef = clipped ? 0.0 : advantage * ratio;
          double kl = 0;
          for (std::size_t k = 0; k < v; ++k) kl += std::exp(lp[k]) * (lp[k] - lb[k]);
          auto& d = g.d_logits[t];
          d.resize(v);
          for (std::size_t k = 0; k < v; ++k) {
            const double p = std::exp(lp[k]);
            d[k] = (-coef * p - lambda * p * (lp[k] - lb[k] - kl)) / n;
          }
          d[static_cast<std::size_t>(y)] += coef / n;
        }
        grads.push_back(std::move(g));
      }
      policy.apply_gradients(grads, step_size);
    }
    *baseline = cfg.baseline_momentum * *baseline + (1 - cfg.baseline_momentum) * entry.mean_reward;
  }
  return trace;
}

double expected_reward(const seqmodel::SequenceModel& policy, const std::vector<RLExample>& examples,
                       const seqmodel::DecodeConfig& decode, std::size_t samples,
                       evalkit::RougeMetric metric, const goalkit::Schema& schema) {
  if (examples.empty() || samples == 0) throw ConfigError("expected_reward: nothing to evaluate");
  double sum = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto ctx = policy.condition(examples[i].source);
    for (std::size_t s = 0; s < samples; ++s) {
      std::mt19937_64 rng(text::mix_seed(decode.seed, i * samples + s));
      auto ids = seqmodel::sample_ids(policy, *ctx, decode, rng);
      sum += reward(policy.vocabulary().decode(ids), examples[i].gold_goal_text,
                    examples[i].reference, metric, schema);
    }
  }
  return sum / static_cast<double>(examples.size() * samples);
}

// --- inference ---------------------------------------------------------------------------------------

nlohmann::json GoalSummary::to_json() const {
  return {{"partial_goal_text", partial_goal_text},
          {"instruction", goalkit::to_string(instruction)},
          {"full_goal_text", full_goal_text},
          {"full_frame", goalkit::frame_to_json(full_frame)},
          {"raw", raw},
          {"fallback", fallback},
          {"attempts", attempts},
          {"warnings", warnings}};
}

GoalSummary summarize(const seqmodel::SequenceModel& policy, const corpus::WeekSession& session,
                      const goalkit::GoalFrame& previous_goal, const SummarizeOptions& options,
                      const goalkit::Schema& schema) {
  if (session.turns.empty()) throw ConfigError("summarize: session has no turns");
  if (options.max_attempts == 0) throw ConfigError("summarize: max_attempts must be positive");
  const std::string source = dialogue_source(session);
  GoalSummary out;
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    seqmodel::DecodeConfig cfg = options.decode;
    if (attempt > 0) cfg.seed = text::mix_seed(options.decode.seed, attempt);
    out.raw = seqmodel::sample(policy, source, cfg);
    out.attempts = attempt + 1;
    auto parsed = parse_protocol(out.raw);
    if (!parsed) continue;
    try {
      auto result = goalkit::execute(parsed->partial, parsed->instruction, previous_goal, schema);
      out.partial_goal_text = parsed->partial;
      out.instruction = parsed->instruction;
      out.full_goal_text = std::move(result.text);
      out.full_frame = std::move(result.frame);
      out.warnings = std::move(result.warnings);
      return out;
    } catch (const goalkit::UnitMismatchError& e) {
      out.warnings.push_back(e.what());
    }
  }
  out.fallback = true;
  out.partial_goal_text = out.raw;
  out.instruction = goalkit::Instruction::pass();
  auto result = goalkit::execute(out.raw, out.instruction, previous_goal, schema);
  out.full_goal_text = std::move(result.text);
  out.full_frame = std::move(result.frame);
  return out;
}

std::map<corpus::SessionKey, GoalSummary> summarize_corpus(const seqmodel::SequenceModel& policy,
                                                           const corpus::DialogueCorpus& corpus,
                                                           const SummarizeOptions& options,
                                                           const goalkit::Schema& schema) {
  std::map<corpus::SessionKey, GoalSummary> out;
  for (const auto& s : corpus.sessions()) {
    goalkit::GoalFrame previous;
    auto it = out.find({s.conversation_id, s.week - 1});
    if (it != out.end()) previous = it->second.full_frame;
    SummarizeOptions opts = options;
    opts.decode.seed = text::mix_seed(options.decode.seed, text::fnv1a64(corpus::to_string(s.key())));
    out.emplace(s.key(), summarize(policy, s, previous, opts, schema));
  }
  return out;
}

}  // namespace coachpipe::summarizer

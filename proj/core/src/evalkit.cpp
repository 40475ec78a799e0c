#include "coachpipe/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "coachpipe/text.hpp"

namespace coachpipe::evalkit {

namespace {

using nlohmann::json;

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                   toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t clipped_overlap(const std::map<Ngram, std::size_t>& cand,
                            const std::map<Ngram, std::size_t>& ref) {
  std::size_t overlap = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

PRF make_prf(double matched, double cand_total, double ref_total) {
  PRF s;
  if (cand_total > 0) s.precision = matched / cand_total;
  if (ref_total > 0) s.recall = matched / ref_total;
  if (s.precision + s.recall > 0)
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

void require_paired(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": inputs have different lengths");
  if (a == 0) throw ConfigError(std::string(what) + ": no items");
}

}  // namespace

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    bool keep = c >= 0x80 || std::isalnum(c);
    if (keep) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// --- frames ---------------------------------------------------------------------------

bool frame_matches(const goalkit::GoalFrame& predicted, const goalkit::GoalFrame& gold,
                   const goalkit::Schema& schema) {
  for (const auto& spec : schema.slots()) {
    const std::string* p = predicted.get(spec.name);
    const std::string* g = gold.get(spec.name);
    if (!p && !g) continue;
    if (!p || !g) return false;
    if (goalkit::canonical_value(spec.name, *p, schema) !=
        goalkit::canonical_value(spec.name, *g, schema))
      return false;
  }
  return true;
}

double frame_correctness(const std::vector<std::string>& predictions,
                         const std::vector<goalkit::GoalFrame>& golds,
                         const goalkit::Schema& schema) {
  require_paired(predictions.size(), golds.size(), "frame_correctness");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (frame_matches(goalkit::extract_frame(predictions[i], schema), golds[i], schema)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

// --- ROUGE ----------------------------------------------------------------------------

std::optional<RougeMetric> parse_rouge_metric(std::string_view name) {
  if (name == "rouge_l") return RougeMetric::RougeL;
  if (name == "rouge_1") return RougeMetric::Rouge1;
  if (name == "rouge_2") return RougeMetric::Rouge2;
  return std::nullopt;
}

std::string_view to_string(RougeMetric m) {
  switch (m) {
    case RougeMetric::RougeL: return "rouge_l";
    case RougeMetric::Rouge1: return "rouge_1";
    case RougeMetric::Rouge2: return "rouge_2";
  }
  return "rouge_l";
}

PRF rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
  auto c = metric_tokens(candidate);
  auto r = metric_tokens(reference);
  if (c.empty() && r.empty()) return {1.0, 1.0, 1.0};
  auto cc = ngram_counts(c, static_cast<std::size_t>(n));
  auto rc = ngram_counts(r, static_cast<std::size_t>(n));
  double cand_total = c.size() >= static_cast<std::size_t>(n) ? static_cast<double>(c.size() - n + 1) : 0;
  double ref_total = r.size() >= static_cast<std::size_t>(n) ? static_cast<double>(r.size() - n + 1) : 0;
  return make_prf(static_cast<double>(clipped_overlap(cc, rc)), cand_total, ref_total);
}

PRF rouge_l(std::string_view candidate, std::string_view reference) {
  auto c = metric_tokens(candidate);
  auto r = metric_tokens(reference);
  if (c.empty() && r.empty()) return {1.0, 1.0, 1.0};
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return make_prf(static_cast<double>(prev[r.size()]), static_cast<double>(c.size()),
                  static_cast<double>(r.size()));
}

double rouge(RougeMetric metric, std::string_view candidate, std::string_view reference) {
  switch (metric) {
    case RougeMetric::RougeL: return rouge_l(candidate, reference).f1;
    case RougeMetric::Rouge1: return rouge_n(candidate, reference, 1).f1;
    case RougeMetric::Rouge2: return rouge_n(candidate, reference, 2).f1;
  }
  return 0.0;
}

// --- BLEU -------------------------------------------------------------------------------

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int k = 0; k < 4; ++k) {
    matches[k] += o.matches[k];
    totals[k] += o.totals[k];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

BleuStats bleu_stats(std::string_view candidate, std::string_view reference) {
  auto c = metric_tokens(candidate);
  auto r = metric_tokens(reference);
  BleuStats s;
  s.candidate_length = c.size();
  s.reference_length = r.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    s.totals[n - 1] = c.size() >= n ? c.size() - n + 1 : 0;
    s.matches[n - 1] = clipped_overlap(ngram_counts(c, n), ngram_counts(r, n));
  }
  return s;
}

double bleu_n(const BleuStats& s, int n, const BleuOptions& options) {
  if (n < 1 || n > 4) throw ConfigError("bleu_n: order must be 1..4");
  if (s.candidate_length == 0) return 0.0;
  double log_sum = 0;
  for (int k = 0; k < n; ++k) {
    double m = static_cast<double>(s.matches[k]);
    double t = static_cast<double>(s.totals[k]);
    if (options.smooth && k > 0) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return 0.0;
    log_sum += std::log(m / t);
  }
  double c = static_cast<double>(s.candidate_length);
  double r = static_cast<double>(s.reference_length);
  double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / n);
}

double bleu_avg(const BleuStats& stats, const BleuOptions& options) {
  double sum = 0;
  for (int n = 1; n <= 4; ++n) sum += bleu_n(stats, n, options);
  return sum / 4.0;
}

double bleu_avg(const std::vector<std::string>& candidates,
                const std::vector<std::string>& references, const BleuOptions& options) {
  require_paired(candidates.size(), references.size(), "bleu_avg");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += bleu_stats(candidates[i], references[i]);
  return bleu_avg(total, options);
}

// --- perplexity ---------------------------------------------------------------------------

LikelihoodStats likelihood(const seqmodel::SequenceModel& scorer, std::string_view response) {
  LikelihoodStats s;
  for (double lp : seqmodel::token_log_probs(scorer, "", response)) {
    s.nll_bits -= lp;
    ++s.tokens;
  }
  return s;
}

double perplexity(const LikelihoodStats& stats) {
  if (stats.tokens == 0) throw ConfigError("perplexity: no tokens to score");
  return std::exp2(stats.nll_bits / static_cast<double>(stats.tokens));
}

double perplexity(const std::vector<std::string>& responses, const seqmodel::SequenceModel& scorer) {
  if (!scorer.frozen()) throw ContractError("perplexity: scorer must be a frozen model");
  if (responses.empty()) throw ConfigError("perplexity: no responses");
  LikelihoodStats total;
  for (const auto& r : responses) {
    auto s = likelihood(scorer, r);
    total.nll_bits += s.nll_bits;
    total.tokens += s.tokens;
  }
  return perplexity(total);
}

// --- similarity -----------------------------------------------------------------------------

PRF similarity_prf(std::string_view candidate, std::string_view reference,
                   const TokenSimilarity& scorer) {
  auto c = metric_tokens(candidate);
  auto r = metric_tokens(reference);
  if (c.empty() && r.empty()) return {1.0, 1.0, 1.0};
  if (c.empty() || r.empty()) return {};
  std::vector<double> best_c(c.size(), 0.0), best_r(r.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      double s = scorer.similarity(c[i], r[j]);
      best_c[i] = std::max(best_c[i], s);
      best_r[j] = std::max(best_r[j], s);
    }
  }
  PRF out;
  for (double v : best_c) out.precision += v;
  for (double v : best_r) out.recall += v;
  out.precision /= static_cast<double>(c.size());
  out.recall /= static_cast<double>(r.size());
  if (out.precision + out.recall > 0)
    out.f1 = 2 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

double similarity_f1(const std::vector<std::string>& candidates,
                     const std::vector<std::string>& references, const TokenSimilarity* scorer) {
  if (!scorer)
    throw ConfigError(
        "similarity_f1: no token similarity scorer registered; set eval.similarity_kernel");
  require_paired(candidates.size(), references.size(), "similarity_f1");
  double sum = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    sum += similarity_prf(candidates[i], references[i], *scorer).f1;
  return sum / static_cast<double>(candidates.size());
}

// --- reports ----------------------------------------------------------------------------------

EvalReport aggregate(std::vector<ExampleRecord> records) {
  EvalReport report;
  if (records.empty()) {
    report.per_example = std::move(records);
    return report;
  }
  BleuStats bleu;
  LikelihoodStats lik;
  bool all_lik = true, all_sim = true, all_frame = true;
  double sim = 0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    bleu += r.bleu;
    if (r.likelihood) {
      lik.nll_bits += r.likelihood->nll_bits;
      lik.tokens += r.likelihood->tokens;
    } else {
      all_lik = false;
    }
    if (r.similarity_f1) sim += *r.similarity_f1;
    else all_sim = false;
    if (r.frame_correct) correct += *r.frame_correct ? 1 : 0;
    else all_frame = false;
  }
  const double n = static_cast<double>(records.size());
  report.bleu_avg = bleu_avg(bleu);
  if (all_lik && lik.tokens > 0) report.perplexity = perplexity(lik);
  if (all_sim) report.similarity_f1 = sim / n;
  if (all_frame) report.frame_correctness = static_cast<double>(correct) / n;
  report.per_example = std::move(records);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["frame_correctness"] = opt(frame_correctness);
  j["bleu_avg"] = opt(bleu_avg);
  j["perplexity"] = opt(perplexity);
  j["similarity_f1"] = opt(similarity_f1);
  j["items"] = per_example.size();
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : per_example) {
    nlohmann::ordered_json e;
    e["id"] = r.id;
    e["candidate"] = r.candidate;
    e["reference"] = r.reference;
    e["bleu"] = {{"matches", r.bleu.matches},
                 {"totals", r.bleu.totals},
                 {"candidate_length", r.bleu.candidate_length},
                 {"reference_length", r.bleu.reference_length}};
    if (r.likelihood)
      e["likelihood"] = {{"nll_bits", r.likelihood->nll_bits}, {"tokens", r.likelihood->tokens}};
    if (r.similarity_f1) e["similarity_f1"] = *r.similarity_f1;
    if (r.frame_correct) e["frame_correct"] = *r.frame_correct;
    rows.push_back(std::move(e));
  }
  j["per_example"] = std::move(rows);
  return nlohmann::json::parse(j.dump());
}

EvalReport evaluate_responses(const ResponseEvalInput& input, const seqmodel::SequenceModel* scorer,
                              const TokenSimilarity* similarity) {
  require_paired(input.candidates.size(), input.references.size(), "evaluate_responses");
  if (!input.ids.empty() && input.ids.size() != input.candidates.size())
    throw ConfigError("evaluate_responses: ids and candidates differ in length");
  if (scorer && !scorer->frozen())
    throw ContractError("evaluate_responses: perplexity scorer must be frozen");
  std::vector<ExampleRecord> records;
  records.reserve(input.candidates.size());
  for (std::size_t i = 0; i < input.candidates.size(); ++i) {
    ExampleRecord r;
    r.id = input.ids.empty() ? std::to_string(i) : input.ids[i];
    r.candidate = input.candidates[i];
    r.reference = input.references[i];
    r.bleu = bleu_stats(r.candidate, r.reference);
    if (scorer) r.likelihood = likelihood(*scorer, r.candidate);
    if (similarity) r.similarity_f1 = similarity_prf(r.candidate, r.reference, *similarity).f1;
    records.push_back(std::move(r));
  }
  return aggregate(std::move(records));
}

// --- A/B ---------------------------------------------------------------------------------------

std::vector<ABRecord> export_ab_pairs(const std::vector<std::string>& system_a,
                                      const std::vector<std::string>& system_b,
                                      const std::vector<std::string>& contexts,
                                      std::uint64_t seed) {
  if (system_a.size() != system_b.size() || system_a.size() != contexts.size())
    throw ConfigError("export_ab_pairs: inputs have different lengths");
  std::mt19937_64 rng(seed);
  std::vector<ABRecord> out;
  out.reserve(system_a.size());
  for (std::size_t i = 0; i < system_a.size(); ++i) {
    bool swap = text::uniform_index(rng, 2) == 1;
    ABRecord r;
    r.item_id = "item-" + std::to_string(i);
    r.context = contexts[i];
    r.response_1 = swap ? system_b[i] : system_a[i];
    r.response_2 = swap ? system_a[i] : system_b[i];
    r.blinding_key = swap ? "BA" : "AB";
    out.push_back(std::move(r));
  }
  return out;
}

void write_ab_jsonl(const std::vector<ABRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["item_id"] = r.item_id;
    j["context"] = r.context;
    j["response_1"] = r.response_1;
    j["response_2"] = r.response_2;
    j["blinding_key"] = r.blinding_key;
    out << j.dump() << '\n';
  }
}

std::vector<ABRecord> read_ab_jsonl(std::istream& in) {
  std::vector<ABRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    try {
      auto j = json::parse(line);
      ABRecord r{j.at("item_id").get<std::string>(), j.at("context").get<std::string>(),
                 j.at("response_1").get<std::string>(), j.at("response_2").get<std::string>(),
                 j.at("blinding_key").get<std::string>()};
      if (r.blinding_key != "AB" && r.blinding_key != "BA")
        throw ValidationError("blinding_key", "must be AB or BA", n);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return out;
}

std::optional<ABChoice> parse_ab_choice(std::string_view s) {
  if (s == "response_1" || s == "1") return ABChoice::Response1;
  if (s == "response_2" || s == "2") return ABChoice::Response2;
  if (s == "tie") return ABChoice::Tie;
  if (s == "neither") return ABChoice::Neither;
  return std::nullopt;
}

std::vector<ABVote> read_votes_jsonl(std::istream& in) {
  std::vector<ABVote> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(n, e.what());
    }
    if (!j.contains("item_id") || !j["item_id"].is_string())
      throw ValidationError("item_id", "missing", n);
    if (!j.contains("choice") || !j["choice"].is_string())
      throw ValidationError("choice", "missing", n);
    auto c = parse_ab_choice(j["choice"].get<std::string>());
    if (!c) throw ValidationError("choice", "must be response_1, response_2, tie or neither", n);
    out.push_back({j["item_id"].get<std::string>(), *c});
  }
  return out;
}

ABSummary summarize_votes(const std::vector<ABRecord>& records, const std::vector<ABVote>& votes) {
  std::map<std::string, const ABRecord*, std::less<>> by_id;
  for (const auto& r : records) by_id[r.item_id] = &r;
  ABSummary s;
  for (const auto& v : votes) {
    auto it = by_id.find(v.item_id);
    if (it == by_id.end()) throw ValidationError("item_id", "unknown item '" + v.item_id + "'");
    bool a_first = it->second->blinding_key == "AB";
    ++s.items;
    switch (v.choice) {
      case ABChoice::Response1: ++(a_first ? s.a_wins : s.b_wins); break;
      case ABChoice::Response2: ++(a_first ? s.b_wins : s.a_wins); break;
      case ABChoice::Tie: ++s.ties; break;
      case ABChoice::Neither: ++s.neither; break;
    }
  }
  if (s.items > 0) {
    s.preference_delta = 100.0 * (static_cast<double>(s.a_wins) - static_cast<double>(s.b_wins)) /
                         static_cast<double>(s.items);
  }
  return s;
}

nlohmann::json ABSummary::to_json() const {
  return {{"items", items},   {"a_wins", a_wins},   {"b_wins", b_wins},
          {"ties", ties},     {"neither", neither}, {"preference_delta", preference_delta}};
}

}  // namespace coachpipe::evalkit

#include "oracles.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "coachpipe/errors.hpp"

namespace coachpipe::testing {

std::vector<std::string> oracle_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_token_byte = [](unsigned char c) {
    return c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  };
  while (i < text.size()) {
    while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      std::string tok = text.substr(start, i - start);
      for (auto& ch : tok)
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch + 32);
      out.push_back(tok);
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> ngrams(const std::vector<std::string>& toks, int n) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
    out.emplace_back(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i) + n);
  return out;
}

std::size_t paired_overlap(const std::vector<std::vector<std::string>>& a,
                           const std::vector<std::vector<std::string>>& b) {
  std::vector<bool> used(b.size(), false);
  std::size_t hits = 0;
  for (const auto& g : a) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (!used[j] && b[j] == g) {
        used[j] = true;
        ++hits;
        break;
      }
    }
  }
  return hits;
}

OraclePRF prf(double overlap, double cand, double ref) {
  OraclePRF out;
  out.precision = cand > 0 ? overlap / cand : 0;
  out.recall = ref > 0 ? overlap / ref : 0;
  out.f1 = out.precision + out.recall > 0 ? 2 * out.precision * out.recall / (out.precision + out.recall) : 0;
  return out;
}

}  // namespace

OraclePRF oracle_rouge_n(const std::string& candidate, const std::string& reference, int n) {
  auto c = oracle_tokens(candidate);
  auto r = oracle_tokens(reference);
  if (c.empty() && r.empty()) return {1, 1, 1};
  auto cg = ngrams(c, n);
  auto rg = ngrams(r, n);
  return prf(static_cast<double>(paired_overlap(cg, rg)), static_cast<double>(cg.size()),
             static_cast<double>(rg.size()));
}

OraclePRF oracle_rouge_l(const std::string& candidate, const std::string& reference) {
  auto c = oracle_tokens(candidate);
  auto r = oracle_tokens(reference);
  if (c.empty() && r.empty()) return {1, 1, 1};
  std::vector<std::vector<int>> memo(c.size() + 1, std::vector<int>(r.size() + 1, -1));
  std::function<int(std::size_t, std::size_t)> lcs = [&](std::size_t i, std::size_t j) -> int {
    if (i == c.size() || j == r.size()) return 0;
    int& m = memo[i][j];
    if (m >= 0) return m;
    if (c[i] == r[j]) return m = 1 + lcs(i + 1, j + 1);
    return m = std::max(lcs(i + 1, j), lcs(i, j + 1));
  };
  return prf(lcs(0, 0), static_cast<double>(c.size()), static_cast<double>(r.size()));
}

double oracle_bleu_avg(const std::vector<std::string>& candidates,
                       const std::vector<std::string>& references) {
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double clen = 0, rlen = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto c = oracle_tokens(candidates[i]);
    auto r = oracle_tokens(references[i]);
    clen += static_cast<double>(c.size());
    rlen += static_cast<double>(r.size());
    for (int n = 1; n <= 4; ++n) {
      auto cg = ngrams(c, n);
      matches[n - 1] += static_cast<double>(paired_overlap(cg, ngrams(r, n)));
      totals[n - 1] += static_cast<double>(cg.size());
    }
  }
  if (clen == 0) return 0;
  double bp = clen > rlen ? 1.0 : std::exp(1.0 - rlen / clen);
  double sum = 0;
  for (int n = 1; n <= 4; ++n) {
    double product = 1;
    bool zero = false;
    for (int k = 0; k < n; ++k) {
      if (matches[k] == 0 || totals[k] == 0) zero = true;
      else product *= matches[k] / totals[k];
    }
    if (!zero) sum += 100.0 * bp * std::pow(product, 1.0 / n);
  }
  return sum / 4;
}

std::string random_sentence(std::mt19937_64& rng, std::size_t max_words) {
  static const char* pool[] = {"walk", "the", "dog", "Steps", "5000", "a", "day", "on",
                               "monday", "I", "will", "run", "park", "today", "great", "goal"};
  std::uniform_int_distribution<std::size_t> len(0, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(pool) - 1);
  std::uniform_int_distribution<int> punct(0, 5);
  std::string out;
  std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += pool[pick(rng)];
    if (punct(rng) == 0) out += ',';
  }
  return out;
}

goalkit::GoalFrame random_frame(std::mt19937_64& rng, double density, const goalkit::Schema& schema) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  goalkit::GoalFrame f;
  for (const auto& spec : schema.slots()) {
    if (spec.lexicon.empty() || coin(rng) >= density) continue;
    std::uniform_int_distribution<std::size_t> pick(0, spec.lexicon.size() - 1);
    f.set(spec.name, spec.lexicon[pick(rng)]);
  }
  return f;
}

namespace {

struct TableContext final : seqmodel::SourceContext {
  std::string source;
};

}  // namespace

void TableModel::make_deterministic(const std::string& source, const std::string& target) {
  auto ids = vocabulary().encode(target);
  ids.push_back(seqmodel::Vocabulary::kEos);
  rows_.emplace_back(source, std::move(ids));
}

std::unique_ptr<seqmodel::SourceContext> TableModel::condition(std::string_view source) const {
  auto ctx = std::make_unique<TableContext>();
  ctx->source = std::string(source);
  return ctx;
}

void TableModel::next_log_probs(const seqmodel::SourceContext& ctx, std::span<const int> prefix,
                                std::vector<double>& out) const {
  const auto& source = static_cast<const TableContext&>(ctx).source;
  const std::size_t v = vocabulary().size();
  out.assign(v, -std::log(static_cast<double>(v)));
  for (const auto& [s, ids] : rows_) {
    if (s != source || prefix.size() >= ids.size()) continue;
    out.assign(v, -std::numeric_limits<double>::infinity());
    out[static_cast<std::size_t>(ids[prefix.size()])] = 0.0;
    return;
  }
}

std::unique_ptr<seqmodel::SequenceModel> TableModel::clone() const { return std::make_unique<TableModel>(*this); }

seqmodel::FitReport TableModel::do_fit(const std::vector<seqmodel::TrainPair>&, const seqmodel::TrainConfig&) {
  throw ContractError("table model is not trainable");
}

}  // namespace coachpipe::testing

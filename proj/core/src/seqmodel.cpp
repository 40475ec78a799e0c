#include "coachpipe/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "coachpipe/text.hpp"

namespace coachpipe::seqmodel {

namespace {
constexpr std::string_view kUnkToken = "<unk>";
constexpr std::string_view kEosToken = "</s>";
}  // namespace

std::vector<std::string> tokenize(std::string_view text) { return text::split_whitespace(text); }

// --- Vocabulary -------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kUnkToken));
  add(std::string(kEosToken));
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts,
                             const std::vector<std::string>& extra) {
  Vocabulary v;
  for (const auto& t : extra) v.add(t);
  for (const auto& text : texts) {
    for (const auto& tok : tokenize(text)) v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.contains(t)) throw ConfigError("vocabulary: duplicate token '" + t + "'");
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
      throw ConfigError("vocabulary: tokens must be non-empty and whitespace-free");
    v.add(t);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

// --- configs ------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"seed", seed}};
}

void DecodeConfig::validate(std::size_t vocab_size) const {
  if (max_length < 1) throw ConfigError("decode: max_length must be >= 1");
  if (top_k < 1) throw ConfigError("decode: top_k must be >= 1");
  if (top_k > vocab_size)
    throw ConfigError("decode: top_k " + std::to_string(top_k) + " exceeds vocabulary size " +
                      std::to_string(vocab_size));
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("decode: top_p must lie in (0, 1]");
}

// --- SequenceModel ------------------------------------------------------------------

FitReport SequenceModel::fit(const std::vector<TrainPair>& pairs, const TrainConfig& cfg) {
  if (frozen_) throw ContractError("cannot fit a frozen model");
  if (pairs.empty()) throw ConfigError("fit: no training pairs");
  if (!(cfg.epochs >= 0.0)) throw ConfigError("fit: epochs must be non-negative");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("fit: learning_rate must be positive");
  if (cfg.batch_size == 0) throw ConfigError("fit: batch_size must be positive");
  FitReport report = do_fit(pairs, cfg);
  if (report.examples > 0) {
    nlohmann::json entry = cfg.to_json();
    entry["pairs"] = pairs.size();
    entry["steps"] = report.steps;
    training_history_.push_back(std::move(entry));
  }
  return report;
}

void SequenceModel::apply_gradients(std::span<const SequenceGradient> grads, double step) {
  if (frozen_) throw ContractError("cannot update a frozen model");
  if (grads.empty() || step == 0.0) return;
  do_apply_gradients(grads, step);
}

std::unique_ptr<SequenceModel> SequenceModel::clone_frozen() const {
  auto copy = clone();
  copy->freeze();
  return copy;
}

void SequenceModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  vocab_.save(dir / "vocab.txt");
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "params.bin").string());
    save_params(out);
  }
  nlohmann::json m = meta();
  m["backend"] = backend_id();
  m["frozen"] = frozen_;
  m["vocab_size"] = vocab_.size();
  m["training"] = training_history_;
  std::ofstream out(dir / "meta.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

std::unique_ptr<SequenceModel> load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw MissingArtifactError((dir / "meta.json").string(), "a training subcommand");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + dir.string() + ": " + e.what());
  }
  std::string backend = m.value("backend", "");
  if (backend == ReferenceModel::kBackendId) return ReferenceModel::load(dir);
  throw ConfigError("checkpoint " + dir.string() + ": unknown backend '" + backend + "'");
}

// --- scoring and decoding ------------------------------------------------------------

std::vector<double> token_log_probs(const SequenceModel& model, std::string_view source,
                                    std::string_view target) {
  auto ctx = model.condition(source);
  std::vector<int> ids = model.vocabulary().encode(target);
  std::vector<double> out;
  out.reserve(ids.size());
  std::vector<double> lp;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    model.next_log_probs(*ctx, std::span<const int>(ids.data(), i), lp);
    out.push_back(lp[static_cast<std::size_t>(ids[i])] / std::log(2.0));
  }
  return out;
}

double sequence_log_prob(const SequenceModel& model, const SourceContext& ctx,
                         std::span<const int> target, bool include_eos) {
  double total = 0;
  std::vector<double> lp;
  std::size_t steps = target.size() + (include_eos ? 1 : 0);
  for (std::size_t i = 0; i < steps; ++i) {
    model.next_log_probs(ctx, target.subspan(0, i), lp);
    int y = i < target.size() ? target[i] : Vocabulary::kEos;
    total += lp[static_cast<std::size_t>(y)];
  }
  return total;
}

std::vector<int> sample_ids(const SequenceModel& model, const SourceContext& ctx,
                            const DecodeConfig& cfg, std::mt19937_64& rng) {
  const std::size_t v = model.vocabulary().size();
  cfg.validate(v);
  std::vector<int> out;
  std::vector<double> lp;
  std::vector<int> order(v);
  std::vector<double> probs;
  while (out.size() < cfg.max_length) {
    model.next_log_probs(ctx, out, lp);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = std::min(cfg.top_k, v);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](int a, int b) {
                        if (lp[a] != lp[b]) return lp[a] > lp[b];
                        return a < b;
                      });
    probs.clear();
    double mass = 0;
    for (std::size_t i = 0; i < k; ++i) {
      double p = std::exp(lp[order[i]]);
      probs.push_back(p);
      mass += p;
    }
    // Nucleus: smallest prefix (of the top-k) holding top_p of its mass.
    if (cfg.top_p < 1.0) {
      double acc = 0;
      std::size_t keep = 0;
      while (keep < probs.size()) {
        acc += probs[keep++];
        if (acc >= cfg.top_p * mass) break;
      }
      probs.resize(keep);
      mass = acc;
    }
    int next = order[0];
    if (probs.size() > 1) {
      double u = text::uniform01(rng) * mass;
      double acc = 0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        next = order[i];
        if (u < acc) break;
      }
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
  }
  return out;
}

std::string sample(const SequenceModel& model, std::string_view source, const DecodeConfig& cfg) {
  auto ctx = model.condition(source);
  std::mt19937_64 rng(cfg.seed);
  return model.vocabulary().decode(sample_ids(model, *ctx, cfg, rng));
}

std::string greedy(const SequenceModel& model, std::string_view source, std::size_t max_length) {
  DecodeConfig cfg;
  cfg.max_length = max_length;
  cfg.top_k = 1;
  return sample(model, source, cfg);
}

double sequence_kl(const SequenceModel& p, const SequenceModel& q, std::string_view source,
                   std::span<const int> target) {
  auto cp = p.condition(source);
  auto cq = q.condition(source);
  std::vector<double> lp, lq;
  double total = 0;
  for (std::size_t i = 0; i <= target.size(); ++i) {
    p.next_log_probs(*cp, target.subspan(0, i), lp);
    q.next_log_probs(*cq, target.subspan(0, i), lq);
    double kl = 0;
    for (std::size_t y = 0; y < lp.size(); ++y) kl += std::exp(lp[y]) * (lp[y] - lq[y]);
    total += std::max(0.0, kl);
  }
  return total / static_cast<double>(target.size() + 1);
}

}  // namespace coachpipe::seqmodel

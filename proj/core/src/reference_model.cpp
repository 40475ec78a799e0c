#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "coachpipe/seqmodel.hpp"
#include "coachpipe/text.hpp"

namespace coachpipe::seqmodel {

namespace {

struct ReferenceContext final : SourceContext {
  std::vector<int> source;
  /// Sorted distinct source ids, the copy candidates.
  std::vector<int> distinct;
  /// Mean of the source rows.
  std::vector<double> source_logits;
};

template <typename Key>
std::vector<double>& row(std::unordered_map<Key, std::vector<double>>& m, Key key,
                         std::size_t width) {
  auto it = m.find(key);
  if (it == m.end()) it = m.emplace(key, std::vector<double>(width, 0.0)).first;
  return it->second;
}

template <typename Key>
const std::vector<double>* find_row(const std::unordered_map<Key, std::vector<double>>& m,
                                    Key key) {
  auto it = m.find(key);
  return it == m.end() ? nullptr : &it->second;
}

void log_softmax(std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  double sum = 0;
  for (double v : x) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  for (double& v : x) v -= lse;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_vec(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("params.bin: truncated");
  return v;
}
std::vector<double> read_vec(std::istream& in) {
  std::uint64_t n = read_u64(in);
  if (n > (1ull << 32)) throw Error("params.bin: corrupt length");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error("params.bin: truncated");
  return v;
}

template <typename Key>
void write_rows(std::ostream& out, const std::unordered_map<Key, std::vector<double>>& m) {
  std::vector<Key> keys;
  keys.reserve(m.size());
  for (const auto& [k, _] : m) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  write_u64(out, keys.size());
  for (Key k : keys) {
    write_u64(out, static_cast<std::uint64_t>(k));
    write_vec(out, m.at(k));
  }
}

template <typename Key>
void read_rows(std::istream& in, std::unordered_map<Key, std::vector<double>>& m,
               std::size_t width) {
  std::uint64_t n = read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    Key k = static_cast<Key>(read_u64(in));
    auto v = read_vec(in);
    if (v.size() != width) throw Error("params.bin: row width mismatch");
    m.emplace(k, std::move(v));
  }
}

}  // namespace

struct ReferenceModel::Grad {
  std::vector<double> bias;
  std::unordered_map<int, std::vector<double>> bigram;
  std::unordered_map<std::uint32_t, std::vector<double>> trigram;
  std::unordered_map<int, std::vector<double>> source;
  std::vector<double> copy;
};

nlohmann::json ReferenceModelOptions::to_json() const {
  return {{"trigram_buckets", trigram_buckets},
          {"use_source", use_source},
          {"use_copy", use_copy},
          {"adagrad_eps", adagrad_eps},
          {"l2", l2}};
}

ReferenceModelOptions ReferenceModelOptions::from_json(const nlohmann::json& j) {
  ReferenceModelOptions o;
  o.trigram_buckets = j.value("trigram_buckets", o.trigram_buckets);
  o.use_source = j.value("use_source", o.use_source);
  o.use_copy = j.value("use_copy", o.use_copy);
  o.adagrad_eps = j.value("adagrad_eps", o.adagrad_eps);
  o.l2 = j.value("l2", o.l2);
  if (o.trigram_buckets == 0) throw ConfigError("reference model: trigram_buckets must be > 0");
  return o;
}

ReferenceModel::ReferenceModel(Vocabulary vocab, ReferenceModelOptions options)
    : SequenceModel(std::move(vocab)), options_(options) {
  if (options_.trigram_buckets == 0)
    throw ConfigError("reference model: trigram_buckets must be > 0");
  const std::size_t v = vocab_.size();
  bias_.assign(v, 0.0);
  bias_g2_.assign(v, 0.0);
  copy_.assign(v + 1, 0.0);
  copy_g2_.assign(v + 1, 0.0);
}

int ReferenceModel::prev_key(std::span<const int> prefix) const {
  return prefix.empty() ? 0 : prefix.back() + 1;
}

std::uint32_t ReferenceModel::trigram_key(std::span<const int> prefix) const {
  std::uint64_t a = prefix.size() >= 2 ? static_cast<std::uint64_t>(prefix[prefix.size() - 2] + 1) : 0;
  std::uint64_t b = prefix.empty() ? 0 : static_cast<std::uint64_t>(prefix.back() + 1);
  return static_cast<std::uint32_t>(text::mix_seed(a * 1000003ull + b) % options_.trigram_buckets);
}

std::vector<double>& ReferenceModel::bigram_row(int prev) {
  return row(bigram_, prev + 1, vocab_.size());
}

std::unique_ptr<SourceContext> ReferenceModel::condition(std::string_view source) const {
  auto ctx = std::make_unique<ReferenceContext>();
  ctx->source = vocab_.encode(source);
  ctx->distinct = ctx->source;
  std::sort(ctx->distinct.begin(), ctx->distinct.end());
  ctx->distinct.erase(std::unique(ctx->distinct.begin(), ctx->distinct.end()),
                      ctx->distinct.end());
  ctx->source_logits.assign(vocab_.size(), 0.0);
  if (options_.use_source && !ctx->source.empty()) {
    const double scale = 1.0 / static_cast<double>(ctx->source.size());
    for (int s : ctx->source) {
      if (const auto* r = find_row(source_, s)) {
        for (std::size_t y = 0; y < r->size(); ++y) ctx->source_logits[y] += scale * (*r)[y];
      }
    }
  }
  return ctx;
}

void ReferenceModel::logits(const SourceContext& base, std::span<const int> prefix,
                            std::vector<double>& out) const {
  const auto& ctx = static_cast<const ReferenceContext&>(base);
  const std::size_t v = vocab_.size();
  out.assign(bias_.begin(), bias_.end());
  const int pk = prev_key(prefix);
  if (const auto* r = find_row(bigram_, pk)) {
    for (std::size_t y = 0; y < v; ++y) out[y] += (*r)[y];
  }
  if (const auto* r = find_row(trigram_, trigram_key(prefix))) {
    for (std::size_t y = 0; y < v; ++y) out[y] += (*r)[y];
  }
  for (std::size_t y = 0; y < v; ++y) out[y] += ctx.source_logits[y];
  if (options_.use_copy) {
    const double gate = copy_[static_cast<std::size_t>(pk)];
    if (gate != 0.0) {
      for (int s : ctx.distinct) out[static_cast<std::size_t>(s)] += gate;
    }
  }
}

void ReferenceModel::next_log_probs(const SourceContext& ctx, std::span<const int> prefix,
                                    std::vector<double>& out) const {
  logits(ctx, prefix, out);
  log_softmax(out);
}

std::unique_ptr<SequenceModel> ReferenceModel::clone() const {
  return std::make_unique<ReferenceModel>(*this);
}

void ReferenceModel::accumulate(const SourceContext& base, std::span<const int> target,
                                std::span<const std::vector<double>> d_logits, Grad& g) const {
  const auto& ctx = static_cast<const ReferenceContext&>(base);
  const std::size_t v = vocab_.size();
  std::vector<double> total(v, 0.0);
  for (std::size_t i = 0; i < d_logits.size(); ++i) {
    const auto& d = d_logits[i];
    auto prefix = target.subspan(0, std::min(i, target.size()));
    const int pk = prev_key(prefix);
    auto& b = row(g.bigram, pk, v);
    auto& t = row(g.trigram, trigram_key(prefix), v);
    double copy_sum = 0;
    for (std::size_t y = 0; y < v; ++y) {
      g.bias[y] += d[y];
      b[y] += d[y];
      t[y] += d[y];
      total[y] += d[y];
    }
    for (int s : ctx.distinct) copy_sum += d[static_cast<std::size_t>(s)];
    g.copy[static_cast<std::size_t>(pk)] += copy_sum;
  }
  if (options_.use_source && !ctx.source.empty()) {
    const double scale = 1.0 / static_cast<double>(ctx.source.size());
    for (int s : ctx.source) {
      auto& r = row(g.source, s, v);
      for (std::size_t y = 0; y < v; ++y) r[y] += scale * total[y];
    }
  }
}

FitReport ReferenceModel::do_fit(const std::vector<TrainPair>& pairs, const TrainConfig& cfg) {
  FitReport report;
  const std::size_t n = pairs.size();
  const auto total = static_cast<std::size_t>(std::llround(cfg.epochs * static_cast<double>(n)));
  if (total == 0) return report;
  const std::size_t v = vocab_.size();

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      text::shuffle(order, rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  auto adagrad = [&](std::vector<double>& p, std::vector<double>& g2, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i] - options_.l2 * p[i];
      if (gi == 0.0) continue;
      g2[i] += gi * gi;
      p[i] += cfg.learning_rate * gi / (std::sqrt(g2[i]) + options_.adagrad_eps);
    }
  };

  std::vector<double> lp;
  std::vector<std::vector<double>> d_logits;
  for (std::size_t done = 0; done < total;) {
    const std::size_t batch = std::min(cfg.batch_size, total - done);
    Grad g;
    g.bias.assign(v, 0.0);
    g.copy.assign(v + 1, 0.0);
    double nll = 0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const TrainPair& pair = pairs[next_index()];
      auto ctx = condition(pair.source);
      std::vector<int> target = vocab_.encode(pair.target);
      d_logits.assign(target.size() + 1, {});
      for (std::size_t i = 0; i <= target.size(); ++i) {
        next_log_probs(*ctx, std::span<const int>(target.data(), i), lp);
        int y = i < target.size() ? target[i] : Vocabulary::kEos;
        nll -= lp[static_cast<std::size_t>(y)];
        auto& d = d_logits[i];
        d.resize(v);
        for (std::size_t k = 0; k < v; ++k) d[k] = -std::exp(lp[k]);
        d[static_cast<std::size_t>(y)] += 1.0;
      }
      tokens += target.size() + 1;
      accumulate(*ctx, target, d_logits, g);
    }
    // Mean over tokens in the batch.
    const double scale = 1.0 / static_cast<double>(tokens);
    auto scaled = [scale](std::vector<double>& x) {
      for (double& e : x) e *= scale;
    };
    scaled(g.bias);
    scaled(g.copy);
    adagrad(bias_, bias_g2_, g.bias);
    if (options_.use_copy) adagrad(copy_, copy_g2_, g.copy);
    for (auto& [k, r] : g.bigram) {
      scaled(r);
      adagrad(row(bigram_, k, v), row(bigram_g2_, k, v), r);
    }
    for (auto& [k, r] : g.trigram) {
      scaled(r);
      adagrad(row(trigram_, k, v), row(trigram_g2_, k, v), r);
    }
    for (auto& [k, r] : g.source) {
      scaled(r);
      adagrad(row(source_, k, v), row(source_g2_, k, v), r);
    }
    report.step_loss.push_back(nll * scale);
    ++report.steps;
    done += batch;
  }
  report.examples = total;
  return report;
}

void ReferenceModel::do_apply_gradients(std::span<const SequenceGradient> grads, double step) {
  const std::size_t v = vocab_.size();
  Grad g;
  g.bias.assign(v, 0.0);
  g.copy.assign(v + 1, 0.0);
  for (const auto& sg : grads) {
    if (sg.d_logits.size() > sg.target.size() + 1)
      throw ContractError("apply_gradients: more gradient steps than target positions");
    for (const auto& d : sg.d_logits) {
      if (d.size() != v) throw ContractError("apply_gradients: gradient width != vocabulary size");
    }
    auto ctx = condition(sg.source);
    accumulate(*ctx, sg.target, sg.d_logits, g);
  }
  auto sgd = [step](std::vector<double>& p, const std::vector<double>& d) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += step * d[i];
  };
  sgd(bias_, g.bias);
  if (options_.use_copy) sgd(copy_, g.copy);
  for (auto& [k, r] : g.bigram) sgd(row(bigram_, k, v), r);
  for (auto& [k, r] : g.trigram) sgd(row(trigram_, k, v), r);
  for (auto& [k, r] : g.source) sgd(row(source_, k, v), r);
}

void ReferenceModel::save_params(std::ostream& out) const {
  out.write("CPRM0001", 8);
  write_vec(out, bias_);
  write_vec(out, copy_);
  write_rows(out, bigram_);
  write_rows(out, trigram_);
  write_rows(out, source_);
}

nlohmann::json ReferenceModel::meta() const { return {{"options", options_.to_json()}}; }

std::unique_ptr<ReferenceModel> ReferenceModel::load(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  nlohmann::json m = nlohmann::json::parse(meta_in);
  auto model = std::make_unique<ReferenceModel>(Vocabulary::load(dir / "vocab.txt"),
                                                ReferenceModelOptions::from_json(m.value("options", nlohmann::json::object())));
  const std::size_t v = model->vocab_.size();
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw MissingArtifactError((dir / "params.bin").string(), "a training subcommand");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "CPRM0001", 8) != 0) throw Error("params.bin: bad header");
  model->bias_ = read_vec(in);
  model->copy_ = read_vec(in);
  if (model->bias_.size() != v || model->copy_.size() != v + 1)
    throw Error("params.bin: does not match vocab.txt");
  read_rows(in, model->bigram_, v);
  read_rows(in, model->trigram_, v);
  read_rows(in, model->source_, v);
  model->training_history_ = m.value("training", nlohmann::json::array());
  if (m.value("frozen", false)) model->freeze();
  return model;
}

}  // namespace coachpipe::seqmodel

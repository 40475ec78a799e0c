#include "coachpipe/unitgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "coachpipe/text.hpp"

namespace coachpipe::unitgen {

std::string_view to_string(DistanceMetric m) {
  return m == DistanceMetric::Cosine ? "cosine" : "squared_euclidean";
}

std::optional<DistanceMetric> parse_distance_metric(std::string_view s) {
  if (s == "squared_euclidean") return DistanceMetric::SquaredEuclidean;
  if (s == "cosine") return DistanceMetric::Cosine;
  return std::nullopt;
}

double distance(DistanceMetric metric, std::span<const double> a, std::span<const double> b) {
  if (metric == DistanceMetric::Cosine) return 1.0 - seqmodel::cosine(a, b);
  return seqmodel::squared_distance(a, b);
}

int nearest_centroid(const std::vector<std::vector<double>>& centroids, std::span<const double> point,
                     DistanceMetric metric) {
  if (centroids.empty()) throw ContractError("nearest_centroid: no centroids");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double d = distance(metric, centroids[c], point);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

std::vector<std::vector<double>> seed_plus_plus(const std::vector<std::vector<double>>& points,
                                                std::size_t k, DistanceMetric metric,
                                                std::mt19937_64& rng) {
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[text::uniform_index(rng, points.size())]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = distance(metric, centroids.back(), points[i]);
      d2[i] = std::min(d2[i], d * d);
      total += d2[i];
    }
    std::size_t pick = points.size();
    if (total > 0) {
      double u = text::uniform01(rng) * total;
      double acc = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0) continue;
        acc += d2[i];
        pick = i;
        if (acc > u) break;
      }
    }
    if (pick == points.size()) {
      // Distances collapsed under the metric (e.g. parallel vectors under
      // cosine): fall back to the first point not yet chosen.
      for (std::size_t i = 0; i < points.size() && pick == points.size(); ++i) {
        if (std::find(centroids.begin(), centroids.end(), points[i]) == centroids.end()) pick = i;
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

KMeansResult lloyd(const std::vector<std::vector<double>>& points,
                   std::vector<std::vector<double>> centroids, const KMeansOptions& opt) {
  const std::size_t dim = points.front().size();
  const std::size_t k = centroids.size();
  KMeansResult r;
  r.assignment.assign(points.size(), -1);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int c = nearest_centroid(centroids, points[i], opt.metric);
      if (c != r.assignment[i]) {
        r.assignment[i] = c;
        changed = true;
      }
    }
    r.iterations = it + 1;
    if (!changed && it > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto c = static_cast<std::size_t>(r.assignment[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster with the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < points.size(); ++i) {
          double d = distance(opt.metric, centroids[static_cast<std::size_t>(r.assignment[i])], points[i]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[c] = points[far];
        r.assignment[far] = static_cast<int>(c);
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }
  r.inertia = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    r.assignment[i] = nearest_centroid(centroids, points[i], opt.metric);
    r.inertia += distance(opt.metric, centroids[static_cast<std::size_t>(r.assignment[i])], points[i]);
  }
  r.centroids = std::move(centroids);
  return r;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, const KMeansOptions& options) {
  if (options.k == 0) throw ConfigError("kmeans: k must be positive");
  if (options.max_iterations == 0) throw ConfigError("kmeans: max_iterations must be positive");
  if (points.empty()) throw ConfigError("kmeans: no points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ConfigError("kmeans: points differ in dimension");
    for (double x : p)
      if (!std::isfinite(x)) throw ConfigError("kmeans: non-finite coordinate");
  }
  std::set<std::vector<double>> distinct(points.begin(), points.end());
  if (distinct.size() < options.k)
    throw ConfigError("kmeans: " + std::to_string(distinct.size()) + " distinct points for k = " +
                      std::to_string(options.k));

  std::mt19937_64 rng(options.seed);
  std::optional<KMeansResult> best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    auto result = lloyd(points, seed_plus_plus(points, options.k, options.metric, rng), options);
    if (!best || result.inertia < best->inertia) best = std::move(result);
  }
  return std::move(*best);
}

int UnitCodebook::assign(std::span<const double> embedding) const {
  return nearest_centroid(centroids, embedding, metric);
}

nlohmann::json UnitCodebook::to_json() const {
  return {{"k", k},
          {"seed", seed},
          {"embedder_id", embedder_id},
          {"metric", std::string(to_string(metric))},
          {"centroids", centroids}};
}

UnitCodebook UnitCodebook::from_json(const nlohmann::json& j) {
  UnitCodebook cb;
  try {
    cb.k = j.at("k").get<std::size_t>();
    cb.seed = j.at("seed").get<std::uint64_t>();
    cb.embedder_id = j.at("embedder_id").get<std::string>();
    auto m = parse_distance_metric(j.at("metric").get<std::string>());
    if (!m) throw ConfigError("codebook: unknown metric");
    cb.metric = *m;
    cb.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("codebook: ") + e.what());
  }
  if (cb.k == 0 || cb.centroids.size() != cb.k) throw ConfigError("codebook: expected k centroids");
  for (const auto& c : cb.centroids) {
    if (c.size() != cb.centroids.front().size()) throw ConfigError("codebook: ragged centroids");
    for (double x : c)
      if (!std::isfinite(x)) throw ConfigError("codebook: non-finite centroid");
  }
  return cb;
}

void UnitCodebook::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

UnitCodebook UnitCodebook::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string(), "fit-units");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("codebook " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

UnitCodebook fit_codebook(const corpus::DialogueCorpus& train,
                          const seqmodel::EmbeddingProvider& embedder,
                          const KMeansOptions& options) {
  std::vector<std::vector<double>> points;
  for (const auto& s : train.sessions())
    for (const auto& t : s.turns) points.push_back(embedder.encode(t.text));
  auto result = kmeans(points, options);
  UnitCodebook cb;
  cb.k = options.k;
  cb.seed = options.seed;
  cb.embedder_id = embedder.id();
  cb.metric = options.metric;
  cb.centroids = std::move(result.centroids);
  return cb;
}

std::vector<int> encode_history(std::span<const corpus::Turn> turns, const UnitCodebook& codebook,
                                const seqmodel::EmbeddingProvider& embedder) {
  if (embedder.id() != codebook.embedder_id)
    throw ConfigError("codebook was fit with embedder '" + codebook.embedder_id + "', not '" +
                      embedder.id() + "'");
  std::vector<int> out;
  out.reserve(turns.size());
  for (const auto& t : turns) out.push_back(codebook.assign(embedder.encode(t.text)));
  return out;
}

void assign_units(corpus::DialogueCorpus& corpus, const UnitCodebook& codebook,
                  const seqmodel::EmbeddingProvider& embedder) {
  for (auto& s : corpus.mutable_sessions()) {
    auto units = encode_history(s.turns, codebook, embedder);
    for (std::size_t i = 0; i < units.size(); ++i) s.turns[i].unit_id = units[i];
  }
}

// --- generator input ----------------------------------------------------------------

std::string unit_token(int unit) { return "<u" + std::to_string(unit) + ">"; }

namespace {

void append_field(std::vector<std::string>& out, std::string_view field) {
  for (auto& tok : text::split_whitespace(field)) {
    if (tok.front() == '<' || tok.front() == '\\') tok.insert(tok.begin(), '\\');
    out.push_back(std::move(tok));
  }
}

}  // namespace

std::vector<std::string> assemble_input(const GeneratorInput& input, std::size_t max_length,
                                        Truncation truncation) {
  std::vector<std::string> tail;
  tail.emplace_back(kSeparator);
  append_field(tail, input.goal);
  tail.emplace_back(kSeparator);
  append_field(tail, input.coach);
  tail.emplace_back(kSeparator);
  append_field(tail, input.patient);
  if (tail.size() > max_length)
    throw ConfigError("assemble_input: goal, coach and patient fields need " +
                      std::to_string(tail.size()) + " tokens, max_length is " +
                      std::to_string(max_length));
  std::size_t room = max_length - tail.size();
  std::size_t keep = input.units.size();
  if (truncation == Truncation::DropOldestUnits) keep = std::min(keep, room);
  std::vector<std::string> out;
  out.reserve(keep + tail.size());
  for (std::size_t i = input.units.size() - keep; i < input.units.size(); ++i)
    out.push_back(unit_token(input.units[i]));
  for (auto& t : tail) out.push_back(std::move(t));
  return out;
}

std::string assemble_text(const GeneratorInput& input, std::size_t max_length, Truncation truncation) {
  return text::join(assemble_input(input, max_length, truncation), " ");
}

// --- generator ------------------------------------------------------------------------

GeneratorDataset generator_examples(const corpus::DialogueCorpus& corpus, std::size_t max_length,
                                    const std::map<corpus::SessionKey, std::string>* summaries) {
  GeneratorDataset data;
  std::string conversation;
  std::vector<int> history;
  for (const auto& s : corpus.sessions()) {
    if (s.conversation_id != conversation) {
      conversation = s.conversation_id;
      history.clear();
    }
    std::string goal, goal_source = "none";
    if (s.gold_goal_text) {
      goal = *s.gold_goal_text;
      goal_source = "gold";
    } else if (summaries) {
      if (auto it = summaries->find(s.key()); it != summaries->end()) {
        goal = it->second;
        goal_source = "summary";
      }
    }
    const corpus::Turn* last_coach = nullptr;
    const corpus::Turn* last_patient = nullptr;
    for (const auto& t : s.turns) {
      if (t.speaker == corpus::Speaker::Coach && last_patient) {
        GeneratorExample ex;
        ex.key = s.key();
        ex.turn_index = t.turn_index;
        ex.input.units = history;
        ex.input.goal = goal;
        ex.input.coach = last_coach ? last_coach->text : std::string();
        ex.input.patient = last_patient->text;
        ex.target = t.text;
        ex.goal_source = goal_source;
        try {
          assemble_input(ex.input, max_length);
          data.examples.push_back(std::move(ex));
        } catch (const ConfigError&) {
          ++data.skipped;
        }
      }
      if (!t.unit_id)
        throw ContractError("generator_examples: turn without unit id in " + corpus::to_string(s.key()));
      history.push_back(*t.unit_id);
      (t.speaker == corpus::Speaker::Coach ? last_coach : last_patient) = &t;
    }
  }
  return data;
}

seqmodel::Vocabulary generator_vocabulary(const GeneratorDataset& data, std::size_t k,
                                          std::size_t max_length) {
  std::vector<std::string> reserved{std::string(kSeparator)};
  for (std::size_t u = 0; u < k; ++u) reserved.push_back(unit_token(static_cast<int>(u)));
  std::vector<std::string> texts;
  texts.reserve(data.examples.size() * 2);
  for (const auto& ex : data.examples) {
    texts.push_back(assemble_text(ex.input, max_length));
    texts.push_back(ex.target);
  }
  return seqmodel::Vocabulary::build(texts, reserved);
}

seqmodel::FitReport train_generator(seqmodel::SequenceModel& model, const GeneratorDataset& data,
                                    std::size_t max_length, const seqmodel::TrainConfig& cfg) {
  if (data.examples.empty()) throw ConfigError("train_generator: no coach turns to train on");
  std::vector<seqmodel::TrainPair> pairs;
  pairs.reserve(data.examples.size());
  for (const auto& ex : data.examples) pairs.push_back({assemble_text(ex.input, max_length), ex.target});
  return model.fit(pairs, cfg);
}

std::string respond(const seqmodel::SequenceModel& model, const GeneratorInput& input,
                    std::size_t max_length, const seqmodel::DecodeConfig& cfg) {
  return seqmodel::sample(model, assemble_text(input, max_length), cfg);
}

double conditional_perplexity(const seqmodel::SequenceModel& model, const GeneratorDataset& data,
                              std::size_t max_length) {
  double bits = 0;
  std::size_t tokens = 0;
  for (const auto& ex : data.examples) {
    for (double lp : seqmodel::token_log_probs(model, assemble_text(ex.input, max_length), ex.target)) {
      bits -= lp;
      ++tokens;
    }
  }
  if (tokens == 0) throw ConfigError("conditional_perplexity: no target tokens");
  return std::exp2(bits / static_cast<double>(tokens));
}

}  // namespace coachpipe::unitgen

#pragma once

// Discrete dialogue units (turn embeddings quantized by k-means) and the
// response generator fed with [units, goal, last coach turn, last patient turn].

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/corpus.hpp"
#include "coachpipe/seqmodel.hpp"

namespace coachpipe::unitgen {

enum class DistanceMetric { SquaredEuclidean, Cosine };
std::string_view to_string(DistanceMetric m);
std::optional<DistanceMetric> parse_distance_metric(std::string_view s);

/// Squared Euclidean distance, or 1 - cosine similarity.
double distance(DistanceMetric metric, std::span<const double> a, std::span<const double> b);

struct KMeansOptions {
  std::size_t k = 15;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 100;
  /// Independent k-means++ initializations; the lowest inertia wins.
  std::size_t restarts = 4;
  DistanceMetric metric = DistanceMetric::SquaredEuclidean;
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;
  double inertia = 0;
  std::size_t iterations = 0;
};

/// Nearest centroid; ties go to the lowest id.
int nearest_centroid(const std::vector<std::vector<double>>& centroids, std::span<const double> point,
                     DistanceMetric metric);

/// Lloyd iterations from k-means++ seeding. Throws ConfigError when there are
/// fewer distinct points than k.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, const KMeansOptions& options);

struct UnitCodebook {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string embedder_id;
  DistanceMetric metric = DistanceMetric::SquaredEuclidean;
  std::vector<std::vector<double>> centroids;

  int assign(std::span<const double> embedding) const;

  nlohmann::json to_json() const;
  /// Validates shape and finiteness.
  static UnitCodebook from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static UnitCodebook load(const std::filesystem::path& path);

  friend bool operator==(const UnitCodebook&, const UnitCodebook&) = default;
};

/// Clusters the embeddings of every turn in `train`.
UnitCodebook fit_codebook(const corpus::DialogueCorpus& train,
                          const seqmodel::EmbeddingProvider& embedder,
                          const KMeansOptions& options);

/// One unit per turn. Throws ConfigError when the codebook was fit with a
/// different embedder.
std::vector<int> encode_history(std::span<const corpus::Turn> turns, const UnitCodebook& codebook,
                                const seqmodel::EmbeddingProvider& embedder);

/// Sets Turn::unit_id on every turn.
void assign_units(corpus::DialogueCorpus& corpus, const UnitCodebook& codebook,
                  const seqmodel::EmbeddingProvider& embedder);

// --- generator input ----------------------------------------------------------------

inline constexpr std::string_view kSeparator = "<sep>";
std::string unit_token(int unit);

struct GeneratorInput {
  std::vector<int> units;
  std::string goal;
  std::string coach;
  std::string patient;
};

enum class Truncation { DropOldestUnits };

/// `<u..>... <sep> goal <sep> coach <sep> patient` as whitespace tokens.
/// Field tokens starting with '<' or '\' get a '\' prefix so they can never
/// read as reserved tokens. Units beyond `max_length` are dropped oldest
/// first; throws ConfigError when the separators and fields alone do not fit.
std::vector<std::string> assemble_input(const GeneratorInput& input, std::size_t max_length,
                                        Truncation truncation = Truncation::DropOldestUnits);
std::string assemble_text(const GeneratorInput& input, std::size_t max_length,
                          Truncation truncation = Truncation::DropOldestUnits);

// --- generator ------------------------------------------------------------------------

struct GeneratorExample {
  corpus::SessionKey key;
  int turn_index = 0;
  GeneratorInput input;
  std::string target;
  /// "gold", "summary" or "none".
  std::string goal_source;
};

struct GeneratorDataset {
  std::vector<GeneratorExample> examples;
  /// Coach turns whose fields alone exceed max_length.
  std::size_t skipped = 0;
};

/// One example per coach turn preceded by a patient turn in its session.
/// Units cover every earlier turn of the conversation. The goal is the
/// session's gold goal, else `summaries[key]` when given. Turns must carry
/// unit ids (see assign_units).
GeneratorDataset generator_examples(const corpus::DialogueCorpus& corpus, std::size_t max_length,
                                    const std::map<corpus::SessionKey, std::string>* summaries = nullptr);

/// Separator and unit tokens first, then every input and target token.
seqmodel::Vocabulary generator_vocabulary(const GeneratorDataset& data, std::size_t k,
                                          std::size_t max_length);

/// Throws ConfigError for an empty dataset.
seqmodel::FitReport train_generator(seqmodel::SequenceModel& model, const GeneratorDataset& data,
                                    std::size_t max_length, const seqmodel::TrainConfig& cfg);

std::string respond(const seqmodel::SequenceModel& model, const GeneratorInput& input,
                    std::size_t max_length, const seqmodel::DecodeConfig& cfg);

/// 2^(mean negative log2-likelihood per target token) of the coach turns
/// given their assembled inputs.
double conditional_perplexity(const seqmodel::SequenceModel& model, const GeneratorDataset& data,
                              std::size_t max_length);

}  // namespace coachpipe::unitgen

#pragma once

// Conditional sequence models (source text -> target text) and sentence
// embedders. SequenceModel is the provider contract; ReferenceModel is the
// small in-repo backend used throughout training and tests.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/errors.hpp"

namespace coachpipe::seqmodel {

/// Whitespace word-level tokenization used by the reference backend.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kEos = 1;

  /// Just the two reserved entries.
  Vocabulary();
  /// Reserved entries, then `extra` in order, then every remaining token of
  /// `texts` in first-seen order.
  static Vocabulary build(const std::vector<std::string>& texts,
                          const std::vector<std::string>& extra = {});
  /// Exactly `tokens` after the reserved entries (duplicates rejected).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Joins tokens with single spaces, stopping at EOS.
  std::string decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TrainConfig {
  /// Fractional epochs process round(epochs * pairs) examples.
  double epochs = 7.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct FitReport {
  std::size_t steps = 0;
  std::size_t examples = 0;
  /// Mean per-token negative log-likelihood (nats) of each batch before its update.
  std::vector<double> step_loss;
};

struct DecodeConfig {
  std::size_t max_length = 128;
  std::size_t top_k = 40;
  double top_p = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range for `vocab_size`.
  void validate(std::size_t vocab_size) const;
};

struct TrainPair {
  std::string source;
  std::string target;
};

/// Ascent direction on the logits of one target sequence. `target` holds the
/// token ids fed as prefix; `d_logits[i]` is the gradient at the step that
/// predicts position i (so d_logits.size() == target.size() + 1 when the EOS
/// step is included, or target.size() otherwise).
struct SequenceGradient {
  std::string source;
  std::vector<int> target;
  std::vector<std::vector<double>> d_logits;
};

/// Backend-specific conditioning state for one source text.
class SourceContext {
 public:
  virtual ~SourceContext() = default;
};

class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual std::string backend_id() const = 0;
  const Vocabulary& vocabulary() const noexcept { return vocab_; }

  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  virtual std::unique_ptr<SourceContext> condition(std::string_view source) const = 0;
  /// Natural-log distribution over the vocabulary for the next token.
  virtual void next_log_probs(const SourceContext& ctx, std::span<const int> prefix,
                              std::vector<double>& out) const = 0;

  /// Teacher-forced maximum likelihood. Throws ContractError when frozen,
  /// ConfigError for empty `pairs` or invalid settings.
  FitReport fit(const std::vector<TrainPair>& pairs, const TrainConfig& cfg);
  /// Gradient ascent with plain step size. Throws ContractError when frozen.
  void apply_gradients(std::span<const SequenceGradient> grads, double step);

  virtual std::unique_ptr<SequenceModel> clone() const = 0;
  /// Independent frozen copy.
  std::unique_ptr<SequenceModel> clone_frozen() const;

  /// Writes vocab.txt, params.bin and meta.json into `dir`.
  void save(const std::filesystem::path& dir) const;

 protected:
  explicit SequenceModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  SequenceModel(const SequenceModel&) = default;
  SequenceModel& operator=(const SequenceModel&) = default;

  virtual FitReport do_fit(const std::vector<TrainPair>& pairs, const TrainConfig& cfg) = 0;
  virtual void do_apply_gradients(std::span<const SequenceGradient> grads, double step) = 0;
  virtual void save_params(std::ostream& out) const = 0;
  virtual nlohmann::json meta() const = 0;

  Vocabulary vocab_;
  bool frozen_ = false;
  /// One entry per fit call, recorded in the checkpoint metadata.
  nlohmann::json training_history_ = nlohmann::json::array();
};

/// Loads any checkpoint written by SequenceModel::save.
std::unique_ptr<SequenceModel> load_model(const std::filesystem::path& dir);

/// Base-2 log-probability of each target token (EOS excluded).
std::vector<double> token_log_probs(const SequenceModel& model, std::string_view source,
                                    std::string_view target);

/// Natural-log probability of the whole target id sequence, optionally
/// including the terminating EOS step.
double sequence_log_prob(const SequenceModel& model, const SourceContext& ctx,
                         std::span<const int> target, bool include_eos = true);

/// Top-k / top-p sampling; ties in probability resolve to the lower id.
std::vector<int> sample_ids(const SequenceModel& model, const SourceContext& ctx,
                            const DecodeConfig& cfg, std::mt19937_64& rng);
std::string sample(const SequenceModel& model, std::string_view source, const DecodeConfig& cfg);
std::string greedy(const SequenceModel& model, std::string_view source, std::size_t max_length = 128);

/// Mean over steps of KL(p || q) in nats along `target` (EOS step included).
double sequence_kl(const SequenceModel& p, const SequenceModel& q, std::string_view source,
                   std::span<const int> target);

// --- reference backend ----------------------------------------------------------

struct ReferenceModelOptions {
  /// Buckets for hashed (prev2, prev1) rows.
  std::size_t trigram_buckets = 4096;
  bool use_source = true;
  bool use_copy = true;
  /// Adagrad stabilizer.
  double adagrad_eps = 1e-8;
  /// L2 penalty applied to touched rows during fit.
  double l2 = 0.0;

  nlohmann::json to_json() const;
  static ReferenceModelOptions from_json(const nlohmann::json& j);
};

/// Log-linear next-token model: bias + bigram row + hashed trigram row +
/// mean of source-token rows + a per-previous-token copy bonus for tokens
/// present in the source. All-zero parameters give the uniform distribution.
class ReferenceModel final : public SequenceModel {
 public:
  static constexpr std::string_view kBackendId = "reference-ngram";

  explicit ReferenceModel(Vocabulary vocab, ReferenceModelOptions options = {});

  std::string backend_id() const override { return std::string(kBackendId); }
  std::unique_ptr<SourceContext> condition(std::string_view source) const override;
  void next_log_probs(const SourceContext& ctx, std::span<const int> prefix,
                      std::vector<double>& out) const override;
  std::unique_ptr<SequenceModel> clone() const override;

  const ReferenceModelOptions& options() const noexcept { return options_; }

  /// Direct parameter access for hand-built models in tests.
  std::vector<double>& bias() { return bias_; }
  std::vector<double>& bigram_row(int prev);

  static std::unique_ptr<ReferenceModel> load(const std::filesystem::path& dir);

 protected:
  FitReport do_fit(const std::vector<TrainPair>& pairs, const TrainConfig& cfg) override;
  void do_apply_gradients(std::span<const SequenceGradient> grads, double step) override;
  void save_params(std::ostream& out) const override;
  nlohmann::json meta() const override;

 private:
  struct Grad;

  int prev_key(std::span<const int> prefix) const;
  std::uint32_t trigram_key(std::span<const int> prefix) const;
  void logits(const SourceContext& ctx, std::span<const int> prefix,
              std::vector<double>& out) const;
  void accumulate(const SourceContext& ctx, std::span<const int> target,
                  std::span<const std::vector<double>> d_logits, Grad& g) const;

  ReferenceModelOptions options_;
  std::vector<double> bias_;
  std::unordered_map<int, std::vector<double>> bigram_;
  std::unordered_map<std::uint32_t, std::vector<double>> trigram_;
  std::unordered_map<int, std::vector<double>> source_;
  std::vector<double> copy_;
  // Adagrad accumulators, mirroring the parameters.
  std::vector<double> bias_g2_;
  std::unordered_map<int, std::vector<double>> bigram_g2_;
  std::unordered_map<std::uint32_t, std::vector<double>> trigram_g2_;
  std::unordered_map<int, std::vector<double>> source_g2_;
  std::vector<double> copy_g2_;
};

// --- embeddings ------------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  /// Identifies the embedder in codebook files.
  virtual std::string id() const = 0;
  virtual std::vector<double> encode(std::string_view text) const = 0;
};

/// Signed feature hashing of lower-cased words and character trigrams,
/// L2-normalized. Empty text maps to the zero vector.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256);
  std::size_t dimension() const override { return dim_; }
  std::string id() const override;
  std::vector<double> encode(std::string_view text) const override;

 private:
  std::size_t dim_;
};

/// Builds an embedder from its id ("hash-bow-<dim>").
std::unique_ptr<EmbeddingProvider> make_embedder(std::string_view id);

double cosine(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace coachpipe::seqmodel

#include "pipeline.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "coachpipe/corpus.hpp"
#include "coachpipe/evalkit.hpp"
#include "coachpipe/fixtures.hpp"
#include "coachpipe/goalkit.hpp"
#include "coachpipe/pvi.hpp"
#include "coachpipe/seqmodel.hpp"
#include "coachpipe/summarizer.hpp"
#include "coachpipe/text.hpp"
#include "coachpipe/unitgen.hpp"
#include "config.hpp"
#include "manifest.hpp"

namespace coachpipe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Artifact locations relative to the work directory.
constexpr const char* kCorpus = "corpus.jsonl";
constexpr const char* kSplits = "splits.json";
constexpr const char* kCodebook = "units/codebook.json";
constexpr const char* kWarm = "summarizer/warm";
constexpr const char* kWarmReport = "summarizer/warm_report.json";
constexpr const char* kPolicy = "summarizer/policy";
constexpr const char* kTrace = "summarizer/rl_trace.jsonl";
constexpr const char* kScores = "pvi/scores.jsonl";
constexpr const char* kPviReport = "reports/pvi.json";
constexpr const char* kCurated = "pvi/curated.jsonl";
constexpr const char* kReplacements = "pvi/replacements.jsonl";
constexpr const char* kGenerator = "generator/model";
constexpr const char* kGeneratorExamples = "generator/examples.jsonl";
constexpr const char* kGeneratorReport = "generator/report.json";
constexpr const char* kSummaries = "summaries.jsonl";
constexpr const char* kResponses = "responses.jsonl";
constexpr const char* kEvalReport = "reports/eval.json";
constexpr const char* kStats = "reports/corpus_stats.json";
constexpr const char* kReview = "ab/review.jsonl";
constexpr const char* kAbSummary = "ab/summary.json";

void log(const std::string& stage, const std::string& msg) {
  std::cerr << "[coachpipe " << stage << "] " << msg << '\n';
}

fs::path at(const RunContext& ctx, const char* rel) { return ctx.workdir / rel; }

// Checkpoint directories are identified by their metadata file.
fs::path require(const RunContext& ctx, const char* rel, const char* producer) {
  fs::path p = at(ctx, rel);
  fs::path probe = fs::is_directory(p) ? p / "meta.json" : p;
  if (!fs::exists(probe)) throw MissingArtifactError(rel, producer);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  return in;
}

template <typename Json>
void write_json(const fs::path& p, const Json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

const json& section(const RunContext& ctx, const char* name) { return ctx.config.at(name); }

goalkit::Schema load_schema(const RunContext& ctx, Manifest& m) {
  const auto& p = ctx.config.at("paths").at("schema");
  if (p.is_null() || p.get<std::string>().empty()) return goalkit::Schema::default_schema();
  fs::path path = p.get<std::string>();
  m.input(path);
  return goalkit::Schema::from_file(path);
}

corpus::DialogueCorpus load_corpus(const RunContext& ctx, Manifest& m, const goalkit::Schema& schema) {
  fs::path p = require(ctx, kCorpus, "ingest");
  m.input(p);
  return corpus::ingest_file(p, {}, schema);
}

corpus::DialogueCorpus load_split(const RunContext& ctx, Manifest& m, const goalkit::Schema& schema) {
  auto c = load_corpus(ctx, m, schema);
  fs::path p = require(ctx, kSplits, "split");
  m.input(p);
  auto in = open_in(p);
  corpus::apply_splits(c, json::parse(in));
  return c;
}

corpus::Split split_named(const std::string& name) {
  auto s = corpus::parse_split(name);
  if (!s) throw ConfigError("unknown split '" + name + "'");
  return *s;
}

std::unique_ptr<seqmodel::EmbeddingProvider> embedder_from(const RunContext& ctx) {
  return seqmodel::make_embedder(section(ctx, "units").at("embedder").get<std::string>());
}

seqmodel::DecodeConfig decode_config(const RunContext& ctx, std::uint64_t seed) {
  const auto& d = section(ctx, "decode");
  seqmodel::DecodeConfig cfg;
  cfg.top_k = d.at("top_k").get<std::size_t>();
  cfg.top_p = d.at("top_p").get<double>();
  cfg.max_length = d.at("max_length").get<std::size_t>();
  cfg.seed = seed;
  return cfg;
}

std::unique_ptr<seqmodel::SequenceModel> load_checkpoint(const RunContext& ctx, Manifest& m,
                                                         const char* rel, const char* producer) {
  fs::path dir = require(ctx, rel, producer);
  m.input(dir);
  return seqmodel::load_model(dir);
}

unitgen::UnitCodebook load_codebook(const RunContext& ctx, Manifest& m) {
  fs::path p = require(ctx, kCodebook, "fit-units");
  m.input(p);
  return unitgen::UnitCodebook::load(p);
}

std::vector<json> read_jsonl(const fs::path& p) {
  auto in = open_in(p);
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(n, p.string() + ": " + e.what());
    }
  }
  return out;
}

std::map<corpus::SessionKey, json> read_summaries(const fs::path& p) {
  std::map<corpus::SessionKey, json> out;
  for (auto& j : read_jsonl(p))
    out[{j.at("conversation_id").get<std::string>(), j.at("week").get<int>()}] = j;
  return out;
}

// --- stages -----------------------------------------------------------------------------

void ingest_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  fs::path raw = ctx.config.at("paths").at("corpus").get<std::string>();
  if (!fs::exists(raw)) throw ConfigError("corpus file not found: " + raw.string());
  m.input(raw);
  auto c = corpus::ingest_file(raw, {}, schema);
  fs::path out = at(ctx, kCorpus);
  fs::create_directories(ctx.workdir);
  corpus::emit_file(c, out);
  write_json(at(ctx, kStats), corpus::to_json(corpus::stats(c)));
  m.output(out);
  m.output(at(ctx, kStats));
  log("ingest", std::to_string(c.size()) + " sessions, " + std::to_string(c.total_turns()) + " turns");
}

void split_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto c = load_corpus(ctx, m, schema);
  const auto& s = section(ctx, "split");
  corpus::SplitPolicy policy{s.at("train").get<double>(), s.at("dev").get<double>(),
                             s.at("test").get<double>()};
  auto labelled = corpus::split(c, policy, stage_seed(ctx.seed, "split"));
  write_json(at(ctx, kSplits), corpus::splits_to_json(labelled));
  m.output(at(ctx, kSplits));
  log("split", "labelled " + std::to_string(labelled.size()) + " sessions");
}

void fit_units_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto train = load_split(ctx, m, schema).subset(corpus::Split::Train);
  const auto& u = section(ctx, "units");
  unitgen::KMeansOptions opts;
  opts.k = u.at("k").get<std::size_t>();
  opts.seed = stage_seed(ctx.seed, "fit-units");
  opts.max_iterations = u.at("max_iterations").get<std::size_t>();
  opts.restarts = u.at("restarts").get<std::size_t>();
  auto metric = unitgen::parse_distance_metric(u.at("metric").get<std::string>());
  if (!metric) throw ConfigError("units.metric must be squared_euclidean or cosine");
  opts.metric = *metric;
  auto embedder = embedder_from(ctx);
  auto codebook = unitgen::fit_codebook(train, *embedder, opts);
  fs::create_directories(at(ctx, kCodebook).parent_path());
  codebook.save(at(ctx, kCodebook));
  m.output(at(ctx, kCodebook));
  log("fit-units", "k = " + std::to_string(codebook.k));
}

std::vector<summarizer::PositiveExample> train_positives(const RunContext& ctx, Manifest& m,
                                                         const corpus::DialogueCorpus& c) {
  const auto& p = ctx.config.at("paths").at("positives");
  if (p.is_null() || p.get<std::string>().empty()) return {};
  fs::path path = p.get<std::string>();
  if (!fs::exists(path)) throw ConfigError("positives file not found: " + path.string());
  m.input(path);
  std::stringstream kept;
  for (const auto& j : read_jsonl(path)) {
    corpus::SessionKey key{j.value("conversation_id", std::string()), j.value("week", 0)};
    if (c.split_of(key) == corpus::Split::Train) kept << j.dump() << '\n';
  }
  return summarizer::read_positives(kept, c);
}

void train_summarizer_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto c = load_split(ctx, m, schema);
  auto positives = train_positives(ctx, m, c);
  auto train = c.subset(corpus::Split::Train);
  const auto& s = section(ctx, "summarizer");
  std::uint64_t seed = stage_seed(ctx.seed, "train-summarizer");
  summarizer::WarmStartConfig wc;
  wc.phase1 = {s.at("phase1_epochs").get<double>(), s.at("learning_rate").get<double>(),
               s.at("batch_size").get<std::size_t>(), seed};
  wc.phase2 = {s.at("phase2_epochs").get<double>(), s.at("learning_rate").get<double>(),
               s.at("batch_size").get<std::size_t>(), text::mix_seed(seed, 2)};
  seqmodel::ReferenceModel model(summarizer::summarizer_vocabulary(c, positives));
  auto report = summarizer::warm_start(model, train, positives, wc);
  model.save(at(ctx, kWarm));
  json r = {{"phase1_pairs", report.phase1_pairs},
            {"skipped", report.skipped},
            {"phase2_pairs", report.phase2_pairs},
            {"phase1_steps", report.phase1.steps},
            {"phase2_steps", report.phase2 ? report.phase2->steps : 0}};
  write_json(at(ctx, kWarmReport), r);
  m.output(at(ctx, kWarm));
  m.output(at(ctx, kWarmReport));
  log("train-summarizer", std::to_string(report.phase1_pairs) + " goal pairs, " +
                              std::to_string(report.phase2_pairs) + " protocol pairs");
}

void rl_tune_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto train = load_split(ctx, m, schema).subset(corpus::Split::Train);
  auto warm = load_checkpoint(ctx, m, kWarm, "train-summarizer");
  auto base = warm->clone_frozen();
  auto policy = warm->clone();
  const auto& r = section(ctx, "rl");
  summarizer::RLConfig cfg;
  auto metric = evalkit::parse_rouge_metric(r.at("reward_metric").get<std::string>());
  if (!metric) throw ConfigError("rl.reward_metric must be rouge_l, rouge_1 or rouge_2");
  cfg.reward_metric = *metric;
  cfg.kl_coefficient = r.at("kl_coefficient").get<double>();
  cfg.ppo_clip = r.at("ppo_clip").get<double>();
  cfg.batch_size = r.at("batch_size").get<std::size_t>();
  cfg.steps = r.at("steps").get<std::size_t>();
  cfg.learning_rate = r.at("learning_rate").get<double>();
  cfg.ppo_epochs = r.at("ppo_epochs").get<std::size_t>();
  cfg.baseline_momentum = r.at("baseline_momentum").get<double>();
  cfg.max_length = r.at("max_length").get<std::size_t>();
  cfg.seed = stage_seed(ctx.seed, "rl-tune");
  auto trace = summarizer::rl_tune(*policy, *base, summarizer::rl_examples(train, schema), cfg, schema);
  policy->freeze();
  policy->save(at(ctx, kPolicy));
  {
    auto out = open_out(at(ctx, kTrace));
    summarizer::write_trace_jsonl(trace, out);
  }
  m.output(at(ctx, kPolicy));
  m.output(at(ctx, kTrace));
  log("rl-tune", "reward " + text::format_number(trace.front().mean_reward) + " -> " +
                     text::format_number(trace.back().mean_reward));
}

void pvi_score_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto train = load_split(ctx, m, schema).subset(corpus::Split::Train);
  const auto& p = section(ctx, "pvi");
  pvi::PviTrainConfig cfg;
  cfg.context_window = p.at("context_window").get<std::size_t>();
  cfg.g_epochs = p.at("g_epochs").get<double>();
  cfg.g_null_epochs = p.at("g_null_epochs").get<double>();
  cfg.learning_rate = p.at("learning_rate").get<double>();
  cfg.batch_size = p.at("batch_size").get<std::size_t>();
  cfg.seed = stage_seed(ctx.seed, "pvi-score");
  auto factory = [](const seqmodel::Vocabulary& v) { return std::make_unique<seqmodel::ReferenceModel>(v); };
  auto models = pvi::train_pvi_models(train, factory, cfg);
  auto scored = pvi::score_corpus(models, train, cfg.context_window, p.at("threads").get<std::size_t>());
  {
    auto out = open_out(at(ctx, kScores));
    pvi::write_scores_jsonl(scored.instances, out);
  }
  json report = {{"backend", models.backend_id},
                 {"instances", scored.instances.size()},
                 {"excluded", scored.excluded},
                 {"v_information", pvi::v_information(scored.instances)},
                 {"training", cfg.to_json()}};
  write_json(at(ctx, kPviReport), report);
  m.output(at(ctx, kScores));
  m.output(at(ctx, kPviReport));
  log("pvi-score", std::to_string(scored.instances.size()) + " instances scored");
}

void curate_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto train = load_split(ctx, m, schema).subset(corpus::Split::Train);
  fs::path scores_path = require(ctx, kScores, "pvi-score");
  m.input(scores_path);
  auto in = open_in(scores_path);
  auto scores = pvi::read_scores_jsonl(in);
  const auto& p = section(ctx, "pvi");
  pvi::FlagOptions opts;
  if (!p.at("fraction").is_null()) opts.fraction = p.at("fraction").get<double>();
  if (!p.at("threshold").is_null()) opts.threshold = p.at("threshold").get<double>();
  auto embedder = embedder_from(ctx);
  auto result = pvi::low_pvi_replace(train, std::move(scores), *embedder, opts);
  corpus::emit_file(result.corpus, at(ctx, kCurated));
  {
    auto out = open_out(at(ctx, kReplacements));
    pvi::write_replacements_jsonl(result.log, out);
  }
  m.output(at(ctx, kCurated));
  m.output(at(ctx, kReplacements));
  log("curate", std::to_string(result.log.size()) + " flagged responses");
}

void train_generator_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto codebook = load_codebook(ctx, m);
  const auto& g = section(ctx, "generator");
  const auto source = g.at("corpus").get<std::string>();
  corpus::DialogueCorpus train;
  if (source == "curated") {
    fs::path p = require(ctx, kCurated, "curate");
    m.input(p);
    train = corpus::ingest_file(p, {}, schema);
  } else if (source == "train") {
    train = load_split(ctx, m, schema).subset(corpus::Split::Train);
  } else {
    throw ConfigError("generator.corpus must be train or curated");
  }
  std::map<corpus::SessionKey, std::string> summaries;
  const auto fallback = g.at("goal_fallback").get<std::string>();
  if (fallback == "summary") {
    fs::path p = require(ctx, kSummaries, "summarize");
    m.input(p);
    for (const auto& [key, j] : read_summaries(p)) summaries[key] = j.at("full_goal_text").get<std::string>();
  } else if (fallback != "none") {
    throw ConfigError("generator.goal_fallback must be none or summary");
  }
  auto embedder = seqmodel::make_embedder(codebook.embedder_id);
  unitgen::assign_units(train, codebook, *embedder);
  const auto max_length = g.at("max_length").get<std::size_t>();
  auto data = unitgen::generator_examples(train, max_length, fallback == "summary" ? &summaries : nullptr);
  seqmodel::ReferenceModel model(unitgen::generator_vocabulary(data, codebook.k, max_length));
  seqmodel::TrainConfig cfg{g.at("epochs").get<double>(), g.at("learning_rate").get<double>(),
                            g.at("batch_size").get<std::size_t>(), stage_seed(ctx.seed, "train-generator")};
  unitgen::train_generator(model, data, max_length, cfg);
  model.freeze();
  model.save(at(ctx, kGenerator));
  std::map<std::string, std::size_t> sources;
  {
    auto out = open_out(at(ctx, kGeneratorExamples));
    for (const auto& ex : data.examples) {
      nlohmann::ordered_json j;
      j["conversation_id"] = ex.key.conversation_id;
      j["week"] = ex.key.week;
      j["turn_index"] = ex.turn_index;
      j["goal_source"] = ex.goal_source;
      out << j.dump() << '\n';
      ++sources[ex.goal_source];
    }
  }
  write_json(at(ctx, kGeneratorReport),
             json{{"examples", data.examples.size()}, {"skipped", data.skipped}, {"goal_sources", sources}});
  m.output(at(ctx, kGenerator));
  m.output(at(ctx, kGeneratorExamples));
  m.output(at(ctx, kGeneratorReport));
  log("train-generator", std::to_string(data.examples.size()) + " examples");
}

void summarize_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto policy = load_checkpoint(ctx, m, kPolicy, "rl-tune");
  auto c = load_corpus(ctx, m, schema);
  summarizer::SummarizeOptions opts;
  opts.decode = decode_config(ctx, stage_seed(ctx.seed, "summarize"));
  opts.decode.top_k = std::min(opts.decode.top_k, policy->vocabulary().size());
  opts.max_attempts = section(ctx, "summarizer").at("max_attempts").get<std::size_t>();
  auto summaries = summarizer::summarize_corpus(*policy, c, opts, schema);
  std::size_t fallbacks = 0;
  {
    auto out = open_out(at(ctx, kSummaries));
    for (const auto& [key, s] : summaries) {
      nlohmann::ordered_json j;
      j["conversation_id"] = key.conversation_id;
      j["week"] = key.week;
      const auto fields = s.to_json();
      for (const auto& [k, v] : fields.items()) j[k] = v;
      out << j.dump() << '\n';
      fallbacks += s.fallback ? 1 : 0;
    }
  }
  m.output(at(ctx, kSummaries));
  log("summarize", std::to_string(summaries.size()) + " sessions, " + std::to_string(fallbacks) + " fallbacks");
}

void respond_stage(const RunContext& ctx, Manifest& m) {
  auto schema = load_schema(ctx, m);
  auto model = load_checkpoint(ctx, m, kGenerator, "train-generator");
  auto codebook = load_codebook(ctx, m);
  auto split = split_named(section(ctx, "eval").at("split").get<std::string>());
  auto held = load_split(ctx, m, schema).subset(split);
  auto embedder = seqmodel::make_embedder(codebook.embedder_id);
  unitgen::assign_units(held, codebook, *embedder);
  const auto max_length = section(ctx, "generator").at("max_length").get<std::size_t>();
  auto data = unitgen::generator_examples(held, max_length);
  auto decode = decode_config(ctx, 0);
  decode.top_k = std::min(decode.top_k, model->vocabulary().size());
  const auto seed = stage_seed(ctx.seed, "respond");
  auto out = open_out(at(ctx, kResponses));
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& ex = data.examples[i];
    decode.seed = text::mix_seed(seed, i);
    nlohmann::ordered_json j;
    j["conversation_id"] = ex.key.conversation_id;
    j["week"] = ex.key.week;
    j["turn_index"] = ex.turn_index;
    j["input"] = unitgen::assemble_text(ex.input, max_length);
    j["response"] = unitgen::respond(*model, ex.input, max_length, decode);
    j["reference"] = ex.target;
    out << j.dump() << '\n';
  }
  out.close();
  m.output(at(ctx, kResponses));
  log("respond", std::to_string(data.examples.size()) + " responses");
}

void evaluate_stage(const RunContext& ctx, Manifest& m) {
  // Checked first so a fresh work directory points at the generator.
  fs::path generator = require(ctx, kGenerator, "train-generator");
  fs::path responses_path = require(ctx, kResponses, "respond");
  fs::path summaries_path = require(ctx, kSummaries, "summarize");
  m.input(generator);
  m.input(responses_path);
  m.input(summaries_path);
  auto schema = load_schema(ctx, m);
  auto split = split_named(section(ctx, "eval").at("split").get<std::string>());
  auto held = load_split(ctx, m, schema).subset(split);

  auto summaries = read_summaries(summaries_path);
  std::vector<std::string> predictions;
  std::vector<goalkit::GoalFrame> golds;
  double rouge_sum = 0;
  for (const auto& s : held.sessions()) {
    if (!s.gold_frame || !s.gold_goal_text) continue;
    auto it = summaries.find(s.key());
    if (it == summaries.end())
      throw MissingArtifactError(std::string(kSummaries) + " entry " + corpus::to_string(s.key()), "summarize");
    predictions.push_back(it->second.at("full_goal_text").get<std::string>());
    golds.push_back(*s.gold_frame);
    rouge_sum += evalkit::rouge(evalkit::RougeMetric::RougeL, summarizer::normalize_goal(predictions.back()),
                                summarizer::normalize_goal(*s.gold_goal_text));
  }
  json summarization = {{"sessions", predictions.size()}};
  if (!predictions.empty()) {
    summarization["frame_correctness"] = evalkit::frame_correctness(predictions, golds, schema);
    summarization["rouge_l"] = rouge_sum / static_cast<double>(predictions.size());
  }

  evalkit::ResponseEvalInput input;
  for (const auto& j : read_jsonl(responses_path)) {
    input.ids.push_back(j.at("conversation_id").get<std::string>() + "/w" +
                        std::to_string(j.at("week").get<int>()) + "/t" +
                        std::to_string(j.at("turn_index").get<int>()));
    input.candidates.push_back(j.at("response").get<std::string>());
    input.references.push_back(j.at("reference").get<std::string>());
  }
  if (input.ids.empty()) throw ValidationError("response", "no responses to evaluate");

  std::unique_ptr<seqmodel::SequenceModel> scorer;
  const auto& scorer_path = section(ctx, "eval").at("scorer_checkpoint");
  if (!scorer_path.is_null()) {
    fs::path dir = scorer_path.get<std::string>();
    if (!fs::exists(dir / "meta.json")) throw ConfigError("eval.scorer_checkpoint has no checkpoint: " + dir.string());
    m.input(dir);
    scorer = seqmodel::load_model(dir);
  } else {
    // Untrained scorer: uniform over the evaluated tokens.
    std::vector<std::string> texts = input.candidates;
    texts.insert(texts.end(), input.references.begin(), input.references.end());
    scorer = std::make_unique<seqmodel::ReferenceModel>(seqmodel::Vocabulary::build(texts));
  }
  scorer->freeze();

  const auto kernel = section(ctx, "eval").at("similarity_kernel");
  std::unique_ptr<evalkit::TokenSimilarity> similarity;
  if (kernel.is_string() && kernel.get<std::string>() == "exact")
    similarity = std::make_unique<evalkit::ExactMatchSimilarity>();
  else
    throw ConfigError("no token similarity scorer registered; set eval.similarity_kernel to \"exact\"");

  auto report = evalkit::evaluate_responses(input, scorer.get(), similarity.get());
  nlohmann::ordered_json out;
  out["summarization"] = summarization;
  out["generation"] = report.to_json();
  write_json(at(ctx, kEvalReport), out);
  m.output(at(ctx, kEvalReport));
  log("evaluate", "frame correctness " +
                      (predictions.empty() ? std::string("n/a")
                                           : text::format_number(summarization["frame_correctness"].get<double>())) +
                      ", BLEU " + text::format_number(*report.bleu_avg));
}

void export_ab_stage(const RunContext& ctx, Manifest& m) {
  fs::path responses_path = require(ctx, kResponses, "respond");
  m.input(responses_path);
  auto rows = read_jsonl(responses_path);
  std::vector<std::string> a, b, contexts;
  for (const auto& j : rows) {
    a.push_back(j.at("response").get<std::string>());
    b.push_back(j.at("reference").get<std::string>());
    contexts.push_back(j.at("input").get<std::string>());
  }
  const auto& baseline = section(ctx, "ab").at("baseline");
  if (!baseline.is_null()) {
    fs::path p = baseline.get<std::string>();
    m.input(p);
    auto other = read_jsonl(p);
    if (other.size() != rows.size()) throw ValidationError("response", "baseline and responses differ in length");
    for (std::size_t i = 0; i < other.size(); ++i) b[i] = other[i].at("response").get<std::string>();
  }
  auto records = evalkit::export_ab_pairs(a, b, contexts, stage_seed(ctx.seed, "export-ab"));
  auto out = open_out(at(ctx, kReview));
  evalkit::write_ab_jsonl(records, out);
  out.close();
  m.output(at(ctx, kReview));
  log("export-ab", std::to_string(records.size()) + " review items");
}

void import_ab_stage(const RunContext& ctx, const StageOptions& opts, Manifest& m) {
  fs::path review_path = require(ctx, kReview, "export-ab");
  if (opts.votes.empty()) throw ConfigError("import-ab needs --votes");
  m.input(review_path);
  m.input(opts.votes);
  auto rin = open_in(review_path);
  auto records = evalkit::read_ab_jsonl(rin);
  auto vin = open_in(opts.votes);
  auto summary = evalkit::summarize_votes(records, evalkit::read_votes_jsonl(vin));
  write_json(at(ctx, kAbSummary), summary.to_json());
  m.output(at(ctx, kAbSummary));
  log("import-ab", "preference delta " + text::format_number(summary.preference_delta));
}

void make_fixture_stage(const RunContext& ctx, const StageOptions& opts, Manifest& m) {
  fixtures::CoachingOptions co;
  co.conversations = opts.conversations;
  co.weeks = opts.weeks;
  co.seed = stage_seed(ctx.seed, "make-fixture");
  co.odd_reply_rate = 0.05;
  auto fx = fixtures::coaching_corpus(co);
  fs::create_directories(opts.out);
  corpus::emit_file(fx.corpus, opts.out / "corpus.jsonl");
  {
    auto out = open_out(opts.out / "positives.jsonl");
    fixtures::write_positives_jsonl(fx.positives, out);
  }
  m.output(opts.out / "corpus.jsonl");
  m.output(opts.out / "positives.jsonl");
  log("make-fixture", std::to_string(fx.corpus.size()) + " sessions -> " + opts.out.string());
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "ingest",          "split",     "fit-units", "train-summarizer", "rl-tune",   "pvi-score",
      "curate",          "train-generator", "summarize", "respond",   "evaluate",  "export-ab",
      "import-ab",       "make-fixture"};
  return names;
}

void run_stage(const std::string& stage, const RunContext& ctx, const StageOptions& options) {
  Manifest m(stage, ctx.workdir, ctx.seed, ctx.config, ctx.overrides);
  if (stage == "ingest") ingest_stage(ctx, m);
  else if (stage == "split") split_stage(ctx, m);
  else if (stage == "fit-units") fit_units_stage(ctx, m);
  else if (stage == "train-summarizer") train_summarizer_stage(ctx, m);
  else if (stage == "rl-tune") rl_tune_stage(ctx, m);
  else if (stage == "pvi-score") pvi_score_stage(ctx, m);
  else if (stage == "curate") curate_stage(ctx, m);
  else if (stage == "train-generator") train_generator_stage(ctx, m);
  else if (stage == "summarize") summarize_stage(ctx, m);
  else if (stage == "respond") respond_stage(ctx, m);
  else if (stage == "evaluate") evaluate_stage(ctx, m);
  else if (stage == "export-ab") export_ab_stage(ctx, m);
  else if (stage == "import-ab") import_ab_stage(ctx, options, m);
  else if (stage == "make-fixture") make_fixture_stage(ctx, options, m);
  else throw ConfigError("unknown subcommand '" + stage + "'");
  m.write();
}

}  // namespace coachpipe::cli

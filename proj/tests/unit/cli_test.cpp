#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coachpipe/errors.hpp"
#include "config.hpp"
#include "manifest.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace coachpipe;
using namespace coachpipe::cli;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("coachpipe-cli-" + name + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code;
  std::string err;
};

Run run_cli(const std::string& args, const fs::path& scratch) {
  auto err = scratch / "stderr.txt";
  std::string cmd = std::string(COACHPIPE_CLI) + " " + args + " >/dev/null 2>" + err.string();
  int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err)};
}

}  // namespace

TEST(Config, DefaultsAreComplete) {
  auto d = default_config();
  EXPECT_EQ(d["seed"], 13);
  for (const char* section : {"paths", "units", "summarizer", "rl", "pvi", "generator", "decode", "eval"})
    EXPECT_TRUE(d.contains(section)) << section;
}

TEST(Config, LayersInPrecedenceOrder) {
  TempDir dir("layers");
  auto file = dir.path() / "c.json";
  write_file(file, R"({"units":{"k":4},"rl":{"steps":7}})");
  auto base = load_config(file, {}, {});
  EXPECT_EQ(base["units"]["k"], 4);
  EXPECT_EQ(base["rl"]["steps"], 7);
  auto env = load_config(file, {{"COACHPIPE__UNITS__K", "5"}}, {});
  EXPECT_EQ(env["units"]["k"], 5);
  EXPECT_EQ(env["rl"]["steps"], 7);
  auto over = load_config(file, {{"COACHPIPE__UNITS__K", "5"}}, {"units.k=6"});
  EXPECT_EQ(over["units"]["k"], 6);
  EXPECT_EQ(load_config({}, {}, {})["units"]["k"], default_config()["units"]["k"]);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  TempDir dir("unknown");
  auto file = dir.path() / "c.json";
  write_file(file, R"({"units":{"kk":4}})");
  EXPECT_THROW(load_config(file, {}, {}), ConfigError);
  EXPECT_THROW(load_config({}, {}, {"nope.x=1"}), ConfigError);
  EXPECT_THROW(load_config({}, {}, {"units.k=\"many\""}), ConfigError);
  EXPECT_THROW(load_config({}, {{"COACHPIPE__UNITS__KK", "3"}}, {}), ConfigError);
  EXPECT_THROW(load_config({}, {}, {"units.k"}), ConfigError);
  write_file(file, "{not json");
  EXPECT_THROW(load_config(file, {}, {}), ConfigError);
}

TEST(Config, SetKeyParsesJsonOrKeepsString) {
  nlohmann::json c = default_config();
  set_key(c, "rl.reward_metric", "rouge_2");
  EXPECT_EQ(c["rl"]["reward_metric"], "rouge_2");
  set_key(c, "rl.steps", "12");
  EXPECT_EQ(c["rl"]["steps"], 12);
}

TEST(Config, StageSeedsAreDistinctAndStable) {
  EXPECT_EQ(stage_seed(13, "rl-tune"), stage_seed(13, "rl-tune"));
  EXPECT_NE(stage_seed(13, "rl-tune"), stage_seed(13, "pvi-score"));
  EXPECT_NE(stage_seed(13, "rl-tune"), stage_seed(14, "rl-tune"));
}

TEST(Manifest, HashesAndRelativePaths) {
  TempDir dir("manifest");
  write_file(dir.path() / "abc.txt", "abc");
  EXPECT_EQ(sha256_file(dir.path() / "abc.txt"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_file(dir.path() / "empty.txt", "");
  EXPECT_EQ(sha256_file(dir.path() / "empty.txt"),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Manifest m("ingest", dir.path(), 13, default_config(), {"units.k=3"});
  m.input(dir.path() / "abc.txt");
  m.output(dir.path() / "empty.txt");
  auto j = m.to_json();
  EXPECT_EQ(j["command"], "ingest");
  EXPECT_EQ(j["inputs"][0]["path"], "abc.txt");
  auto path = m.write();
  EXPECT_EQ(path, dir.path() / "manifests" / "ingest.json");
  EXPECT_EQ(nlohmann::ordered_json::parse(read_file(path)), j);
}

TEST(Stages, OrderedPipeline) {
  const auto& names = stage_names();
  ASSERT_GE(names.size(), 12u);
  EXPECT_EQ(names.front(), "ingest");
  EXPECT_EQ(names[1], "split");
}

TEST(ExitCodes, MissingArtifactNamesTheProducer) {
  TempDir dir("missing");
  auto r = run_cli("evaluate --override paths.workdir=" + (dir.path() / "w").string(), dir.path());
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("train-generator"), std::string::npos) << r.err;
}

TEST(ExitCodes, ConfigErrors) {
  TempDir dir("config");
  write_file(dir.path() / "bad.json", R"({"units":{"kk":1}})");
  EXPECT_EQ(run_cli("ingest --config " + (dir.path() / "bad.json").string(), dir.path()).code, 2);
  EXPECT_EQ(run_cli("no-such-stage", dir.path()).code, 2);
  EXPECT_EQ(run_cli("curate --fraction 0.05 --threshold 0", dir.path()).code, 2);
  EXPECT_EQ(run_cli("--help", dir.path()).code, 0);
}

TEST(ExitCodes, InvalidCorpus) {
  TempDir dir("corpus");
  write_file(dir.path() / "bad.jsonl", "{\"conversation_id\": 5}\n");
  auto r = run_cli("ingest --override paths.corpus=" + (dir.path() / "bad.jsonl").string() +
                       " --override paths.workdir=" + (dir.path() / "w").string(),
                   dir.path());
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Pipeline, FrontStagesAreDeterministic) {
  TempDir dir("front");
  auto wd = (dir.path() / "w").string();
  std::string cfg = std::string(COACHPIPE_SOURCE_DIR) + "/configs/fixture.json";
  std::string common = " --config " + cfg + " --override paths.workdir=" + wd +
                       " --override paths.corpus=" + COACHPIPE_SOURCE_DIR + "/data/fixture/corpus.jsonl" +
                       " --override paths.positives=" + COACHPIPE_SOURCE_DIR + "/data/fixture/positives.jsonl";
  std::string first;
  for (int round = 0; round < 2; ++round) {
    fs::remove_all(wd);
    for (const char* stage : {"ingest", "split", "fit-units"}) {
      auto r = run_cli(std::string(stage) + common, dir.path());
      ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
    }
    auto snapshot = read_file(fs::path(wd) / "splits.json") + read_file(fs::path(wd) / "units/codebook.json") +
                    read_file(fs::path(wd) / "manifests/fit-units.json");
    if (round == 0) first = snapshot;
    else EXPECT_EQ(snapshot, first);
  }
}

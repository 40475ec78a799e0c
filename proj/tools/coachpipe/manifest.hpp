#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace coachpipe::cli {

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record of one subcommand run: hashed inputs and outputs, the
/// seed and the effective configuration. Paths under the work directory are
/// stored relative to it; others as given.
class Manifest {
 public:
  Manifest(std::string command, std::filesystem::path workdir, std::uint64_t seed,
           nlohmann::json config, std::vector<std::string> overrides);

  /// Files are hashed individually; directories contribute every regular
  /// file below them in sorted order.
  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;
  /// Writes <workdir>/manifests/<command>.json and returns its path.
  std::filesystem::path write() const;

 private:
  struct Entry {
    std::string path;
    std::string sha256;
  };
  void add(std::vector<Entry>& list, const std::filesystem::path& path) const;
  std::string display(const std::filesystem::path& path) const;

  std::string command_;
  std::filesystem::path workdir_;
  std::uint64_t seed_;
  nlohmann::json config_;
  std::vector<std::string> overrides_;
  std::vector<Entry> inputs_;
  std::vector<Entry> outputs_;
};

}  // namespace coachpipe::cli

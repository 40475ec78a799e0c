#include "manifest.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "coachpipe/errors.hpp"

namespace coachpipe::cli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest init failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

Manifest::Manifest(std::string command, fs::path workdir, std::uint64_t seed, nlohmann::json config,
                   std::vector<std::string> overrides)
    : command_(std::move(command)),
      workdir_(std::move(workdir)),
      seed_(seed),
      config_(std::move(config)),
      overrides_(std::move(overrides)) {}

std::string Manifest::display(const fs::path& path) const {
  auto rel = path.lexically_normal().lexically_relative(workdir_.lexically_normal());
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return path.lexically_normal().generic_string();
}

void Manifest::add(std::vector<Entry>& list, const fs::path& path) const {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) list.push_back({display(f), sha256_file(f)});
  } else {
    list.push_back({display(path), sha256_file(path)});
  }
}

void Manifest::input(const fs::path& path) { add(inputs_, path); }
void Manifest::output(const fs::path& path) { add(outputs_, path); }

nlohmann::ordered_json Manifest::to_json() const {
  auto entries = [](const std::vector<Entry>& list) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : list) {
      nlohmann::ordered_json j;
      j["path"] = e.path;
      j["sha256"] = e.sha256;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["seed"] = seed_;
  j["overrides"] = overrides_;
  j["config"] = config_;
  j["inputs"] = entries(inputs_);
  j["outputs"] = entries(outputs_);
  return j;
}

fs::path Manifest::write() const {
  fs::path dir = workdir_ / "manifests";
  fs::create_directories(dir);
  fs::path out = dir / (command_ + ".json");
  std::ofstream f(out);
  if (!f) throw ConfigError("cannot write " + out.string());
  f << to_json().dump(2) << '\n';
  return out;
}

}  // namespace coachpipe::cli

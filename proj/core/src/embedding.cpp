#include <cmath>
#include <string>

#include "coachpipe/seqmodel.hpp"
#include "coachpipe/text.hpp"

namespace coachpipe::seqmodel {

namespace {

constexpr std::string_view kHashPrefix = "hash-bow-";

bool is_separator(unsigned char c) {
  return c < 0x80 && !((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'));
}

std::vector<std::string> words(std::string_view text) {
  std::string lowered = text::to_lower_ascii(text);
  std::vector<std::string> out;
  std::string cur;
  for (char ch : lowered) {
    if (is_separator(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw ConfigError("embedder dimension must be positive");
}

std::string HashingEmbedder::id() const { return std::string(kHashPrefix) + std::to_string(dim_); }

std::vector<double> HashingEmbedder::encode(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  auto add = [&](std::string_view feature, double weight) {
    std::uint64_t h = text::fnv1a64(feature);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim_] += sign * weight;
  };
  for (const auto& w : words(text)) {
    add("w:" + w, 1.0);
    std::string padded = "#" + w + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      add("c:" + padded.substr(i, 3), 0.5);
    }
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::unique_ptr<EmbeddingProvider> make_embedder(std::string_view id) {
  if (id.substr(0, kHashPrefix.size()) == kHashPrefix) {
    std::string dim(id.substr(kHashPrefix.size()));
    try {
      std::size_t pos = 0;
      unsigned long d = std::stoul(dim, &pos);
      if (pos == dim.size() && d > 0) return std::make_unique<HashingEmbedder>(d);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown embedder '" + std::string(id) + "'");
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("squared_distance: dimension mismatch");
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace coachpipe::seqmodel

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace coachpipe::text {

/// Splits on ASCII whitespace; never yields empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string trim(std::string_view s);

/// Lower-cases ASCII letters only, leaving UTF-8 sequences untouched.
std::string to_lower_ascii(std::string_view s);

bool is_blank(std::string_view s);

bool starts_with_digit(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream = 0);

/// Uniform double in [0, 1) built from the top 53 bits; portable across
/// standard libraries, unlike std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng);

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

/// Formats a double with the shortest representation that round-trips,
/// dropping a trailing ".0" for integral values.
std::string format_number(double value);

}  // namespace coachpipe::text

#pragma once

// Seeded random streams. Every logical consumer (pool build, session, agent,
// MCMC chain) derives its own stream from (seed, stream id), so results do not
// depend on the order in which streams are created or consumed.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace trustcal {

// FNV-1a, used to turn readable stream names into stream ids.
constexpr std::uint64_t stream_id(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t stream_id(std::string_view name, std::uint64_t index) noexcept {
  std::uint64_t h = stream_id(name);
  for (int i = 0; i < 8; ++i) {
    h ^= (index >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform() { return unit_(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) { return mean + sd * normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace trustcal

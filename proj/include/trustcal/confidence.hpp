#pragma once

// Generative model of the AI's reported confidence. Each calibration condition
// draws the latent log-odds of the AI's confidence from a normal distribution
// whose mean depends on whether the AI is correct; the participant only sees
// the logistic of that value rounded to the nearest 10%.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trustcal/math.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

enum class Condition : std::uint8_t { standard = 0, overconfidence = 1, underconfidence = 2, reverse = 3 };

inline constexpr std::array<Condition, 4> kAllConditions = {
    Condition::standard, Condition::overconfidence, Condition::underconfidence, Condition::reverse};

inline constexpr std::size_t index_of(Condition c) noexcept { return static_cast<std::size_t>(c); }

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::standard: return "standard";
    case Condition::overconfidence: return "overconfidence";
    case Condition::underconfidence: return "underconfidence";
    case Condition::reverse: return "reverse";
  }
  throw std::invalid_argument("unknown condition");
}

inline Condition parse_condition(std::string_view label) {
  for (Condition c : kAllConditions) {
    if (to_string(c) == label) return c;
  }
  throw std::invalid_argument("unknown condition label '" + std::string(label) + "'");
}

struct ConditionSpec {
  Condition label = Condition::standard;
  double mu_correct = 1.0;  // logit units
  double mu_wrong = -1.0;   // logit units
  double sigma = 0.5;       // logit units
  double p_correct = 0.5;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("ConditionSpec: sigma must be > 0");
    if (!(p_correct > 0.0 && p_correct < 1.0))
      throw std::invalid_argument("ConditionSpec: p_correct must lie in (0, 1)");
    if (!std::isfinite(mu_correct) || !std::isfinite(mu_wrong))
      throw std::invalid_argument("ConditionSpec: means must be finite");
  }
};

inline ConditionSpec condition_spec(Condition label) {
  switch (label) {
    case Condition::standard: return {label, 1.0, -1.0, 0.5, 0.5};
    case Condition::overconfidence: return {label, 2.0, 0.0, 0.5, 0.5};
    case Condition::underconfidence: return {label, 0.0, -2.0, 0.5, 0.5};
    case Condition::reverse: return {label, -1.0, 1.0, 0.5, 0.5};
  }
  throw std::invalid_argument("unknown condition");
}

inline ConditionSpec condition_spec(std::string_view label) { return condition_spec(parse_condition(label)); }

struct TrialStimulus {
  bool ai_correct = false;
  double confidence_displayed = 0.5;  // multiple of 0.1
  double confidence_raw = 0.5;

  bool operator==(const TrialStimulus&) const = default;
};

// Nearest multiple of 0.1, represented as k / 10.0 so that equal grid points
// compare equal bit-for-bit.
inline double round_to_tenth(double c) { return std::round(c * 10.0) / 10.0; }

inline bool on_tenth_grid(double c) {
  return c >= 0.0 && c <= 1.0 && std::abs(c * 10.0 - std::round(c * 10.0)) < 1e-9;
}

inline TrialStimulus sample_trial(const ConditionSpec& spec, Rng& rng) {
  TrialStimulus s;
  s.ai_correct = rng.bernoulli(spec.p_correct);
  const double z = rng.normal(s.ai_correct ? spec.mu_correct : spec.mu_wrong, spec.sigma);
  s.confidence_raw = logistic(z);
  s.confidence_displayed = round_to_tenth(s.confidence_raw);
  return s;
}

struct StimulusPool {
  ConditionSpec condition;
  std::vector<TrialStimulus> items;
  std::uint64_t seed = 0;

  // Uniform draw with replacement.
  const TrialStimulus& draw(Rng& rng) const { return items[rng.index(items.size())]; }
};

inline constexpr std::size_t kDefaultPoolSize = 10000;

inline StimulusPool build_pool(const ConditionSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("build_pool: pool size must be >= 1");
  spec.validate();
  Rng rng(seed, stream_id("pool", index_of(spec.label)));
  StimulusPool pool{spec, {}, seed};
  pool.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pool.items.push_back(sample_trial(spec, rng));
  return pool;
}

namespace detail {

// Probability that a class with latent N(mu, sigma) lands in display bin k.
inline double display_bin_probability(int k, double mu, double sigma) {
  const double inf = std::numeric_limits<double>::infinity();
  const double lo_c = (k - 0.5) / 10.0;
  const double hi_c = (k + 0.5) / 10.0;
  const double lo = lo_c <= 0.0 ? -inf : logit(lo_c);
  const double hi = hi_c >= 1.0 ? inf : logit(hi_c);
  return normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
}

}  // namespace detail

// Likelihood-ratio rule on the displayed confidence: judge "AI correct" on bin
// k iff p * P(k | correct) >= (1 - p) * P(k | wrong).
inline std::array<bool, 11> ideal_observer_rule(const ConditionSpec& spec) {
  spec.validate();
  std::array<bool, 11> rule{};
  for (int k = 0; k <= 10; ++k) {
    const double pc = spec.p_correct * detail::display_bin_probability(k, spec.mu_correct, spec.sigma);
    const double pw = (1.0 - spec.p_correct) * detail::display_bin_probability(k, spec.mu_wrong, spec.sigma);
    rule[static_cast<std::size_t>(k)] = pc >= pw;
  }
  return rule;
}

// Monte-Carlo accuracy of the ideal observer who knows the generative model but
// sees only the displayed confidence.
inline double ideal_observer_accuracy(const ConditionSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1000) throw std::invalid_argument("ideal_observer_accuracy: need n >= 1000");
  const auto rule = ideal_observer_rule(spec);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const TrialStimulus s = sample_trial(spec, rng);
    const auto bin = static_cast<std::size_t>(std::lround(s.confidence_displayed * 10.0));
    hits += rule[bin] == s.ai_correct ? 1U : 0U;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// Expected accuracy of thresholding the raw confidence at `criterion`, judging
// "correct" on the side of the correct-class mean.
inline double criterion_accuracy(const ConditionSpec& spec, double criterion) {
  const double x = logit(criterion);
  const double below_correct = normal_cdf((x - spec.mu_correct) / spec.sigma);
  const double below_wrong = normal_cdf((x - spec.mu_wrong) / spec.sigma);
  if (spec.mu_correct > spec.mu_wrong)
    return spec.p_correct * (1.0 - below_correct) + (1.0 - spec.p_correct) * below_wrong;
  return spec.p_correct * below_correct + (1.0 - spec.p_correct) * (1.0 - below_wrong);
}

// Grid search over [0.01, 0.99] in steps of 0.001; the first maximum wins.
inline double optimal_criterion(const ConditionSpec& spec) {
  spec.validate();
  if (spec.mu_correct == spec.mu_wrong)
    throw std::invalid_argument("optimal_criterion: classes have equal means");
  double best = 0.0;
  double best_acc = -1.0;
  for (int i = 10; i <= 990; ++i) {
    const double t = i / 1000.0;
    const double acc = criterion_accuracy(spec, t);
    if (acc > best_acc) {
      best_acc = acc;
      best = t;
    }
  }
  return best;
}

namespace detail {

inline void append_fixed(std::string& out, double value, int precision) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, precision);
  out.append(buf, res.ptr);
}

}  // namespace detail

inline void write_pool_csv(std::ostream& os, const StimulusPool& pool) {
  std::string line;
  os << "index,ai_correct,confidence_raw,confidence_displayed\n";
  for (std::size_t i = 0; i < pool.items.size(); ++i) {
    const auto& it = pool.items[i];
    line = std::to_string(i);
    line += it.ai_correct ? ",1," : ",0,";
    detail::append_fixed(line, it.confidence_raw, 6);
    line += ',';
    detail::append_fixed(line, it.confidence_displayed, 6);
    line += '\n';
    os << line;
  }
}

}  // namespace trustcal

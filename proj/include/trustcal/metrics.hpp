#pragma once

// Behavioural statistics over trial logs: block accuracy, hit / false-alarm
// rates, d', expected calibration error, per-trial learning slopes, learner
// classification and model-fit summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trustcal/math.hpp"
#include "trustcal/records.hpp"

namespace trustcal {

// Inclusive range of 1-based trial indices.
struct TrialRange {
  std::size_t first = 1;
  std::size_t last = 50;
  bool contains(std::size_t t) const { return t >= first && t <= last; }
};

struct BlockSummary {
  TrialRange block_range;
  double accuracy = 0.0;
  std::optional<double> hit_rate;
  std::optional<double> false_alarm_rate;
  double d_prime = 0.0;
  std::size_t n_trials = 0;
};

struct HrFar {
  std::optional<double> hit_rate;
  std::optional<double> false_alarm_rate;
  std::size_t hits = 0, n_signal = 0, false_alarms = 0, n_noise = 0;
};

inline HrFar hr_far(std::span<const TrialRecord> records, TrialRange range) {
  HrFar out;
  for (const auto& r : records) {
    if (!range.contains(r.trial_index)) continue;
    if (r.ai_correct) {
      ++out.n_signal;
      out.hits += r.human_judged_correct ? 1U : 0U;
    } else {
      ++out.n_noise;
      out.false_alarms += r.human_judged_correct ? 1U : 0U;
    }
  }
  if (out.n_signal > 0) out.hit_rate = static_cast<double>(out.hits) / static_cast<double>(out.n_signal);
  if (out.n_noise > 0) out.false_alarm_rate = static_cast<double>(out.false_alarms) / static_cast<double>(out.n_noise);
  return out;
}

enum class DPrimeCorrection { log_linear, none };

inline double dprime_from_rates(double hit_rate, double false_alarm_rate) {
  return normal_quantile(hit_rate) - normal_quantile(false_alarm_rate);
}

// Log-linear correction: HR* = (hits + 0.5) / (n_signal + 1), likewise FAR*.
inline double dprime(std::size_t hits, std::size_t n_signal, std::size_t false_alarms, std::size_t n_noise,
                     DPrimeCorrection correction = DPrimeCorrection::log_linear) {
  if (n_signal < 1 || n_noise < 1) throw std::invalid_argument("dprime: need at least one signal and one noise trial");
  if (hits > n_signal || false_alarms > n_noise) throw std::invalid_argument("dprime: counts exceed class sizes");
  const auto h = static_cast<double>(hits), ns = static_cast<double>(n_signal);
  const auto f = static_cast<double>(false_alarms), nn = static_cast<double>(n_noise);
  if (correction == DPrimeCorrection::log_linear) return dprime_from_rates((h + 0.5) / (ns + 1.0), (f + 0.5) / (nn + 1.0));
  return dprime_from_rates(h / ns, f / nn);
}

inline double accuracy(std::span<const TrialRecord> records, TrialRange range) {
  std::size_t n = 0, k = 0;
  for (const auto& r : records) {
    if (!range.contains(r.trial_index)) continue;
    ++n;
    k += r.human_correct ? 1U : 0U;
  }
  if (n == 0) throw std::invalid_argument("accuracy: no trials in range");
  return static_cast<double>(k) / static_cast<double>(n);
}

// Blocks are consecutive trial-index windows [1, k], [k+1, 2k], ...; the last
// block may be partial. Records from many participants pool into the same
// blocks.
inline std::vector<BlockSummary> block_accuracy(std::span<const TrialRecord> records, std::size_t block_size = 10) {
  if (block_size == 0) throw std::invalid_argument("block_accuracy: block_size must be >= 1");
  if (records.empty()) throw std::invalid_argument("block_accuracy: no records");
  std::size_t max_trial = 0;
  for (const auto& r : records) max_trial = std::max(max_trial, r.trial_index);
  std::vector<BlockSummary> out;
  for (std::size_t first = 1; first <= max_trial; first += block_size) {
    const TrialRange range{first, std::min(first + block_size - 1, max_trial)};
    BlockSummary b;
    b.block_range = range;
    std::size_t k = 0;
    for (const auto& r : records) {
      if (!range.contains(r.trial_index)) continue;
      ++b.n_trials;
      k += r.human_correct ? 1U : 0U;
    }
    if (b.n_trials == 0) continue;
    b.accuracy = static_cast<double>(k) / static_cast<double>(b.n_trials);
    const HrFar hf = hr_far(records, range);
    b.hit_rate = hf.hit_rate;
    b.false_alarm_rate = hf.false_alarm_rate;
    if (hf.n_signal > 0 && hf.n_noise > 0) b.d_prime = dprime(hf.hits, hf.n_signal, hf.false_alarms, hf.n_noise);
    out.push_back(b);
  }
  return out;
}

struct CalibrationBin {
  double bin_center = 0.0;
  std::size_t n = 0;
  double ai_accuracy = 0.0;
  double perceived_accuracy = 0.0;
};

struct CalibrationReport {
  std::array<CalibrationBin, 11> bins{};
  double ece = 0.0;
  std::size_t n_trials = 0;
};

// Eleven bins on the displayed confidence grid. Perceived accuracy is the share
// of trials judged "AI correct"; empty bins contribute nothing.
inline CalibrationReport ece(std::span<const TrialRecord> records) {
  if (records.empty()) throw std::invalid_argument("ece: no records");
  CalibrationReport rep;
  std::array<std::size_t, 11> ai{}, human{};
  for (const auto& r : records) {
    const auto k = static_cast<std::size_t>(std::lround(r.ai_confidence * 10.0));
    if (k > 10) throw std::invalid_argument("ece: confidence outside [0, 1]");
    ++rep.bins[k].n;
    ai[k] += r.ai_correct ? 1U : 0U;
    human[k] += r.human_judged_correct ? 1U : 0U;
  }
  const auto total = static_cast<double>(records.size());
  for (std::size_t k = 0; k <= 10; ++k) {
    auto& b = rep.bins[k];
    b.bin_center = static_cast<double>(k) / 10.0;
    if (b.n == 0) continue;
    const auto n = static_cast<double>(b.n);
    b.ai_accuracy = static_cast<double>(ai[k]) / n;
    b.perceived_accuracy = static_cast<double>(human[k]) / n;
    rep.ece += (n / total) * std::abs(b.ai_accuracy - b.perceived_accuracy);
  }
  rep.n_trials = records.size();
  return rep;
}

inline CalibrationReport ece(std::span<const TrialRecord> records, TrialRange range) {
  std::vector<TrialRecord> sel;
  for (const auto& r : records)
    if (range.contains(r.trial_index)) sel.push_back(r);
  return ece(sel);
}

// ---------------------------------------------------------------------------
// Learning slope: logistic regression of correctness on trial index.

struct SlopeFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_variance = 0.0;
  std::size_t iterations = 0;
  bool separated = false;
};

inline constexpr double kSlopeCap = 5.0;

// Newton / IRLS for logit P(correct) = a + beta * t, at most 50 iterations,
// stopping once the coefficient change falls below 1e-8.
inline SlopeFit learning_slope(std::span<const TrialRecord> records) {
  if (records.size() < 20) throw std::invalid_argument("learning_slope: need at least 20 trials");
  SlopeFit fit;
  std::size_t successes = 0;
  for (const auto& r : records) successes += r.human_correct ? 1U : 0U;
  if (successes == 0 || successes == records.size()) {
    fit.separated = true;
    fit.slope = 0.0;
    fit.slope_variance = std::numeric_limits<double>::infinity();
    return fit;
  }

  double a = 0.0, beta = 0.0;
  double i00 = 0.0, i01 = 0.0, i11 = 0.0;
  for (fit.iterations = 1; fit.iterations <= 50; ++fit.iterations) {
    double g0 = 0.0, g1 = 0.0;
    i00 = i01 = i11 = 0.0;
    for (const auto& r : records) {
      const auto t = static_cast<double>(r.trial_index);
      const double p = logistic(a + beta * t);
      const double resid = (r.human_correct ? 1.0 : 0.0) - p;
      const double wgt = p * (1.0 - p);
      g0 += resid;
      g1 += resid * t;
      i00 += wgt;
      i01 += wgt * t;
      i11 += wgt * t * t;
    }
    const double det = i00 * i11 - i01 * i01;
    if (!(det > 0.0)) {
      fit.separated = true;
      break;
    }
    const double da = (i11 * g0 - i01 * g1) / det;
    const double db = (i00 * g1 - i01 * g0) / det;
    a += da;
    beta += db;
    if (std::abs(beta) > kSlopeCap) {
      fit.separated = true;
      break;
    }
    if (std::abs(da) < 1e-8 && std::abs(db) < 1e-8) break;
  }
  if (fit.iterations > 50) fit.iterations = 50;
  fit.intercept = a;
  fit.slope = std::clamp(beta, -kSlopeCap, kSlopeCap);
  const double det = i00 * i11 - i01 * i01;
  fit.slope_variance = det > 0.0 ? i00 / det : std::numeric_limits<double>::infinity();
  return fit;
}

struct CohortSlope {
  double slope = 0.0;
  double standard_error = 0.0;
  std::size_t n_participants = 0;
  std::size_t n_separated = 0;
};

// Inverse-variance weighted mean of per-participant slopes. Participants whose
// fit hit separation carry no usable variance and are left out of the pool.
inline CohortSlope cohort_learning_slope(std::span<const std::vector<TrialRecord>> participants) {
  CohortSlope out;
  double wsum = 0.0, wbeta = 0.0;
  for (const auto& recs : participants) {
    const SlopeFit f = learning_slope(recs);
    ++out.n_participants;
    if (f.separated || !(f.slope_variance > 0.0) || !std::isfinite(f.slope_variance)) {
      ++out.n_separated;
      continue;
    }
    const double w = 1.0 / f.slope_variance;
    wsum += w;
    wbeta += w * f.slope;
  }
  if (wsum > 0.0) {
    out.slope = wbeta / wsum;
    out.standard_error = std::sqrt(1.0 / wsum);
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class LearnerLabel { learner, non_learner };

inline constexpr TrialRange kLateTrials{31, 50};
inline constexpr double kLearnerThreshold = 0.60;

inline LearnerLabel classify_learner(std::span<const TrialRecord> records) {
  std::size_t n = 0, k = 0;
  for (const auto& r : records) {
    if (!kLateTrials.contains(r.trial_index)) continue;
    ++n;
    k += r.human_correct ? 1U : 0U;
  }
  if (n < 20) throw std::invalid_argument("classify_learner: trials 31-50 incomplete");
  return static_cast<double>(k) / static_cast<double>(n) > kLearnerThreshold ? LearnerLabel::learner
                                                                              : LearnerLabel::non_learner;
}

struct ModelFitStats {
  double agreement = 0.0;
  double mean_loglik_per_trial = 0.0;
  double mcfadden_r2 = 0.0;
  std::size_t n_trials = 0;
};

inline constexpr double kProbabilityFloor = 1e-9;

inline double clamp_probability(double v) { return std::clamp(v, kProbabilityFloor, 1.0 - kProbabilityFloor); }

// `predicted[i]` is the model's probability that record i was judged "AI
// correct". A prediction of exactly 0.5 counts as predicting "correct".
inline ModelFitStats model_fit_stats(std::span<const double> predicted, std::span<const TrialRecord> records) {
  if (predicted.size() != records.size()) throw std::invalid_argument("model_fit_stats: one prediction per record");
  ModelFitStats s;
  s.n_trials = records.size();
  if (records.empty()) return s;
  std::size_t agree = 0, ones = 0;
  double ll = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool y = records[i].human_judged_correct;
    const double v = clamp_probability(predicted[i]);
    agree += ((predicted[i] >= 0.5) == y) ? 1U : 0U;
    ones += y ? 1U : 0U;
    ll += y ? std::log(v) : std::log1p(-v);
  }
  const auto n = static_cast<double>(records.size());
  const double base = clamp_probability(static_cast<double>(ones) / n);
  const double ll_null = static_cast<double>(ones) * std::log(base) + (n - static_cast<double>(ones)) * std::log1p(-base);
  s.agreement = static_cast<double>(agree) / n;
  s.mean_loglik_per_trial = ll / n;
  s.mcfadden_r2 = ll_null < 0.0 ? 1.0 - ll / ll_null : 0.0;
  return s;
}

// Groups records by participant, each group sorted by trial index; groups are
// ordered by participant id.
inline std::vector<std::vector<TrialRecord>> split_by_participant(std::span<const TrialRecord> records) {
  std::map<std::string, std::vector<TrialRecord>> groups;
  for (const auto& r : records) groups[r.participant_id].push_back(r);
  std::vector<std::vector<TrialRecord>> out;
  out.reserve(groups.size());
  for (auto& [_, recs] : groups) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const TrialRecord& x, const TrialRecord& y) { return x.trial_index < y.trial_index; });
    out.push_back(std::move(recs));
  }
  return out;
}

}  // namespace trustcal

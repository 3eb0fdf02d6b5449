#pragma once

// Per-participant posterior-mode fits with the hyperparameters held fixed.
// Quick to run and used for parameter-recovery studies; the full hierarchical
// posterior comes from the sampler in mcmc.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "trustcal/agent.hpp"
#include "trustcal/model.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

struct SimplexOptions {
  double initial_step = 0.5;
  double diameter_tolerance = 1e-6;
  std::size_t max_evaluations = 10000;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

// Nelder-Mead minimisation (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2). Converged once every vertex lies within `diameter_tolerance`
// (Euclidean) of the best one.
template <class F>
SimplexResult nelder_mead(F&& f, std::vector<double> x0, const SimplexOptions& opt = {}) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  SimplexResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(std::span<const double>(x));
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto diameter = [&](std::size_t best) {
    double d = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += (pts[i][j] - pts[best][j]) * (pts[i][j] - pts[best][j]);
      d = std::max(d, std::sqrt(s));
    }
    return d;
  };

  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (diameter(best) < opt.diameter_tolerance) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opt.max_evaluations) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < n; ++j) trial[j] = centroid[j] + (centroid[j] - pts[worst][j]);
    const double fr = eval(trial);
    if (fr < vals[best]) {
      for (std::size_t j = 0; j < n; ++j) trial2[j] = centroid[j] + 2.0 * (centroid[j] - pts[worst][j]);
      const double fe = eval(trial2);
      if (fe < fr) {
        pts[worst] = trial2;
        vals[worst] = fe;
      } else {
        pts[worst] = trial;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = trial;
      vals[worst] = fr;
      continue;
    }
    // Contraction, outside if the reflection improved on the worst vertex.
    const bool outside = fr < vals[worst];
    for (std::size_t j = 0; j < n; ++j)
      trial2[j] = outside ? centroid[j] + 0.5 * (trial[j] - centroid[j]) : centroid[j] + 0.5 * (pts[worst][j] - centroid[j]);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = trial2;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
  res.value = *best_it;
  return res;
}

// Unconstrained coordinates: (b0, w0, logit of the four learning rates).
inline std::array<double, 6> to_unconstrained(const AgentParams& p) {
  return {p.b0, p.w0, logit(p.alpha_b_correct), logit(p.alpha_b_wrong), logit(p.alpha_w_correct), logit(p.alpha_w_wrong)};
}

inline AgentParams from_unconstrained(std::span<const double> x) {
  return {x[0], x[1], logistic(x[2]), logistic(x[3]), logistic(x[4]), logistic(x[5])};
}

struct MapOptions {
  std::size_t restarts = 20;
  std::uint64_t seed = 0;
  SimplexOptions simplex{};
};

struct FitResult {
  AgentParams params;
  double log_posterior_at_mode = 0.0;
  bool converged = false;
  std::size_t n_evaluations = 0;
};

// Maximises log_likelihood + log_prior_participant over the unconstrained
// coordinates, restarting the simplex from prior draws and keeping the best.
inline FitResult fit_map(std::span<const Observation> trials, const HyperParams& hyper, Condition condition,
                         const MapOptions& options = {}) {
  hyper.validate();
  const RateHyper& rh = hyper.rates[index_of(condition)];
  auto objective = [&](std::span<const double> x) {
    const AgentParams p = from_unconstrained(x);
    double lp = normal_log_pdf(x[0], hyper.mu_b0, hyper.sigma_b0) + normal_log_pdf(x[1], hyper.mu_w0, hyper.sigma_w0);
    for (std::size_t k = 0; k < 4; ++k) lp += normal_log_pdf(x[2 + k], rh.mu[k], rh.sigma[k]);
    // Rates that round to exactly 0 or 1 are outside the model.
    for (std::size_t k = 0; k < 4; ++k) {
      const double a = logistic(x[2 + k]);
      if (!(a > 0.0 && a < 1.0)) return std::numeric_limits<double>::infinity();
    }
    return -(lp + log_likelihood(p, trials));
  };

  Rng rng(options.seed, stream_id("map-restart"));
  FitResult best;
  best.log_posterior_at_mode = -std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double> x0(6);
    x0[0] = rng.normal(hyper.mu_b0, hyper.sigma_b0);
    x0[1] = rng.normal(hyper.mu_w0, hyper.sigma_w0);
    for (std::size_t k = 0; k < 4; ++k) x0[2 + k] = rng.normal(rh.mu[k], rh.sigma[k]);
    const SimplexResult sr = nelder_mead(objective, std::move(x0), options.simplex);
    best.n_evaluations += sr.evaluations;
    if (-sr.value > best.log_posterior_at_mode) {
      best.log_posterior_at_mode = -sr.value;
      best.params = from_unconstrained(sr.x);
      best.converged = sr.converged;
    }
  }
  return best;
}

inline FitResult fit_map(std::span<const TrialRecord> records, const HyperParams& hyper, Condition condition,
                         const MapOptions& options = {}) {
  std::vector<Observation> obs;
  obs.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].trial_index <= records[i - 1].trial_index)
      throw std::invalid_argument("fit_map: records are not ordered by trial_index");
    obs.push_back({records[i].ai_confidence, records[i].ai_correct, records[i].human_judged_correct});
  }
  return fit_map(obs, hyper, condition, options);
}

}  // namespace trustcal

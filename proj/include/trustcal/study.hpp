#pragma once

// Synthetic cohorts and parameter recovery.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trustcal/agent.hpp"
#include "trustcal/confidence.hpp"
#include "trustcal/map_fit.hpp"
#include "trustcal/metrics.hpp"
#include "trustcal/model.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

inline std::string agent_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "agent%04zu", i + 1);
  return buf;
}

// Population used when simulate draws agents rather than taking fixed rates:
// initial trust and sensitivity spread around the preset values, logit rates
// around the rate-prior centre.
struct AgentPopulation {
  double b0_mean = 0.60, b0_sd = 0.56;
  double w0_mean = 0.69, w0_sd = 1.8;
  double logit_rate_mean = kMuRateMean, logit_rate_sd = 1.0;

  // Exactly the hierarchical prior centre; used for recovery studies.
  static AgentPopulation prior_centre() { return {0.0, 1.0, 0.0, 1.0, kMuRateMean, 1.0}; }

  AgentParams draw(Rng& rng) const {
    AgentParams p;
    p.b0 = rng.normal(b0_mean, b0_sd);
    p.w0 = rng.normal(w0_mean, w0_sd);
    p.alpha_b_correct = logistic(rng.normal(logit_rate_mean, logit_rate_sd));
    p.alpha_b_wrong = logistic(rng.normal(logit_rate_mean, logit_rate_sd));
    p.alpha_w_correct = logistic(rng.normal(logit_rate_mean, logit_rate_sd));
    p.alpha_w_wrong = logistic(rng.normal(logit_rate_mean, logit_rate_sd));
    return p;
  }
};

struct SimulatedAgent {
  std::string id;
  AgentParams params;
  std::vector<SimulatedTrial> trials;
};

// Agent i uses stream ("agent", i) for both its parameter draw and its trials.
// `params_of(i, rng)` supplies the parameters of agent i.
inline std::vector<SimulatedAgent> simulate_cohort(std::size_t n_agents, std::size_t n_trials, Condition condition,
                                                   std::uint64_t seed,
                                                   const std::function<AgentParams(std::size_t, Rng&)>& params_of,
                                                   const ResponsePolicy& policy = ResponsePolicy::probability_match()) {
  if (n_agents == 0) throw std::invalid_argument("simulate_cohort: need at least one agent");
  if (n_trials == 0) throw std::invalid_argument("simulate_cohort: need at least one trial");
  const ConditionSpec spec = condition_spec(condition);
  std::vector<SimulatedAgent> out;
  out.reserve(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    Rng rng(seed, stream_id("agent", i));
    SimulatedAgent a;
    a.id = agent_id(i);
    a.params = params_of(i, rng);
    a.trials = simulate_participant(a.params, spec, n_trials, policy, rng, a.id);
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<SimulatedAgent> simulate_cohort(std::size_t n_agents, std::size_t n_trials, Condition condition,
                                                   std::uint64_t seed, const AgentParams& fixed,
                                                   const ResponsePolicy& policy = ResponsePolicy::probability_match()) {
  return simulate_cohort(n_agents, n_trials, condition, seed, [&](std::size_t, Rng&) { return fixed; }, policy);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal samples of size >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline constexpr std::array<const char*, 6> kParameterNames = {"b0",           "w0",
                                                               "alpha_b_correct", "alpha_b_wrong",
                                                               "alpha_w_correct", "alpha_w_wrong"};

struct RecoveryRun {
  std::size_t n_agents = 0;
  std::size_t n_trials = 0;
  // Unconstrained scale: b0, w0 and logit learning rates.
  std::array<std::vector<double>, 6> truth;
  std::array<std::vector<double>, 6> fitted;
  std::array<double, 6> correlation{};
  std::size_t n_converged = 0;
};

// Draws agents from the prior centre, cycles them through the four conditions,
// simulates and refits each one by MAP with hypers fixed at their prior means.
inline RecoveryRun run_recovery(std::size_t n_agents, std::size_t n_trials, std::uint64_t seed,
                                const MapOptions& map = {}) {
  if (n_agents < 2) throw std::invalid_argument("run_recovery: need at least two agents");
  if (n_trials == 0) throw std::invalid_argument("run_recovery: need at least one trial");
  const HyperParams hyper = HyperParams::prior_means();
  const AgentPopulation pop = AgentPopulation::prior_centre();
  RecoveryRun run;
  run.n_agents = n_agents;
  run.n_trials = n_trials;
  for (std::size_t i = 0; i < n_agents; ++i) {
    Rng rng(seed, stream_id("agent", i));
    const AgentParams truth = pop.draw(rng);
    const Condition cond = kAllConditions[i % kAllConditions.size()];
    const auto sims = simulate_participant(truth, condition_spec(cond), n_trials, ResponsePolicy::probability_match(),
                                           rng, agent_id(i));
    MapOptions opt = map;
    opt.seed = seed ^ stream_id("fit", i);
    const FitResult fit = fit_map(std::span<const TrialRecord>(records_of(sims)), hyper, cond, opt);
    run.n_converged += fit.converged ? 1U : 0U;
    const auto u = to_unconstrained(truth);
    const auto v = to_unconstrained(fit.params);
    for (std::size_t k = 0; k < 6; ++k) {
      run.truth[k].push_back(u[k]);
      run.fitted[k].push_back(v[k]);
    }
  }
  for (std::size_t k = 0; k < 6; ++k) run.correlation[k] = pearson(run.truth[k], run.fitted[k]);
  return run;
}

}  // namespace trustcal

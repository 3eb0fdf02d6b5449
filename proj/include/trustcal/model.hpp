#pragma once

// Hierarchical observation model. Each participant's judgments are Bernoulli
// draws with the agent's perceived accuracy; initial trust and sensitivity share
// experiment-wide normal priors, and the logit learning rates share normal
// priors per calibration condition.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trustcal/agent.hpp"
#include "trustcal/confidence.hpp"
#include "trustcal/math.hpp"
#include "trustcal/metrics.hpp"
#include "trustcal/records.hpp"

namespace trustcal {

enum class RateFamily : std::size_t { b_correct = 0, b_wrong = 1, w_correct = 2, w_wrong = 3 };

inline constexpr std::array<RateFamily, 4> kRateFamilies = {RateFamily::b_correct, RateFamily::b_wrong,
                                                            RateFamily::w_correct, RateFamily::w_wrong};

inline std::string_view to_string(RateFamily r) {
  switch (r) {
    case RateFamily::b_correct: return "alpha_b_correct";
    case RateFamily::b_wrong: return "alpha_b_wrong";
    case RateFamily::w_correct: return "alpha_w_correct";
    case RateFamily::w_wrong: return "alpha_w_wrong";
  }
  return "?";
}

inline double rate_of(const AgentParams& p, RateFamily r) {
  switch (r) {
    case RateFamily::b_correct: return p.alpha_b_correct;
    case RateFamily::b_wrong: return p.alpha_b_wrong;
    case RateFamily::w_correct: return p.alpha_w_correct;
    case RateFamily::w_wrong: return p.alpha_w_wrong;
  }
  return 0.0;
}

inline double& rate_of(AgentParams& p, RateFamily r) {
  switch (r) {
    case RateFamily::b_correct: return p.alpha_b_correct;
    case RateFamily::b_wrong: return p.alpha_b_wrong;
    case RateFamily::w_correct: return p.alpha_w_correct;
    case RateFamily::w_wrong: break;
  }
  return p.alpha_w_wrong;
}

struct RateHyper {
  std::array<double, 4> mu{-1.5, -1.5, -1.5, -1.5};  // logit scale
  std::array<double, 4> sigma{1.0, 1.0, 1.0, 1.0};
};

struct HyperParams {
  double mu_b0 = 0.0;
  double sigma_b0 = 1.0;
  double mu_w0 = 0.0;
  double sigma_w0 = 1.0;
  std::array<RateHyper, 4> rates{};  // indexed by Condition

  // Prior means of every hyperparameter; used as the fixed hypers for MAP fits.
  static HyperParams prior_means() { return {}; }

  void validate() const {
    auto pos = [](double s) { return s > 0.0 && std::isfinite(s); };
    if (!pos(sigma_b0) || !pos(sigma_w0)) throw std::invalid_argument("HyperParams: sigma must be > 0");
    for (const auto& rh : rates)
      for (double s : rh.sigma)
        if (!pos(s)) throw std::invalid_argument("HyperParams: sigma must be > 0");
  }
};

// Hyperprior constants.
inline constexpr double kMuInitMean = 0.0, kMuInitSd = 1.0;
inline constexpr double kMuRateMean = -1.5, kMuRateSd = 1.5;
inline constexpr double kSigmaRate = 1.0;  // Exponential(1) on every scale

// One participant's observations, ordered by trial.
struct Observation {
  double confidence = 0.5;  // displayed
  bool ai_correct = false;
  bool judged_correct = false;
  double log_odds = 0.0;    // logit of the clamped confidence

  Observation() = default;
  Observation(double c, bool g, bool y)
      : confidence(c), ai_correct(g), judged_correct(y), log_odds(logit(clamp_confidence(c))) {}
};

struct ParticipantData {
  std::string id;
  Condition condition = Condition::standard;
  std::vector<Observation> trials;
  std::vector<TrialRecord> records;
};

// Groups a trial log by participant (ordered by id). Throws when a participant
// mixes conditions or repeats a trial index.
inline std::vector<ParticipantData> group_participants(std::span<const TrialRecord> records) {
  std::vector<ParticipantData> out;
  for (auto& recs : split_by_participant(records)) {
    ParticipantData p;
    p.id = recs.front().participant_id;
    p.condition = recs.front().condition;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].condition != p.condition)
        throw std::invalid_argument("participant " + p.id + " appears under more than one condition");
      if (i > 0 && recs[i].trial_index == recs[i - 1].trial_index)
        throw std::invalid_argument("participant " + p.id + " repeats trial " + std::to_string(recs[i].trial_index));
      p.trials.push_back({recs[i].ai_confidence, recs[i].ai_correct, recs[i].human_judged_correct});
    }
    p.records = std::move(recs);
    out.push_back(std::move(p));
  }
  return out;
}

// Same recursion as `learn`, on precomputed log-odds.
inline double log_likelihood(const AgentParams& params, std::span<const Observation> trials) {
  static const double lo = std::log(kProbabilityFloor), hi = std::log1p(-kProbabilityFloor);
  double b = params.b0, w = params.w0;
  double ll = 0.0;
  for (const auto& o : trials) {
    const double eta = b + w * o.log_odds;
    const double e = std::exp(-std::abs(eta));
    const double l1p = std::log1p(e);
    const double v = eta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    // log v and log(1 - v), clamped like clamp_probability(v)
    const double log_v = eta >= 0.0 ? -l1p : eta - l1p;
    const double log_not_v = eta >= 0.0 ? -eta - l1p : -l1p;
    ll += std::clamp(o.judged_correct ? log_v : log_not_v, lo, hi);
    const double delta = (o.ai_correct ? 1.0 : 0.0) - v;
    b += params.alpha_b(o.ai_correct) * delta;
    w += params.alpha_w(o.ai_correct) * delta * o.log_odds;
  }
  return ll;
}

// Sum over trials of y ln v + (1 - y) ln(1 - v); 0 for an empty log.
inline double log_likelihood(const AgentParams& params, std::span<const TrialRecord> records) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].trial_index <= records[i - 1].trial_index)
      throw std::invalid_argument("log_likelihood: records are not ordered by trial_index");
  }
  std::vector<Observation> obs;
  obs.reserve(records.size());
  for (const auto& r : records) obs.push_back({r.ai_confidence, r.ai_correct, r.human_judged_correct});
  return log_likelihood(params, obs);
}

// Per-trial perceived accuracy under `params`, replayed over the log.
inline std::vector<double> predicted_v(const AgentParams& params, std::span<const Observation> trials) {
  std::vector<double> out;
  out.reserve(trials.size());
  AgentState state = AgentState::initial(params);
  for (const auto& o : trials) {
    const UpdateResult step = learn(state, o.confidence, o.ai_correct, params);
    out.push_back(step.v);
    state = step.next;
  }
  return out;
}

// Density of (b0, w0, logit alphas); learning rates are scored on the logit
// scale, which is where the samplers move.
inline double log_prior_participant(const AgentParams& params, const HyperParams& hyper, Condition condition) {
  hyper.validate();
  double lp = normal_log_pdf(params.b0, hyper.mu_b0, hyper.sigma_b0) + normal_log_pdf(params.w0, hyper.mu_w0, hyper.sigma_w0);
  const RateHyper& rh = hyper.rates[index_of(condition)];
  for (RateFamily r : kRateFamilies) {
    const double a = rate_of(params, r);
    if (!(a > 0.0 && a < 1.0)) throw std::domain_error("log_prior_participant: learning rate outside (0, 1)");
    const auto k = static_cast<std::size_t>(r);
    lp += normal_log_pdf(logit(a), rh.mu[k], rh.sigma[k]);
  }
  return lp;
}

inline double log_prior_hyper(const HyperParams& hyper) {
  hyper.validate();
  double lp = normal_log_pdf(hyper.mu_b0, kMuInitMean, kMuInitSd) + normal_log_pdf(hyper.mu_w0, kMuInitMean, kMuInitSd);
  lp += -kSigmaRate * hyper.sigma_b0 - kSigmaRate * hyper.sigma_w0;
  for (const auto& rh : hyper.rates) {
    for (std::size_t k = 0; k < 4; ++k) {
      lp += normal_log_pdf(rh.mu[k], kMuRateMean, kMuRateSd);
      lp += -kSigmaRate * rh.sigma[k];
    }
  }
  return lp;
}

// Joint log density over all participants (aligned with `data`) and hypers.
inline double log_posterior(std::span<const AgentParams> participants, const HyperParams& hyper,
                            std::span<const ParticipantData> data) {
  if (participants.size() != data.size())
    throw std::invalid_argument("log_posterior: parameter sets and participants do not match");
  double lp = log_prior_hyper(hyper);
  for (std::size_t i = 0; i < data.size(); ++i) {
    lp += log_likelihood(participants[i], data[i].trials);
    lp += log_prior_participant(participants[i], hyper, data[i].condition);
  }
  return lp;
}

}  // namespace trustcal

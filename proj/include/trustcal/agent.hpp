#pragma once

// Learning observer of AI confidence. Perceived accuracy is linear in the
// log-odds of the displayed confidence,
//
//   logit(v) = b + w * logit(c),
//
// and after each trial both b (baseline trust) and w (confidence sensitivity)
// take a delta-rule step on the prediction error g - v, with separate learning
// rates for trials where the AI was correct and wrong.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trustcal/confidence.hpp"
#include "trustcal/math.hpp"
#include "trustcal/records.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

struct AgentParams {
  double b0 = 0.0;
  double w0 = 1.0;
  double alpha_b_correct = 0.18;
  double alpha_b_wrong = 0.18;
  double alpha_w_correct = 0.18;
  double alpha_w_wrong = 0.18;

  double alpha_b(bool ai_correct) const { return ai_correct ? alpha_b_correct : alpha_b_wrong; }
  double alpha_w(bool ai_correct) const { return ai_correct ? alpha_w_correct : alpha_w_wrong; }

  // Simulation accepts rates in [0, 1] (0 gives an inert learner); inference
  // works on the logit scale and requires the open interval.
  void validate() const {
    if (!std::isfinite(b0) || !std::isfinite(w0)) throw std::invalid_argument("AgentParams: b0/w0 must be finite");
    for (double a : {alpha_b_correct, alpha_b_wrong, alpha_w_correct, alpha_w_wrong}) {
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("AgentParams: learning rates must lie in [0, 1]");
    }
  }

  bool operator==(const AgentParams&) const = default;
};

struct AgentState {
  double b = 0.0;
  double w = 0.0;
  std::size_t trial_index = 0;

  static AgentState initial(const AgentParams& p) { return {p.b0, p.w0, 0}; }
  bool operator==(const AgentState&) const = default;
};

struct ResponsePolicy {
  enum class Kind { probability_match, threshold };
  Kind kind = Kind::probability_match;
  double threshold = 0.5;

  static ResponsePolicy probability_match() { return {}; }
  static ResponsePolicy thresholded(double t = 0.5) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("ResponsePolicy: threshold must lie in (0, 1)");
    return {Kind::threshold, t};
  }
};

inline double perceive(const AgentState& s, double c) {
  return logistic(s.b + s.w * logit(clamp_confidence(c)));
}

struct UpdateResult {
  AgentState next;
  double v = 0.5;      // perception before the update
  double delta = 0.0;  // g - v
};

inline UpdateResult learn(const AgentState& s, double c, bool g, const AgentParams& p) {
  const double x = logit(clamp_confidence(c));
  const double v = logistic(s.b + s.w * x);
  const double delta = (g ? 1.0 : 0.0) - v;
  return {{s.b + p.alpha_b(g) * delta, s.w + p.alpha_w(g) * delta * x, s.trial_index + 1}, v, delta};
}

inline AgentState update(const AgentState& s, double c, bool g, const AgentParams& p) {
  return learn(s, c, g, p).next;
}

// Ties at the threshold resolve to "correct".
inline bool respond(double v, const ResponsePolicy& policy, Rng& rng) {
  if (policy.kind == ResponsePolicy::Kind::threshold) return v >= policy.threshold;
  return rng.bernoulli(v);
}

struct SimulatedTrial {
  TrialRecord record;
  double confidence_raw = 0.5;
  double v = 0.5;  // perception used for the judgment
  double b = 0.0;  // state at judgment time, before the update
  double w = 0.0;
};

// Runs one synthetic participant. Feedback is shown on every trial, so the
// state is updated with the true AI correctness regardless of the response.
inline std::vector<SimulatedTrial> simulate_participant(const AgentParams& params, const ConditionSpec& spec,
                                                        std::size_t n_trials, const ResponsePolicy& policy, Rng& rng,
                                                        const std::string& participant_id = "sim") {
  params.validate();
  spec.validate();
  std::vector<SimulatedTrial> out;
  out.reserve(n_trials);
  AgentState state = AgentState::initial(params);
  for (std::size_t t = 1; t <= n_trials; ++t) {
    const TrialStimulus stim = sample_trial(spec, rng);
    const UpdateResult step = learn(state, stim.confidence_displayed, stim.ai_correct, params);
    const bool judged = respond(step.v, policy, rng);

    SimulatedTrial rec;
    rec.record.participant_id = participant_id;
    rec.record.condition = spec.label;
    rec.record.trial_index = t;
    rec.record.ai_confidence = stim.confidence_displayed;
    rec.record.ai_correct = stim.ai_correct;
    rec.record.human_judged_correct = judged;
    rec.record.human_correct = judged == stim.ai_correct;
    rec.confidence_raw = stim.confidence_raw;
    rec.v = step.v;
    rec.b = state.b;
    rec.w = state.w;
    out.push_back(std::move(rec));
    state = step.next;
  }
  return out;
}

inline std::vector<TrialRecord> records_of(std::span<const SimulatedTrial> sims) {
  std::vector<TrialRecord> out;
  out.reserve(sims.size());
  for (const auto& s : sims) out.push_back(s.record);
  return out;
}

// Replays the update recursion over recorded (confidence, outcome) pairs.
// Returns n + 1 states, starting from (b0, w0).
inline std::vector<AgentState> trajectory(const AgentParams& params, std::span<const TrialRecord> records) {
  std::vector<AgentState> out;
  out.reserve(records.size() + 1);
  out.push_back(AgentState::initial(params));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].trial_index <= records[i - 1].trial_index)
      throw std::invalid_argument("trajectory: records are not ordered by trial_index");
    out.push_back(update(out.back(), records[i].ai_confidence, records[i].ai_correct, params));
  }
  return out;
}

inline void write_simulated_trials(std::ostream& os, std::span<const SimulatedTrial> sims) {
  os << kTrialCsvHeader << ",confidence_raw,v,b,w\n";
  std::string line;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const auto& s = sims[i];
    if (auto err = check_record(s.record)) throw DataError(i + 1, *err);
    line.clear();
    detail::append_record(line, s.record);
    for (double x : {s.confidence_raw, s.v, s.b, s.w}) {
      line += ',';
      detail::append_fixed(line, x, 6);
    }
    line += '\n';
    os << line;
  }
}

// Simulation presets: b0 = 0.60, w0 = 0.69 and condition-specific asymmetric
// rates. Rates not pinned for a condition are symmetric near the prior centre.
struct RatePresets {
  static AgentParams overconfidence() { return {0.60, 0.69, 0.29, 0.46, 0.55, 0.05}; }
  static AgentParams underconfidence() { return {0.60, 0.69, 0.51, 0.14, 0.04, 0.49}; }
  static AgentParams reverse_learner() { return {0.60, 0.69, 0.18, 0.18, 0.14, 0.50}; }
  static AgentParams reverse_non_learner() { return {0.60, 0.69, 0.18, 0.18, 0.04, 0.015}; }
  static AgentParams standard() { return {0.60, 0.69, 0.18, 0.18, 0.30, 0.30}; }

  static AgentParams for_condition(Condition c) {
    switch (c) {
      case Condition::standard: return standard();
      case Condition::overconfidence: return overconfidence();
      case Condition::underconfidence: return underconfidence();
      case Condition::reverse: return reverse_learner();
    }
    throw std::invalid_argument("unknown condition");
  }
};

}  // namespace trustcal

#pragma once

// Summaries and exports of sampler output, and posterior bands of the
// trust / sensitivity trajectories.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustcal/agent.hpp"
#include "trustcal/diagnostics.hpp"
#include "trustcal/mcmc.hpp"
#include "trustcal/model.hpp"

namespace trustcal {

// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q50 = 0.0, q975 = 0.0;
  double rhat = 1.0, ess = 0.0;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;
  double max_rhat = 1.0;
  double min_ess = 0.0;
  bool converged(double rhat_limit = 1.01, double ess_limit = 400.0) const {
    return max_rhat < rhat_limit && min_ess > ess_limit;
  }
};

inline PosteriorSummary summarize(const PosteriorDraws& draws) {
  PosteriorSummary s;
  s.min_ess = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < draws.n_params(); ++k) {
    ParameterSummary p;
    p.name = draws.names[k];
    const auto all = draws.pooled(k);
    double m = 0.0;
    for (double v : all) m += v;
    m /= static_cast<double>(all.size());
    double ss = 0.0;
    for (double v : all) ss += (v - m) * (v - m);
    p.mean = m;
    p.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
    p.q025 = quantile(all, 0.025);
    p.q50 = quantile(all, 0.5);
    p.q975 = quantile(all, 0.975);
    if (draws.n_chains >= 2 && draws.n_iterations >= 4) {
      const auto chains = draws.chains_of(k);
      p.rhat = rhat(chains);
      p.ess = ess(chains);
    } else {
      p.rhat = std::numeric_limits<double>::quiet_NaN();
      p.ess = std::numeric_limits<double>::quiet_NaN();
    }
    s.max_rhat = std::max(s.max_rhat, p.rhat);
    s.min_ess = std::min(s.min_ess, p.ess);
    s.parameters.push_back(std::move(p));
  }
  return s;
}

inline nlohmann::json to_json(const PosteriorSummary& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : s.parameters) {
    j[p.name] = {{"mean", p.mean}, {"sd", p.sd},     {"q2.5", p.q025}, {"q50", p.q50},
                 {"q97.5", p.q975}, {"rhat", p.rhat}, {"ess", p.ess}};
  }
  return j;
}

inline void write_draws_csv(std::ostream& os, const PosteriorDraws& draws) {
  std::string line = "chain,iteration";
  for (const auto& n : draws.names) line += "," + n;
  os << line << '\n';
  char buf[64];
  for (std::size_t c = 0; c < draws.n_chains; ++c) {
    for (std::size_t i = 0; i < draws.n_iterations; ++i) {
      line = std::to_string(c + 1) + "," + std::to_string(i + 1);
      for (std::size_t k = 0; k < draws.n_params(); ++k) {
        const auto res = std::to_chars(buf, buf + sizeof buf, draws.at(c, i, k));
        line += ',';
        line.append(buf, res.ptr);
      }
      os << line << '\n';
    }
  }
}

// Inverse of write_draws_csv (shortest round-trip formatting keeps it exact).
inline PosteriorDraws read_draws_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("draws: empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "chain" || header[1] != "iteration")
    throw std::invalid_argument("draws: header must start with chain,iteration");
  PosteriorDraws d;
  for (std::size_t k = 2; k < header.size(); ++k) d.names.emplace_back(header[k]);
  std::size_t rows = 0, max_chain = 0;
  std::map<std::size_t, std::size_t> per_chain;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++rows;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw std::invalid_argument("draws: row " + std::to_string(rows) + " has wrong width");
    std::size_t chain = 0;
    if (!detail::parse_number(f[0], chain) || chain < 1) throw std::invalid_argument("draws: bad chain index");
    if (chain != max_chain && chain != max_chain + 1) throw std::invalid_argument("draws: chains must be contiguous");
    max_chain = std::max(max_chain, chain);
    ++per_chain[chain];
    for (std::size_t k = 2; k < f.size(); ++k) {
      double v = 0.0;
      if (!detail::parse_number(f[k], v)) throw std::invalid_argument("draws: bad value in row " + std::to_string(rows));
      d.values.push_back(v);
    }
  }
  d.n_chains = max_chain;
  d.n_iterations = per_chain.empty() ? 0 : per_chain.begin()->second;
  for (const auto& [_, n] : per_chain)
    if (n != d.n_iterations) throw std::invalid_argument("draws: chains have different lengths");
  return d;
}

// Participant-level parameters of one draw.
inline AgentParams draw_params(const PosteriorDraws& draws, std::size_t chain, std::size_t iter,
                               const std::array<std::size_t, 6>& idx) {
  return {draws.at(chain, iter, idx[0]), draws.at(chain, iter, idx[1]), draws.at(chain, iter, idx[2]),
          draws.at(chain, iter, idx[3]), draws.at(chain, iter, idx[4]), draws.at(chain, iter, idx[5])};
}

inline std::array<std::size_t, 6> participant_columns(const PosteriorDraws& draws, const std::string& id) {
  const std::string tag = "[" + id + "]";
  std::array<std::size_t, 6> idx{};
  const char* names[] = {"b0", "w0", "alpha_b_correct", "alpha_b_wrong", "alpha_w_correct", "alpha_w_wrong"};
  for (std::size_t k = 0; k < 6; ++k) {
    const std::string col = names[k] + tag;
    if (!draws.contains(col)) throw std::invalid_argument("draws have no parameters for participant '" + id + "'");
    idx[k] = draws.index(col);
  }
  return idx;
}

struct TrajectoryBand {
  std::size_t trial = 1;  // state entering this trial; the last row is after the final feedback
  double b_mean = 0.0, b_lo = 0.0, b_hi = 0.0;
  double w_mean = 0.0, w_lo = 0.0, w_hi = 0.0;
};

// For every draw, replays each participant's log and averages (b_t, w_t) over
// the participants of a condition; bands are the mean and central 95% interval
// of that average across draws. `max_draws` > 0 thins the draws evenly.
inline std::map<Condition, std::vector<TrajectoryBand>> posterior_trajectories(const PosteriorDraws& draws,
                                                                              std::span<const ParticipantData> data,
                                                                              std::size_t max_draws = 0) {
  const std::size_t total = draws.n_chains * draws.n_iterations;
  if (total == 0) throw std::invalid_argument("posterior_trajectories: no draws");
  const std::size_t stride = (max_draws > 0 && total > max_draws) ? total / max_draws : 1;

  std::vector<std::array<std::size_t, 6>> cols;
  for (const auto& p : data) cols.push_back(participant_columns(draws, p.id));

  std::map<Condition, std::vector<TrajectoryBand>> out;
  for (Condition cond : kAllConditions) {
    std::vector<std::size_t> members;
    std::size_t len = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].condition != cond) continue;
      members.push_back(i);
      len = std::max(len, data[i].records.size() + 1);
    }
    if (members.empty()) continue;

    std::vector<std::vector<double>> b_series(len), w_series(len);
    for (std::size_t flat = 0; flat < total; flat += stride) {
      const std::size_t c = flat / draws.n_iterations, it = flat % draws.n_iterations;
      std::vector<double> b_sum(len, 0.0), w_sum(len, 0.0);
      std::vector<std::size_t> count(len, 0);
      for (std::size_t i : members) {
        const auto traj = trajectory(draw_params(draws, c, it, cols[i]), data[i].records);
        for (std::size_t t = 0; t < traj.size(); ++t) {
          b_sum[t] += traj[t].b;
          w_sum[t] += traj[t].w;
          ++count[t];
        }
      }
      for (std::size_t t = 0; t < len; ++t) {
        if (count[t] == 0) continue;
        b_series[t].push_back(b_sum[t] / static_cast<double>(count[t]));
        w_series[t].push_back(w_sum[t] / static_cast<double>(count[t]));
      }
    }
    auto& bands = out[cond];
    for (std::size_t t = 0; t < len; ++t) {
      TrajectoryBand band;
      band.trial = t + 1;
      auto mean = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s / static_cast<double>(x.size());
      };
      band.b_mean = mean(b_series[t]);
      band.b_lo = quantile(b_series[t], 0.025);
      band.b_hi = quantile(b_series[t], 0.975);
      band.w_mean = mean(w_series[t]);
      band.w_lo = quantile(w_series[t], 0.025);
      band.w_hi = quantile(w_series[t], 0.975);
      bands.push_back(band);
    }
  }
  return out;
}

// Posterior-mean perceived accuracy per trial, for each participant.
inline std::vector<std::vector<double>> posterior_predicted_v(const PosteriorDraws& draws,
                                                              std::span<const ParticipantData> data,
                                                              std::size_t max_draws = 0) {
  const std::size_t total = draws.n_chains * draws.n_iterations;
  const std::size_t stride = (max_draws > 0 && total > max_draws) ? total / max_draws : 1;
  std::vector<std::vector<double>> out;
  for (const auto& p : data) {
    const auto cols = participant_columns(draws, p.id);
    std::vector<double> acc(p.trials.size(), 0.0);
    std::size_t n = 0;
    for (std::size_t flat = 0; flat < total; flat += stride) {
      const auto v = predicted_v(draw_params(draws, flat / draws.n_iterations, flat % draws.n_iterations, cols), p.trials);
      for (std::size_t t = 0; t < v.size(); ++t) acc[t] += v[t];
      ++n;
    }
    for (double& a : acc) a /= static_cast<double>(n);
    out.push_back(std::move(acc));
  }
  return out;
}

}  // namespace trustcal

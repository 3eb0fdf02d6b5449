#pragma once

// Adaptive random-walk Metropolis-within-Gibbs.
//
// The engine sweeps the coordinates of a target in block order and makes one
// Gaussian random-walk proposal per coordinate, accepting on the ratio of the
// target's full conditional. Each coordinate's proposal scale is tuned by a
// Robbins-Monro recursion during warmup and frozen afterwards. Chains run on
// separate threads with streams derived from (seed, chain), so the draws do not
// depend on scheduling.
//
// A target provides:
//   std::size_t dim() const;
//   std::vector<std::string> names() const;            // output columns
//   std::vector<double> initial(Rng&) const;            // starting point
//   void reset(std::span<const double> x);              // rebuild caches at x
//   double current(std::span<const double> x, std::size_t j);   // conditional at x
//   double proposed(std::span<const double> x, std::size_t j);  // x differs in j only
//   void commit(std::size_t j);                         // x with the proposal is current
//   void transform(std::span<const double> x, std::span<double> out) const;

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "trustcal/model.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

struct SamplerConfig {
  std::size_t n_chains = 4;
  std::size_t n_iterations = 2000;  // per chain, warmup included
  std::size_t n_warmup = 1000;
  std::size_t thin = 8;             // sweeps per stored iteration
  std::uint64_t seed = 0;
  double target_acceptance = 0.35;
  bool parallel = true;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::size_t n_chains = 0;
  std::size_t n_iterations = 0;  // stored (post-warmup) per chain
  std::uint64_t seed = 0;
  std::vector<double> values;    // [chain][iteration][parameter]
  std::vector<double> acceptance_rate;  // post-warmup, per coordinate, averaged over chains

  std::size_t n_params() const { return names.size(); }
  double at(std::size_t chain, std::size_t iter, std::size_t param) const {
    return values[(chain * n_iterations + iter) * names.size() + param];
  }
  std::size_t index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
  bool contains(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }
  std::vector<std::vector<double>> chains_of(std::size_t param) const {
    std::vector<std::vector<double>> out(n_chains, std::vector<double>(n_iterations));
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_iterations; ++i) out[c][i] = at(c, i, param);
    return out;
  }
  std::vector<std::vector<double>> chains_of(const std::string& name) const { return chains_of(index(name)); }
  std::vector<double> pooled(std::size_t param) const {
    std::vector<double> out;
    out.reserve(n_chains * n_iterations);
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t i = 0; i < n_iterations; ++i) out.push_back(at(c, i, param));
    return out;
  }
};

namespace detail {

// Joint random-walk proposal for a block of kBlockSize coordinates. The
// covariance is estimated from the first half of warmup, scaled by
// 2.38^2 / kBlockSize, and tuned by a log multiplier until warmup ends.
inline constexpr std::size_t kBlockSize = 6;

struct BlockProposal {
  std::size_t n = 0;
  std::array<double, kBlockSize> mean{};
  std::array<double, kBlockSize * kBlockSize> m2{};
  std::array<double, kBlockSize * kBlockSize> chol{};
  double log_mult = 0.0;
  bool ready = false;

  void observe(std::span<const double> x, std::size_t start) {
    ++n;
    std::array<double, kBlockSize> d{};
    for (std::size_t a = 0; a < kBlockSize; ++a) {
      d[a] = x[start + a] - mean[a];
      mean[a] += d[a] / static_cast<double>(n);
    }
    for (std::size_t a = 0; a < kBlockSize; ++a)
      for (std::size_t b = 0; b < kBlockSize; ++b) m2[a * kBlockSize + b] += d[a] * (x[start + b] - mean[b]);
  }

  void factorize() {
    if (n < 2 * kBlockSize) return;
    const double scale = 2.38 * 2.38 / static_cast<double>(kBlockSize) / static_cast<double>(n - 1);
    std::array<double, kBlockSize * kBlockSize> c{};
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = m2[k] * scale;
    for (std::size_t a = 0; a < kBlockSize; ++a) c[a * kBlockSize + a] += 1e-6;
    chol.fill(0.0);
    for (std::size_t a = 0; a < kBlockSize; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double v = c[a * kBlockSize + b];
        for (std::size_t k = 0; k < b; ++k) v -= chol[a * kBlockSize + k] * chol[b * kBlockSize + k];
        if (a == b) {
          if (!(v > 0.0)) return;
          chol[a * kBlockSize + a] = std::sqrt(v);
        } else {
          chol[a * kBlockSize + b] = v / chol[b * kBlockSize + b];
        }
      }
    }
    ready = true;
  }

  template <class Target>
  void step(Target& target, std::span<double> x, std::size_t block, Rng& rng, double gain, double target_rate) {
    if (!ready) return;
    const std::size_t start = target.block_start(block);
    std::array<double, kBlockSize> old{}, z{};
    for (std::size_t a = 0; a < kBlockSize; ++a) {
      old[a] = x[start + a];
      z[a] = rng.normal();
    }
    const double cur = target.current_block(x, block);
    const double m = std::exp(log_mult);
    for (std::size_t a = 0; a < kBlockSize; ++a) {
      double d = 0.0;
      for (std::size_t b = 0; b <= a; ++b) d += chol[a * kBlockSize + b] * z[b];
      x[start + a] = old[a] + m * d;
    }
    const double prop = target.proposed_block(x, block);
    const bool accept = std::isfinite(prop) && std::log(rng.uniform()) < prop - cur;
    if (accept) {
      target.commit_block(block);
    } else {
      for (std::size_t a = 0; a < kBlockSize; ++a) x[start + a] = old[a];
    }
    log_mult += gain * ((accept ? 1.0 : 0.0) - target_rate);
  }
};

struct ChainOutput {
  std::vector<double> values;
  std::vector<double> accepted;
};

template <class Target>
ChainOutput run_chain(Target target, const SamplerConfig& cfg, std::size_t chain) {
  Rng rng(cfg.seed, stream_id("chain", chain));
  const std::size_t d = target.dim();
  std::vector<double> x = target.initial(rng);
  target.reset(x);
  std::vector<double> log_scale(d, std::log(0.5));
  std::vector<double> accepted(d, 0.0);
  const std::size_t n_out = target.names().size();
  const std::size_t kept = cfg.n_iterations - cfg.n_warmup;
  ChainOutput out;
  out.values.reserve(kept * n_out);
  std::vector<double> row(n_out);
  std::size_t adapt_step = 0;
  std::vector<double> saved;
  std::vector<double> group_scale;
  if constexpr (requires { target.n_group_moves(); }) group_scale.assign(target.n_group_moves(), std::log(0.5));
  std::vector<BlockProposal> blocks;
  if constexpr (requires { target.n_blocks(); }) blocks.resize(target.n_blocks());

  for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
    const bool warmup = it < cfg.n_warmup;
    for (std::size_t sweep = 0; sweep < cfg.thin; ++sweep) {
      if (warmup) ++adapt_step;
      const double gain = warmup ? std::pow(static_cast<double>(adapt_step), -0.6) : 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double cur = target.current(x, j);
        const double old = x[j];
        x[j] = old + std::exp(log_scale[j]) * rng.normal();
        const double prop = target.proposed(x, j);
        const double log_u = std::log(rng.uniform());
        const bool accept = std::isfinite(prop) && log_u < prop - cur;
        if (accept) {
          target.commit(j);
        } else {
          x[j] = old;
        }
        if (warmup) {
          log_scale[j] += gain * ((accept ? 1.0 : 0.0) - cfg.target_acceptance);
        } else {
          accepted[j] += accept ? 1.0 : 0.0;
        }
      }
      if constexpr (requires { target.n_blocks(); }) {
        if (it >= cfg.n_warmup / 2) {
          for (std::size_t b = 0; b < target.n_blocks(); ++b)
            blocks[b].step(target, x, b, rng, warmup ? gain : 0.0, cfg.target_acceptance);
        } else if (it >= cfg.n_warmup / 4) {
          for (std::size_t b = 0; b < target.n_blocks(); ++b) blocks[b].observe(x, target.block_start(b));
        }
        if (it + 1 == cfg.n_warmup / 2 && sweep + 1 == cfg.thin) {
          for (auto& blk : blocks) blk.factorize();
        }
      }
      if constexpr (requires { target.n_group_moves(); }) {
        for (std::size_t g = 0; g < target.n_group_moves(); ++g) {
          saved = x;
          const double eps = std::exp(group_scale[g]) * rng.normal();
          const double log_ratio = target.group_move(x, g, eps);
          const bool accept = std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio;
          if (!accept) x = saved;
          if (warmup) group_scale[g] += gain * ((accept ? 1.0 : 0.0) - cfg.target_acceptance);
        }
      }
    }
    if (!warmup) {
      target.transform(x, row);
      out.values.insert(out.values.end(), row.begin(), row.end());
    }
  }
  const double proposals = static_cast<double>(kept * cfg.thin);
  for (double& a : accepted) a = proposals > 0.0 ? a / proposals : 0.0;
  out.accepted = std::move(accepted);
  return out;
}

}  // namespace detail

template <class Target>
PosteriorDraws run_sampler(const Target& target, const SamplerConfig& cfg) {
  if (cfg.n_chains < 1) throw std::invalid_argument("sampler: need at least one chain");
  if (cfg.n_warmup >= cfg.n_iterations) throw std::invalid_argument("sampler: warmup must be shorter than the run");
  if (cfg.thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");

  std::vector<detail::ChainOutput> outputs(cfg.n_chains);
  if (cfg.parallel && cfg.n_chains > 1) {
    std::vector<std::thread> workers;
    for (std::size_t c = 0; c < cfg.n_chains; ++c)
      workers.emplace_back([&, c] { outputs[c] = detail::run_chain(target, cfg, c); });
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t c = 0; c < cfg.n_chains; ++c) outputs[c] = detail::run_chain(target, cfg, c);
  }

  PosteriorDraws draws;
  draws.names = target.names();
  draws.n_chains = cfg.n_chains;
  draws.n_iterations = cfg.n_iterations - cfg.n_warmup;
  draws.seed = cfg.seed;
  draws.acceptance_rate.assign(target.dim(), 0.0);
  for (auto& o : outputs) {
    draws.values.insert(draws.values.end(), o.values.begin(), o.values.end());
    for (std::size_t j = 0; j < o.accepted.size(); ++j)
      draws.acceptance_rate[j] += o.accepted[j] / static_cast<double>(cfg.n_chains);
  }
  return draws;
}

// Wraps a plain log density; every conditional is the full density.
class FunctionTarget {
 public:
  using Density = std::function<double(std::span<const double>)>;

  FunctionTarget(Density density, std::vector<double> start, std::vector<std::string> names)
      : density_(std::move(density)), start_(std::move(start)), names_(std::move(names)) {}

  std::size_t dim() const { return start_.size(); }
  std::vector<std::string> names() const { return names_; }
  std::vector<double> initial(Rng&) const { return start_; }
  void reset(std::span<const double> x) { value_ = density_(x); }
  double current(std::span<const double>, std::size_t) const { return value_; }
  double proposed(std::span<const double> x, std::size_t) {
    pending_ = density_(x);
    return pending_;
  }
  void commit(std::size_t) { value_ = pending_; }
  void transform(std::span<const double> x, std::span<double> out) const { std::copy(x.begin(), x.end(), out.begin()); }

 private:
  Density density_;
  std::vector<double> start_;
  std::vector<std::string> names_;
  double value_ = 0.0;
  double pending_ = 0.0;
};

// Non-centred hierarchical target. Coordinates, in order:
//   mu_b0, ln sigma_b0, mu_w0, ln sigma_w0,
//   per present condition and rate family: mu, ln sigma,
//   per participant: six standard-normal offsets (b0, w0, four logit rates).
// Participant values are hyper mean + hyper scale * offset. Scales are sampled
// on the log scale, so each carries its Jacobian term.
class HierarchicalTarget {
 public:
  explicit HierarchicalTarget(std::vector<ParticipantData> data) : data_(std::move(data)) {
    if (data_.empty()) throw std::invalid_argument("HierarchicalTarget: no participants");
    cond_slot_.fill(kAbsent);
    for (const auto& p : data_) {
      const std::size_t c = index_of(p.condition);
      if (cond_slot_[c] == kAbsent) {
        cond_slot_[c] = conditions_.size();
        conditions_.push_back(p.condition);
      }
    }
    members_.resize(conditions_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) members_[cond_slot_[index_of(data_[i].condition)]].push_back(i);
    all_.resize(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) all_[i] = i;
    participant_offset_ = 4 + 8 * conditions_.size();
    ll_.assign(data_.size(), 0.0);
    pending_.assign(data_.size(), 0.0);
  }

  std::size_t dim() const { return participant_offset_ + 6 * data_.size(); }
  const std::vector<ParticipantData>& data() const { return data_; }
  const std::vector<Condition>& conditions() const { return conditions_; }

  std::vector<std::string> names() const {
    std::vector<std::string> n = {"mu_b0", "sigma_b0", "mu_w0", "sigma_w0"};
    for (Condition c : conditions_) {
      for (RateFamily r : kRateFamilies) {
        const std::string suffix = std::string(to_string(r)) + "[" + std::string(to_string(c)) + "]";
        n.push_back("mu_" + suffix);
        n.push_back("sigma_" + suffix);
      }
    }
    for (const auto& p : data_) {
      n.push_back("b0[" + p.id + "]");
      n.push_back("w0[" + p.id + "]");
      for (RateFamily r : kRateFamilies) n.push_back(std::string(to_string(r)) + "[" + p.id + "]");
    }
    return n;
  }

  std::vector<double> initial(Rng& rng) const {
    std::vector<double> x(dim());
    x[0] = rng.normal(0.0, 0.5);
    x[1] = rng.normal(0.0, 0.3);
    x[2] = rng.normal(0.0, 0.5);
    x[3] = rng.normal(0.0, 0.3);
    for (std::size_t s = 0; s < conditions_.size(); ++s) {
      for (std::size_t k = 0; k < 4; ++k) {
        x[4 + 8 * s + 2 * k] = rng.normal(kMuRateMean, 0.5);
        x[4 + 8 * s + 2 * k + 1] = rng.normal(0.0, 0.3);
      }
    }
    for (std::size_t j = participant_offset_; j < x.size(); ++j) x[j] = rng.normal(0.0, 0.5);
    return x;
  }

  AgentParams participant_params(std::span<const double> x, std::size_t i) const {
    const std::size_t base = participant_offset_ + 6 * i;
    const std::size_t hs = 4 + 8 * cond_slot_[index_of(data_[i].condition)];
    AgentParams p;
    p.b0 = x[0] + std::exp(x[1]) * x[base];
    p.w0 = x[2] + std::exp(x[3]) * x[base + 1];
    for (RateFamily r : kRateFamilies) {
      const auto k = static_cast<std::size_t>(r);
      rate_of(p, r) = logistic(x[hs + 2 * k] + std::exp(x[hs + 2 * k + 1]) * x[base + 2 + k]);
    }
    return p;
  }

  // Hyperparameters at x; conditions without participants sit at their prior means.
  HyperParams hyper_params(std::span<const double> x) const {
    HyperParams h;
    h.mu_b0 = x[0];
    h.sigma_b0 = std::exp(x[1]);
    h.mu_w0 = x[2];
    h.sigma_w0 = std::exp(x[3]);
    for (std::size_t s = 0; s < conditions_.size(); ++s) {
      auto& rh = h.rates[index_of(conditions_[s])];
      for (std::size_t k = 0; k < 4; ++k) {
        rh.mu[k] = x[4 + 8 * s + 2 * k];
        rh.sigma[k] = std::exp(x[4 + 8 * s + 2 * k + 1]);
      }
    }
    return h;
  }

  void reset(std::span<const double> x) {
    for (std::size_t i = 0; i < data_.size(); ++i) ll_[i] = participant_ll(x, i);
  }

  double current(std::span<const double> x, std::size_t j) const {
    double s = 0.0;
    for (std::size_t i : scope(j)) s += ll_[i];
    return s + local_prior(x, j);
  }

  double proposed(std::span<const double> x, std::size_t j) {
    double s = 0.0;
    for (std::size_t i : scope(j)) {
      pending_[i] = participant_ll(x, i);
      s += pending_[i];
    }
    return s + local_prior(x, j);
  }

  void commit(std::size_t j) {
    for (std::size_t i : scope(j)) ll_[i] = pending_[i];
  }

  void transform(std::span<const double> x, std::span<double> out) const {
    out[0] = x[0];
    out[1] = std::exp(x[1]);
    out[2] = x[2];
    out[3] = std::exp(x[3]);
    for (std::size_t j = 4; j < participant_offset_; j += 2) {
      out[j] = x[j];
      out[j + 1] = std::exp(x[j + 1]);
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const AgentParams p = participant_params(x, i);
      const std::size_t o = participant_offset_ + 6 * i;
      out[o] = p.b0;
      out[o + 1] = p.w0;
      out[o + 2] = p.alpha_b_correct;
      out[o + 3] = p.alpha_b_wrong;
      out[o + 4] = p.alpha_w_correct;
      out[o + 5] = p.alpha_w_wrong;
    }
  }

  // Each participant's six offsets also move jointly.
  std::size_t n_blocks() const { return data_.size(); }
  std::size_t block_start(std::size_t i) const { return participant_offset_ + 6 * i; }

  double current_block(std::span<const double> x, std::size_t i) const {
    return ll_[i] + offsets_prior(x, i);
  }

  double proposed_block(std::span<const double> x, std::size_t i) {
    pending_[i] = participant_ll(x, i);
    return pending_[i] + offsets_prior(x, i);
  }

  void commit_block(std::size_t i) { ll_[i] = pending_[i]; }

  // Group moves, one per hyper coordinate. A location move shifts a hyper mean
  // by eps and its members' offsets by -eps / scale; a scale move multiplies a
  // hyper scale by exp(eps) and the offsets by exp(-eps). Participant values,
  // and so the likelihood, are unchanged. Returns the log acceptance ratio.
  std::size_t n_group_moves() const { return participant_offset_; }

  double group_move(std::span<double> x, std::size_t j, double eps) const {
    std::size_t slot = 0;
    std::span<const std::size_t> who = all_;
    if (j < 4) {
      slot = j / 2;
    } else {
      who = members_[(j - 4) / 8];
      slot = 2 + ((j - 4) % 8) / 2;
    }
    const bool location = j < 4 ? j % 2 == 0 : (j - 4) % 2 == 0;
    double log_ratio = -local_prior(x, j);
    if (location) {
      const double shift = eps / std::exp(x[j + 1]);
      x[j] += eps;
      for (std::size_t i : who) {
        double& z = x[participant_offset_ + 6 * i + slot];
        log_ratio += 0.5 * z * z;
        z -= shift;
        log_ratio -= 0.5 * z * z;
      }
    } else {
      const double factor = std::exp(-eps);
      x[j] += eps;
      for (std::size_t i : who) {
        double& z = x[participant_offset_ + 6 * i + slot];
        log_ratio += 0.5 * z * z;
        z *= factor;
        log_ratio -= 0.5 * z * z;
      }
      log_ratio -= static_cast<double>(who.size()) * eps;
    }
    return log_ratio + local_prior(x, j);
  }

  // Full log density in sampler coordinates, constants included.
  double log_density(std::span<const double> x) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) lp += participant_ll(x, i);
    for (std::size_t j = 0; j < dim(); ++j) {
      lp += local_prior(x, j);
      if (j >= participant_offset_) lp -= 0.5 * std::log(2.0 * std::numbers::pi);
    }
    // Normal constants of the hyper means.
    lp -= 2.0 * (std::log(kMuInitSd) + 0.5 * std::log(2.0 * std::numbers::pi));
    lp -= 4.0 * static_cast<double>(conditions_.size()) * (std::log(kMuRateSd) + 0.5 * std::log(2.0 * std::numbers::pi));
    return lp;
  }

 private:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

  double participant_ll(std::span<const double> x, std::size_t i) const {
    return log_likelihood(participant_params(x, i), data_[i].trials);
  }

  double offsets_prior(std::span<const double> x, std::size_t i) const {
    double lp = 0.0;
    for (std::size_t a = 0; a < 6; ++a) lp -= 0.5 * x[block_start(i) + a] * x[block_start(i) + a];
    return lp;
  }

  std::span<const std::size_t> scope(std::size_t j) const {
    if (j < 4) return all_;
    if (j < participant_offset_) return members_[(j - 4) / 8];
    const std::size_t i = (j - participant_offset_) / 6;
    return std::span<const std::size_t>(all_).subspan(i, 1);
  }

  // Prior and Jacobian terms involving coordinate j, up to constants.
  double local_prior(std::span<const double> x, std::size_t j) const {
    const double v = x[j];
    if (j >= participant_offset_) return -0.5 * v * v;
    if (j == 0 || j == 2) return -0.5 * (v - kMuInitMean) * (v - kMuInitMean) / (kMuInitSd * kMuInitSd);
    if (j == 1 || j == 3) return -kSigmaRate * std::exp(v) + v;
    if ((j - 4) % 2 == 0) return -0.5 * (v - kMuRateMean) * (v - kMuRateMean) / (kMuRateSd * kMuRateSd);
    return -kSigmaRate * std::exp(v) + v;
  }

  std::vector<ParticipantData> data_;
  std::array<std::size_t, 4> cond_slot_{};
  std::vector<Condition> conditions_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> all_;
  std::size_t participant_offset_ = 0;
  std::vector<double> ll_;
  std::vector<double> pending_;
};

inline PosteriorDraws sample_posterior(std::vector<ParticipantData> data, const SamplerConfig& cfg = {}) {
  const HierarchicalTarget target(std::move(data));
  return run_sampler(target, cfg);
}

inline PosteriorDraws sample_posterior(std::span<const TrialRecord> records, const SamplerConfig& cfg = {}) {
  if (records.empty()) throw std::invalid_argument("sample_posterior: no data");
  return sample_posterior(group_participants(records), cfg);
}

}  // namespace trustcal

#pragma once

// Convergence diagnostics over multiple chains of one scalar parameter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace trustcal {

using ChainSet = std::vector<std::vector<double>>;

namespace detail {

inline std::size_t common_length(std::span<const std::vector<double>> chains) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  return chains.empty() ? 0 : n;
}

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace detail

// Split-chain potential scale reduction. Each chain is cut into halves (the
// middle draw of an odd-length chain is dropped) and
//   R = sqrt(((n - 1) / n * W + B / n) / W)
// over the 2m half-chains of length n. With zero within-chain variance the
// result is 1 when the half-chains agree and +inf when they do not.
inline double rhat(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw std::invalid_argument("rhat: need at least 2 chains");
  const std::size_t len = detail::common_length(chains);
  if (len < 4) throw std::invalid_argument("rhat: need at least 4 draws per chain");
  const std::size_t half = len / 2;

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const std::span<const double> all(c.data(), len);
    for (auto part : {all.first(half), all.last(half)}) {
      const double m = detail::mean_of(part);
      means.push_back(m);
      vars.push_back(detail::sample_variance(part, m));
    }
  }
  const auto n = static_cast<double>(half);
  const double w = detail::mean_of(vars);
  const double b = n * detail::sample_variance(means, detail::mean_of(means));
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

// Effective sample size from the multi-chain autocorrelation estimate
//   rho_t = 1 - (W - mean_c acov_c(t)) / var_plus,
// summed in adjacent pairs until a pair turns negative, with the pair sums
// forced monotone (Geyer's initial monotone sequence). Chains with zero
// variance report the nominal draw count.
inline double ess(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw std::invalid_argument("ess: need at least 2 chains");
  const std::size_t n = detail::common_length(chains);
  if (n < 4) throw std::invalid_argument("ess: need at least 4 draws per chain");
  const std::size_t m = chains.size();
  const auto nd = static_cast<double>(n);

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    const std::span<const double> x(chains[c].data(), n);
    means[c] = detail::mean_of(x);
    vars[c] = detail::sample_variance(x, means[c]);
  }
  const double w = detail::mean_of(vars);
  const double b_over_n = detail::sample_variance(means, detail::mean_of(means));
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;
  const double nominal = static_cast<double>(m) * nd;
  if (!(var_plus > 0.0)) return nominal;

  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[c]) * (x[i + lag] - means[c]);
      total += s / nd;
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - mean_acov(lag)) / var_plus; };

  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(nominal));
  return nominal / tau;
}

}  // namespace trustcal

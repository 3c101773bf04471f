#pragma once

// Exact (unpruned) RNN-T negative log-likelihood over the full T x (U+1)
// alignment lattice, plus a path-enumeration oracle.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "scct/ops.hpp"

namespace scct {

// log_probs has shape T x (U+1) x V; slice (t, u) is a log-distribution over
// blank (id 0) and the output tokens.
struct LogitGrid {
  Tensor log_probs;
  std::vector<std::size_t> target;

  std::size_t frames() const { return log_probs.extent(0); }
  std::size_t labels() const { return target.size(); }
  std::size_t vocab() const { return log_probs.extent(2); }

  double at(std::size_t t, std::size_t u, std::size_t k) const {
    return log_probs.data()[(t * (labels() + 1) + u) * vocab() + k];
  }
};

namespace detail {

inline constexpr double kLogZeroClamp = -1e30;

inline double clamp_log(double x) { return x < kLogZeroClamp ? kLogZeroClamp : x; }

inline double lse2(double a, double b) {
  a = clamp_log(a);
  b = clamp_log(b);
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline void check_grid(const LogitGrid& g) {
  if (!g.log_probs.defined() || g.log_probs.ndim() != 3) {
    throw DimensionError("transducer grid must be T x (U+1) x V");
  }
  if (g.log_probs.extent(1) != g.target.size() + 1) {
    throw DimensionError("transducer grid has " +
                         std::to_string(g.log_probs.extent(1)) +
                         " label positions for a target of length " +
                         std::to_string(g.target.size()));
  }
  for (std::size_t y : g.target) {
    if (y == 0 || y >= g.vocab()) {
      throw ContractError("transducer target id " + std::to_string(y) +
                          " is blank or out of range");
    }
  }
}

}  // namespace detail

// -log P(target | grid), summed over every monotone alignment:
//   alpha(t,u) = lse(alpha(t-1,u) + blank(t-1,u), alpha(t,u-1) + y_u(t,u-1))
//   loss       = -(alpha(T-1,U) + blank(T-1,U))
// Log-probabilities below -1e30 are clamped so impossible paths stay finite.
inline Tensor transducer_nll(const LogitGrid& grid) {
  detail::check_grid(grid);
  const std::size_t T = grid.frames(), U = grid.labels(), V = grid.vocab();
  const std::size_t U1 = U + 1;
  const auto lp = grid.log_probs.data();
  auto blank = [&](std::size_t t, std::size_t u) {
    return detail::clamp_log(lp[(t * U1 + u) * V]);
  };
  auto emit = [&](std::size_t t, std::size_t u) {
    return detail::clamp_log(lp[(t * U1 + u) * V + grid.target[u]]);
  };

  std::vector<double> alpha(T * U1), beta(T * U1);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u < U1; ++u) {
      if (t == 0 && u == 0) {
        alpha[0] = 0.0;
      } else if (t == 0) {
        alpha[u] = alpha[u - 1] + emit(0, u - 1);
      } else if (u == 0) {
        alpha[t * U1] = alpha[(t - 1) * U1] + blank(t - 1, 0);
      } else {
        alpha[t * U1 + u] = detail::lse2(alpha[(t - 1) * U1 + u] + blank(t - 1, u),
                                         alpha[t * U1 + u - 1] + emit(t, u - 1));
      }
    }
  for (std::size_t t = T; t-- > 0;)
    for (std::size_t u = U1; u-- > 0;) {
      const std::size_t i = t * U1 + u;
      if (t == T - 1 && u == U) {
        beta[i] = blank(t, u);
      } else if (t == T - 1) {
        beta[i] = beta[i + 1] + emit(t, u);
      } else if (u == U) {
        beta[i] = beta[i + U1] + blank(t, u);
      } else {
        beta[i] = detail::lse2(beta[i + U1] + blank(t, u), beta[i + 1] + emit(t, u));
      }
    }
  const double log_z = alpha[(T - 1) * U1 + U] + blank(T - 1, U);
  Tensor out = Tensor::scalar(-log_z);

  const Tensor& input = grid.log_probs;
  if (detail::should_record({&input})) {
    auto gi = input.impl();
    detail::record(
        "transducer_nll", {&input}, out,
        [gi, alpha = std::move(alpha), beta = std::move(beta),
         target = grid.target, T, U1, V, log_z](detail::TensorImpl& o) {
          auto& g = gi->grad_buffer();
          const double scale = o.grad[0];
          const auto& d = gi->data;
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t u = 0; u < U1; ++u) {
              const std::size_t i = t * U1 + u;
              const double a = alpha[i];
              const double b_next =
                  t + 1 < T ? beta[i + U1] : (u + 1 == U1 ? 0.0 : detail::kLogZeroClamp);
              const double pb = std::exp(a + detail::clamp_log(d[i * V]) + b_next - log_z);
              g[i * V] -= scale * pb;
              if (u + 1 < U1) {
                const std::size_t k = target[u];
                const double pe = std::exp(a + detail::clamp_log(d[i * V + k]) +
                                           beta[i + 1] - log_z);
                g[i * V + k] -= scale * pe;
              }
            }
        });
  }
  return out;
}

inline constexpr std::size_t kBruteForceMaxNodes = 30;

// Sums the probability of every blank/emit path explicitly. Impossible
// targets yield +inf.
inline double brute_force_transducer_nll(const LogitGrid& grid) {
  detail::check_grid(grid);
  const std::size_t T = grid.frames(), U = grid.labels();
  if (T * (U + 1) > kBruteForceMaxNodes) {
    throw ContractError("brute_force_transducer_nll: lattice of " +
                        std::to_string(T * (U + 1)) + " nodes exceeds limit of " +
                        std::to_string(kBruteForceMaxNodes));
  }
  std::vector<double> path_scores;
  std::function<void(std::size_t, std::size_t, double)> walk =
      [&](std::size_t t, std::size_t u, double acc) {
        if (t == T - 1 && u == U) {
          path_scores.push_back(acc + grid.at(t, u, 0));
          return;
        }
        if (t + 1 < T) walk(t + 1, u, acc + grid.at(t, u, 0));
        if (u < U) walk(t, u + 1, acc + grid.at(t, u, grid.target[u]));
      };
  walk(0, 0, 0.0);
  return -logsumexp(path_scores);
}

}  // namespace scct

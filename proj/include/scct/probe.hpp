#pragma once

// Convergence probe for the self-consistent joiner: per-iteration averages
// of max|z_n - z_{n-1}| and mean(z_n - z_{n-1}) over randomly sampled
// lattice cells, repeated over independent resamples.

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "json.hpp"
#include "scct/dataset.hpp"
#include "scct/model.hpp"

namespace scct {

struct ProbeConfig {
  std::size_t iterations = 6;
  std::size_t cells = 100;
  std::size_t resamples = 5;
  double threshold = 1e-6;  // for the early-exit count
  std::uint64_t seed = 1;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProbeConfig, iterations, cells, resamples,
                                                threshold, seed)

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 95% two-sided, Student t
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MeanCi, mean, half_width)

inline MeanCi mean_ci95(const std::vector<double>& xs) {
  MeanCi r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double n = static_cast<double>(xs.size());
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  r.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(n);
  return r;
}

struct ProbeRow {
  std::size_t iteration = 0;
  MeanCi avg_max_diff;
  MeanCi avg_mean_diff;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ProbeRow, iteration, avg_max_diff, avg_mean_diff)

struct ProbeReport {
  std::vector<ProbeRow> rows;
  std::size_t cells_per_resample = 0;
  std::size_t resamples = 0;
  double exit_fraction = 0.0;  // inference-mode loops that met the threshold
  double mean_exit_iteration = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ProbeReport, rows, cells_per_resample, resamples,
                                   exit_fraction, mean_exit_iteration)

// Cells are drawn uniformly over (utterance, t, u) from `data`, whose
// reference transcripts drive the predictor. `hints` replaces each
// utterance's own hints when non-empty.
inline ProbeReport probe_convergence(const std::vector<Utterance>& data,
                                     const std::vector<TokenSeq>& hints,
                                     const ModelParams& p, const ModelConfig& cfg,
                                     const ProbeConfig& pc) {
  if (data.empty()) throw ContractError("probe_convergence: no utterances");
  if (pc.iterations == 0 || pc.cells == 0 || pc.resamples == 0) {
    throw ContractError("probe_convergence: iterations, cells and resamples must be >= 1");
  }
  NoGradScope no_grad;
  struct Cached {
    AudioContext audio;
    Tensor h_d;
  };
  std::vector<std::optional<Cached>> cache(data.size());
  auto get = [&](std::size_t i) -> const Cached& {
    if (!cache[i]) {
      const auto& u = data[i];
      cache[i] = Cached{encode_with_context(u.features, hints.empty() ? u.hints : hints, p, cfg),
                        predict_labels(u.target, p, cfg)};
    }
    return *cache[i];
  };

  Rng rng(pc.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::vector<double>> max_by_iter(pc.iterations), mean_by_iter(pc.iterations);
  std::size_t exits = 0, total = 0;
  double exit_iter_sum = 0.0;
  for (std::size_t r = 0; r < pc.resamples; ++r) {
    std::vector<double> max_acc(pc.iterations, 0.0), mean_acc(pc.iterations, 0.0);
    for (std::size_t c = 0; c < pc.cells; ++c) {
      const std::size_t i = pick(rng);
      const Cached& cc = get(i);
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, cc.audio.h_ac.rows() - 1)(rng);
      const std::size_t u = std::uniform_int_distribution<std::size_t>(0, cc.h_d.rows() - 1)(rng);
      const Tensor h_t = slice_rows(cc.audio.h_ac, t, t + 1);
      const Tensor h_u = slice_rows(cc.h_d, u, u + 1);
      const ScResult full = self_consistent_joiner(
          h_t, h_u, cc.audio.ctx_joiner, p, cfg,
          ScOptions{pc.iterations, pc.threshold, LoopMode::kTrain});
      for (std::size_t n = 0; n < pc.iterations; ++n) {
        max_acc[n] += full.diag.max_diff[n];
        mean_acc[n] += full.diag.mean_diff[n];
      }
      const ScResult inf = self_consistent_joiner(
          h_t, h_u, cc.audio.ctx_joiner, p, cfg,
          ScOptions{pc.iterations, pc.threshold, LoopMode::kInfer});
      exits += inf.diag.converged ? 1 : 0;
      exit_iter_sum += static_cast<double>(inf.diag.iterations_run);
      ++total;
    }
    for (std::size_t n = 0; n < pc.iterations; ++n) {
      max_by_iter[n].push_back(max_acc[n] / static_cast<double>(pc.cells));
      mean_by_iter[n].push_back(mean_acc[n] / static_cast<double>(pc.cells));
    }
  }
  ProbeReport rep;
  rep.cells_per_resample = pc.cells;
  rep.resamples = pc.resamples;
  for (std::size_t n = 0; n < pc.iterations; ++n) {
    rep.rows.push_back({n + 1, mean_ci95(max_by_iter[n]), mean_ci95(mean_by_iter[n])});
  }
  rep.exit_fraction = static_cast<double>(exits) / static_cast<double>(total);
  rep.mean_exit_iteration = exit_iter_sum / static_cast<double>(total);
  return rep;
}

inline std::string format_probe_table(const ProbeReport& r) {
  std::string out = "iter  avg_max_diff              avg_mean_diff\n";
  char buf[160];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-4zu  %.3e +- %.1e     %+.3e +- %.1e\n", row.iteration,
                  row.avg_max_diff.mean, row.avg_max_diff.half_width, row.avg_mean_diff.mean,
                  row.avg_mean_diff.half_width);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "cells %zu x %zu resamples; early exit %.1f%% (mean iter %.2f)\n",
                r.cells_per_resample, r.resamples, 100.0 * r.exit_fraction,
                r.mean_exit_iteration);
  out += buf;
  return out;
}

}  // namespace scct

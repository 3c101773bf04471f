#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "scct/params.hpp"

namespace scct {

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimConfig, lr, beta1, beta2, eps, clip_norm)

struct OptimState {
  OptimConfig cfg;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t skipped = 0;

  static OptimState for_params(const ModelParams& p, const OptimConfig& cfg) {
    OptimState s;
    s.cfg = cfg;
    for (const auto& [name, t] : p.all()) {
      s.m[name].assign(t.numel(), 0.0);
      s.v[name].assign(t.numel(), 0.0);
    }
    return s;
  }
};

struct AdamStepInfo {
  bool applied = false;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

// One bias-corrected Adam update from the grads currently held by `params`.
// Non-finite gradients skip the update; grads are zeroed either way.
inline AdamStepInfo adam_step(ModelParams& params, OptimState& st) {
  AdamStepInfo info;
  double sq = 0.0;
  for (const auto& [_, t] : params.all()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  info.grad_norm = std::sqrt(sq);
  if (!std::isfinite(info.grad_norm)) {
    std::cerr << "adam_step: non-finite gradient norm, skipping step " << st.step + 1 << "\n";
    ++st.skipped;
    params.zero_grad();
    return info;
  }
  if (st.cfg.clip_norm > 0.0 && info.grad_norm > st.cfg.clip_norm) {
    info.clip_scale = st.cfg.clip_norm / info.grad_norm;
  }
  ++st.step;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (auto& [name, t] : params.all()) {
    auto& m = st.m.at(name);
    auto& v = st.v.at(name);
    if (m.size() != t.numel()) throw DimensionError("adam_step: moment shape mismatch for " + name);
    const bool has = t.has_grad();
    auto& w = t.impl()->data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? t.grad()[i] * info.clip_scale : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      w[i] -= st.cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.cfg.eps);
    }
  }
  params.zero_grad();
  info.applied = true;
  return info;
}

}  // namespace scct

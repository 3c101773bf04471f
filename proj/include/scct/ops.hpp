#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "scct/tensor.hpp"

namespace scct {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_2d(const Tensor& a, const char* op) {
  if (a.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary_map(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  Tensor y(x.shape(), std::move(out));
  if (should_record({&x})) {
    auto xi = x.impl();
    record(op, {&x}, y, [xi, deriv](TensorImpl& o) {
      auto& gx = xi->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += o.grad[i] * deriv(xi->data[i], o.data[i]);
      }
    });
  }
  return y;
}

}  // namespace detail

// C = A·B for matrices.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw DimensionError("matmul: inner extents differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  Tensor out({m, n}, std::move(c));
  if (detail::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("matmul", {&a, &b}, out,
                   [ai, bi, m, k, n](detail::TensorImpl& o) {
                     const double* dc = o.grad.data();
                     if (auto* ga = detail::sink(ai)) {
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t p = 0; p < k; ++p) {
                           double s = 0.0;
                           const double* bp = bi->data.data() + p * n;
                           for (std::size_t j = 0; j < n; ++j)
                             s += dc[i * n + j] * bp[j];
                           (*ga)[i * k + p] += s;
                         }
                     }
                     if (auto* gb = detail::sink(bi)) {
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t p = 0; p < k; ++p) {
                           const double av = ai->data[i * k + p];
                           if (av == 0.0) continue;
                           double* gp = gb->data() + p * n;
                           for (std::size_t j = 0; j < n; ++j)
                             gp[j] += av * dc[i * n + j];
                         }
                     }
                   });
  }
  return out;
}

// y = x·W + b over the trailing axis. `b` may be undefined (no bias).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_2d(w, "linear");
  const std::size_t in = w.extent(0), outd = w.extent(1);
  if (x.cols() != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(w.shape()));
  }
  if (b.defined() && (b.numel() != outd)) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) +
                         " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t rows = x.rows();
  const double* px = x.data().data();
  const double* pw = w.data().data();
  std::vector<double> y(rows * outd, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data() + r * outd;
    if (b.defined()) std::copy(b.data().begin(), b.data().end(), yr);
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = px[r * in + p];
      if (xv == 0.0) continue;
      const double* wp = pw + p * outd;
      for (std::size_t j = 0; j < outd; ++j) yr[j] += xv * wp[j];
    }
  }
  Tensor out(detail::with_last(x.shape(), outd), std::move(y));
  if (detail::should_record({&x, &w, &b})) {
    auto xi = x.impl(), wi = w.impl();
    detail::ImplPtr bi = b.defined() ? b.impl() : nullptr;
    detail::record(
        "linear", {&x, &w, &b}, out,
        [xi, wi, bi, rows, in, outd](detail::TensorImpl& o) {
          const double* dy = o.grad.data();
          if (auto* gx = detail::sink(xi)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t p = 0; p < in; ++p) {
                const double* wp = wi->data.data() + p * outd;
                const double* dyr = dy + r * outd;
                double s = 0.0;
                for (std::size_t j = 0; j < outd; ++j) s += dyr[j] * wp[j];
                (*gx)[r * in + p] += s;
              }
          }
          if (auto* gw = detail::sink(wi)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t p = 0; p < in; ++p) {
                const double xv = xi->data[r * in + p];
                if (xv == 0.0) continue;
                double* gp = gw->data() + p * outd;
                const double* dyr = dy + r * outd;
                for (std::size_t j = 0; j < outd; ++j) gp[j] += xv * dyr[j];
              }
          }
          if (auto* gb = detail::sink(bi)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < outd; ++j)
                (*gb)[j] += dy[r * outd + j];
          }
        });
  }
  return out;
}

inline Tensor linear_forward(const Tensor& x, const Tensor& w,
                             const Tensor& b) {
  return linear(x, w, b);
}

inline Tensor transpose(const Tensor& a) {
  detail::require_2d(a, "transpose");
  const std::size_t m = a.extent(0), n = a.extent(1);
  std::vector<double> t(m * n);
  const auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = d[i * n + j];
  Tensor out({n, m}, std::move(t));
  if (detail::should_record({&a})) {
    auto ai = a.impl();
    detail::record("transpose", {&a}, out, [ai, m, n](detail::TensorImpl& o) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
    });
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  Tensor out(a.shape(), std::move(y));
  if (detail::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("add", {&a, &b}, out, [ai, bi](detail::TensorImpl& o) {
      if (auto* g = detail::sink(ai))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
      if (auto* g = detail::sink(bi))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  Tensor out(a.shape(), std::move(y));
  if (detail::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("sub", {&a, &b}, out, [ai, bi](detail::TensorImpl& o) {
      if (auto* g = detail::sink(ai))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
      if (auto* g = detail::sink(bi))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= o.grad[i];
    });
  }
  return out;
}

// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  Tensor out(a.shape(), std::move(y));
  if (detail::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("mul", {&a, &b}, out, [ai, bi](detail::TensorImpl& o) {
      if (auto* g = detail::sink(ai))
        for (std::size_t i = 0; i < g->size(); ++i)
          (*g)[i] += o.grad[i] * bi->data[i];
      if (auto* g = detail::sink(bi))
        for (std::size_t i = 0; i < g->size(); ++i)
          (*g)[i] += o.grad[i] * ai->data[i];
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary_map(
      a, "scale", [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

// a[r, :] + b for every row r.
inline Tensor add_row(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.cols();
  if (b.numel() != n) {
    throw DimensionError("add_row: " + shape_str(b.shape()) +
                         " cannot broadcast over " + shape_str(a.shape()));
  }
  std::vector<double> y(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data()[i % n];
  Tensor out(a.shape(), std::move(y));
  if (detail::should_record({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    detail::record("add_row", {&a, &b}, out, [ai, bi, n](detail::TensorImpl& o) {
      if (auto* g = detail::sink(ai))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
      if (auto* g = detail::sink(bi))
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i % n] += o.grad[i];
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary_map(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_map(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

// x·sigmoid(x), the conformer feed-forward activation.
inline Tensor silu(const Tensor& x) {
  return detail::unary_map(
      x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::should_record({&x})) {
    auto xi = x.impl();
    detail::record("sum", {&x}, out, [xi](detail::TensorImpl& o) {
      auto& g = xi->grad_buffer();
      for (double& v : g) v += o.grad[0];
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

namespace detail {

// Row-wise softmax with the first `valid(r)` entries of row r active and the
// remainder forced to zero probability.
template <class Valid>
Tensor softmax_rows(const Tensor& x, const char* op, Valid valid) {
  const std::size_t n = x.cols(), rows = x.rows();
  const auto xs = x.data();
  std::vector<double> y(xs.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t len = valid(r);
    const double* xr = xs.data() + r * n;
    double* yr = y.data() + r * n;
    double m = xr[0];
    for (std::size_t j = 1; j < len; ++j) m = std::max(m, xr[j]);
    if (!std::isfinite(m)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    for (std::size_t j = 0; j < len; ++j) yr[j] /= s;
  }
  Tensor out(x.shape(), std::move(y));
  if (should_record({&x})) {
    auto xi = x.impl();
    record(op, {&x}, out, [xi, n, rows](TensorImpl& o) {
      auto& g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = o.data.data() + r * n;
        const double* dy = o.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[j] * yr[j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += yr[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

}  // namespace detail

// Softmax over the trailing axis, max-subtracted.
inline Tensor softmax_last(const Tensor& x) {
  const std::size_t n = x.cols();
  return detail::softmax_rows(x, "softmax_last",
                              [n](std::size_t) { return n; });
}

// Softmax over a square score matrix where query row i sees keys 0..i.
inline Tensor causal_softmax(const Tensor& x) {
  detail::require_2d(x, "causal_softmax");
  if (x.extent(0) != x.extent(1)) {
    throw DimensionError("causal_softmax: scores must be square, got " +
                         shape_str(x.shape()));
  }
  return detail::softmax_rows(x, "causal_softmax",
                              [](std::size_t r) { return r + 1; });
}

inline Tensor log_softmax_last(const Tensor& x) {
  const std::size_t n = x.cols(), rows = x.rows();
  const auto xs = x.data();
  std::vector<double> y(xs.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double lse = logsumexp(xs.subspan(r * n, n));
    if (!std::isfinite(lse)) throw NumericError("log_softmax_last: non-finite input");
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xs[r * n + j] - lse;
  }
  Tensor out(x.shape(), std::move(y));
  if (detail::should_record({&x})) {
    auto xi = x.impl();
    detail::record("log_softmax_last", {&x}, out,
                   [xi, n, rows](detail::TensorImpl& o) {
                     auto& g = xi->grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* dy = o.grad.data() + r * n;
                       double total = 0.0;
                       for (std::size_t j = 0; j < n; ++j) total += dy[j];
                       for (std::size_t j = 0; j < n; ++j)
                         g[r * n + j] += dy[j] - std::exp(o.data[r * n + j]) * total;
                     }
                   });
  }
  return out;
}

// Per-row (x - mean) / sqrt(var + eps) * gamma + beta, biased variance.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, double eps = 1e-5) {
  const std::size_t n = x.cols(), rows = x.rows();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gamma.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  std::vector<double> y(xs.size()), xhat(xs.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xs.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * inv_std[r];
      xhat[r * n + j] = h;
      y[r * n + j] = h * gs[j] + bs[j];
    }
  }
  Tensor out(x.shape(), std::move(y));
  if (detail::should_record({&x, &gamma, &beta})) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    detail::record(
        "layer_norm", {&x, &gamma, &beta}, out,
        [xi, gi, bi, n, rows, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](detail::TensorImpl& o) {
          auto* gx = detail::sink(xi);
          auto* gg = detail::sink(gi);
          auto* gb = detail::sink(bi);
          std::vector<double> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* dy = o.grad.data() + r * n;
            const double* hr = xhat.data() + r * n;
            if (gg)
              for (std::size_t j = 0; j < n; ++j) (*gg)[j] += dy[j] * hr[j];
            if (gb)
              for (std::size_t j = 0; j < n; ++j) (*gb)[j] += dy[j];
            if (!gx) continue;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = dy[j] * gi->data[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * hr[j];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j)
              (*gx)[r * n + j] += inv_std[r] * (dxhat[j] - m1 - hr[j] * m2);
          }
        });
  }
  return out;
}

// out[i, :] = table[ids[i], :]; the backward pass scatter-adds into rows.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  detail::require_2d(table, "gather_rows");
  const std::size_t v = table.extent(0), e = table.extent(1);
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  std::vector<double> y(ids.size() * e);
  const auto d = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("row id " + std::to_string(ids[i]) +
                       " out of range for table with " + std::to_string(v) +
                       " rows");
    }
    std::copy_n(d.data() + ids[i] * e, e, y.data() + i * e);
  }
  Tensor out({ids.size(), e}, std::move(y));
  if (detail::should_record({&table})) {
    auto ti = table.impl();
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    detail::record("gather_rows", {&table}, out,
                   [ti, idv = std::move(idv), e](detail::TensorImpl& o) {
                     auto& g = ti->grad_buffer();
                     for (std::size_t i = 0; i < idv.size(); ++i)
                       for (std::size_t j = 0; j < e; ++j)
                         g[idv[i] * e + j] += o.grad[i * e + j];
                   });
  }
  return out;
}

inline Tensor embedding_lookup(const Tensor& table,
                               std::span<const std::size_t> ids) {
  return gather_rows(table, ids);
}

// Concatenate matrices along the feature axis.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> y(rows * total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t c = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * c, c, y.data() + r * total + off);
    off += c;
  }
  Tensor out({rows, total}, std::move(y));
  bool any = false;
  for (const auto& p : parts) any = any || detail::should_record({&p});
  if (any) {
    std::vector<detail::ImplPtr> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    active_tape()->record(
        "concat_cols", ins, out.impl(),
        [ins, offsets, rows, total](detail::TensorImpl& o) {
          for (std::size_t k = 0; k < ins.size(); ++k) {
            auto* g = detail::sink(ins[k]);
            if (!g) continue;
            const std::size_t c = ins[k]->shape.back();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < c; ++j)
                (*g)[r * c + j] += o.grad[r * total + offsets[k] + j];
          }
        });
  }
  return out;
}

// Stack matrices with equal feature width on top of each other.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: widths differ, " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<double> y;
  y.reserve(rows * c);
  for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
  Tensor out({rows, c}, std::move(y));
  bool any = false;
  for (const auto& p : parts) any = any || detail::should_record({&p});
  if (any) {
    std::vector<detail::ImplPtr> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    active_tape()->record("concat_rows", ins, out.impl(),
                          [ins](detail::TensorImpl& o) {
                            std::size_t off = 0;
                            for (const auto& in : ins) {
                              const std::size_t len = in->data.size();
                              if (auto* g = detail::sink(in))
                                for (std::size_t i = 0; i < len; ++i)
                                  (*g)[i] += o.grad[off + i];
                              off += len;
                            }
                          });
  }
  return out;
}

// Columns [begin, end) of every row.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.cols(), rows = x.rows();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " +
                         shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().data() + r * n + begin, w, y.data() + r * w);
  Tensor out({rows, w}, std::move(y));
  if (detail::should_record({&x})) {
    auto xi = x.impl();
    detail::record("slice_cols", {&x}, out,
                   [xi, n, rows, begin, w](detail::TensorImpl& o) {
                     auto& g = xi->grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < w; ++j)
                         g[r * n + begin + j] += o.grad[r * w + j];
                   });
  }
  return out;
}

// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.cols(), rows = x.rows();
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " +
                         shape_str(x.shape()));
  }
  std::vector<double> y(x.data().begin() + begin * n, x.data().begin() + end * n);
  Tensor out({end - begin, n}, std::move(y));
  if (detail::should_record({&x})) {
    auto xi = x.impl();
    detail::record("slice_rows", {&x}, out,
                   [xi, n, begin](detail::TensorImpl& o) {
                     auto& g = xi->grad_buffer();
                     for (std::size_t i = 0; i < o.grad.size(); ++i)
                       g[begin * n + i] += o.grad[i];
                   });
  }
  return out;
}

inline Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                         shape_str(shape));
  }
  Tensor out(shape, std::vector<double>(x.data().begin(), x.data().end()));
  if (detail::should_record({&x})) {
    auto xi = x.impl();
    detail::record("reshape", {&x}, out, [xi](detail::TensorImpl& o) {
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
  }
  return out;
}

// out[t, o] = bias[o] + sum_j sum_c x[t-(k-1)+j, c] * kernel[j, c, o],
// zero left padding, so row t only sees rows t-k+1..t.
inline Tensor causal_conv1d(const Tensor& x, const Tensor& kernel,
                            const Tensor& bias) {
  detail::require_2d(x, "causal_conv1d");
  if (kernel.ndim() != 3 || kernel.extent(1) != x.cols()) {
    throw DimensionError("causal_conv1d: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  const std::size_t T = x.extent(0), C = x.cols(), k = kernel.extent(0),
                    co = kernel.extent(2);
  if (bias.defined() && bias.numel() != co) {
    throw DimensionError("causal_conv1d: bias " + shape_str(bias.shape()));
  }
  const double* px = x.data().data();
  const double* pk = kernel.data().data();
  std::vector<double> y(T * co, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double* yt = y.data() + t * co;
    if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), yt);
    for (std::size_t j = 0; j < k; ++j) {
      if (t + j < k - 1) continue;
      const std::size_t src = t + j - (k - 1);
      for (std::size_t c = 0; c < C; ++c) {
        const double xv = px[src * C + c];
        if (xv == 0.0) continue;
        const double* kr = pk + (j * C + c) * co;
        for (std::size_t o = 0; o < co; ++o) yt[o] += xv * kr[o];
      }
    }
  }
  Tensor out({T, co}, std::move(y));
  if (detail::should_record({&x, &kernel, &bias})) {
    auto xi = x.impl(), ki = kernel.impl();
    detail::ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    detail::record(
        "causal_conv1d", {&x, &kernel, &bias}, out,
        [xi, ki, bi, T, C, k, co](detail::TensorImpl& o) {
          auto* gx = detail::sink(xi);
          auto* gk = detail::sink(ki);
          auto* gb = detail::sink(bi);
          for (std::size_t t = 0; t < T; ++t) {
            const double* dy = o.grad.data() + t * co;
            if (gb)
              for (std::size_t q = 0; q < co; ++q) (*gb)[q] += dy[q];
            for (std::size_t j = 0; j < k; ++j) {
              if (t + j < k - 1) continue;
              const std::size_t src = t + j - (k - 1);
              for (std::size_t c = 0; c < C; ++c) {
                const double* kr = ki->data.data() + (j * C + c) * co;
                if (gx) {
                  double s = 0.0;
                  for (std::size_t q = 0; q < co; ++q) s += dy[q] * kr[q];
                  (*gx)[src * C + c] += s;
                }
                if (gk) {
                  const double xv = xi->data[src * C + c];
                  double* gr = gk->data() + (j * C + c) * co;
                  for (std::size_t q = 0; q < co; ++q) gr[q] += xv * dy[q];
                }
              }
            }
          }
        });
  }
  return out;
}

// Per-channel causal convolution: out[t, c] = bias[c] +
// sum_j x[t-(k-1)+j, c] * kernel[j, c].
inline Tensor depthwise_causal_conv1d(const Tensor& x, const Tensor& kernel,
                                      const Tensor& bias) {
  detail::require_2d(x, "depthwise_causal_conv1d");
  detail::require_2d(kernel, "depthwise_causal_conv1d");
  const std::size_t T = x.extent(0), C = x.cols(), k = kernel.extent(0);
  if (kernel.extent(1) != C || bias.numel() != C) {
    throw DimensionError("depthwise_causal_conv1d: kernel " +
                         shape_str(kernel.shape()) + " / bias " +
                         shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  std::vector<double> y(T * C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      double s = bias.data()[c];
      for (std::size_t j = 0; j < k; ++j) {
        if (t + j < k - 1) continue;
        s += x.data()[(t + j - (k - 1)) * C + c] * kernel.data()[j * C + c];
      }
      y[t * C + c] = s;
    }
  Tensor out({T, C}, std::move(y));
  if (detail::should_record({&x, &kernel, &bias})) {
    auto xi = x.impl(), ki = kernel.impl(), bi = bias.impl();
    detail::record("depthwise_causal_conv1d", {&x, &kernel, &bias}, out,
                   [xi, ki, bi, T, C, k](detail::TensorImpl& o) {
                     auto* gx = detail::sink(xi);
                     auto* gk = detail::sink(ki);
                     auto* gb = detail::sink(bi);
                     for (std::size_t t = 0; t < T; ++t)
                       for (std::size_t c = 0; c < C; ++c) {
                         const double dy = o.grad[t * C + c];
                         if (gb) (*gb)[c] += dy;
                         for (std::size_t j = 0; j < k; ++j) {
                           if (t + j < k - 1) continue;
                           const std::size_t src = (t + j - (k - 1)) * C + c;
                           if (gx) (*gx)[src] += dy * ki->data[j * C + c];
                           if (gk) (*gk)[j * C + c] += dy * xi->data[src];
                         }
                       }
                   });
  }
  return out;
}

}  // namespace scct

// SPDX-License-Identifier: Apache-2.0
#include "ssdl/numcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ssdl::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Tensor& t) { return MatMap(t.data().data(), t.rows(), t.cols()); }
CMatMap as_mat(const Tensor& t) { return CMatMap(t.data().data(), t.rows(), t.cols()); }

Tape& tape_of(Var v) {
  if (!v.tape) throw std::logic_error("operation on an unbound Var");
  return *v.tape;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

// ---- elementwise binary with broadcasting -------------------------------

struct Broadcast {
  std::size_t rows, cols;
  bool a_row, a_col, b_row, b_col;  // true when that operand spans the extent
};

Broadcast broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  auto combine = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    shape_error(op, a, b);
  };
  Broadcast s{};
  s.rows = combine(ar, br);
  s.cols = combine(ac, bc);
  s.a_row = ar == s.rows && s.rows != 1;
  s.a_col = ac == s.cols && s.cols != 1;
  s.b_row = br == s.rows && s.rows != 1;
  s.b_col = bc == s.cols && s.cols != 1;
  return s;
}

enum class BinOp { Add, Sub, Mul, Div };

Var binary(BinOp kind, const char* name, Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast s = broadcast_shape(name, av, bv);
  const std::size_t acs = av.cols(), bcs = bv.cols();
  Tensor out = Tensor::zeros(s.rows, s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* ar = av.data().data() + (s.a_row ? r * acs : 0);
    const double* br = bv.data().data() + (s.b_row ? r * bcs : 0);
    double* orow = out.data().data() + r * s.cols;
    for (std::size_t c = 0; c < s.cols; ++c) {
      const double x = ar[s.a_col ? c : 0];
      const double y = br[s.b_col ? c : 0];
      switch (kind) {
        case BinOp::Add: orow[c] = x + y; break;
        case BinOp::Sub: orow[c] = x - y; break;
        case BinOp::Mul: orow[c] = x * y; break;
        case BinOp::Div: orow[c] = x / y; break;
      }
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return tape.record(name, std::move(out), {a, b}, [kind, s, ia, ib, acs, bcs](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor* ga = t.needs_grad(ia) ? &t.grad_accumulator(ia) : nullptr;
    Tensor* gb = t.needs_grad(ib) ? &t.grad_accumulator(ib) : nullptr;
    for (std::size_t r = 0; r < s.rows; ++r) {
      const std::size_t aoff = s.a_row ? r * acs : 0;
      const std::size_t boff = s.b_row ? r * bcs : 0;
      for (std::size_t c = 0; c < s.cols; ++c) {
        const std::size_t ai = aoff + (s.a_col ? c : 0);
        const std::size_t bi = boff + (s.b_col ? c : 0);
        const double gv = g[r * s.cols + c];
        switch (kind) {
          case BinOp::Add:
            if (ga) (*ga)[ai] += gv;
            if (gb) (*gb)[bi] += gv;
            break;
          case BinOp::Sub:
            if (ga) (*ga)[ai] += gv;
            if (gb) (*gb)[bi] -= gv;
            break;
          case BinOp::Mul:
            if (ga) (*ga)[ai] += gv * bv[bi];
            if (gb) (*gb)[bi] += gv * av[ai];
            break;
          case BinOp::Div: {
            const double y = bv[bi];
            if (ga) (*ga)[ai] += gv / y;
            if (gb) (*gb)[bi] -= gv * av[ai] / (y * y);
            break;
          }
        }
      }
    }
  });
}

// ---- elementwise unary --------------------------------------------------

template <class Fwd, class Deriv>
Var unary(const char* name, Var a, Fwd fwd, Deriv deriv) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.id;
  return tape.record(name, std::move(out), {a}, [ia, deriv](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(BinOp::Add, "add", a, b); }
Var sub(Var a, Var b) { return binary(BinOp::Sub, "sub", a, b); }
Var mul(Var a, Var b) { return binary(BinOp::Mul, "mul", a, b); }
Var div(Var a, Var b) { return binary(BinOp::Div, "div", a, b); }

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(std::clamp(x, -kExpClamp, kExpClamp)); },
      [](double x, double y) { return (x > -kExpClamp && x < kExpClamp) ? y : 0.0; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- linear algebra -----------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  const std::size_t ia = a.id, ib = b.id;
  return tape.record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = as_mat(t.grad(self));
    if (t.needs_grad(ia)) as_mat(t.grad_accumulator(ia)).noalias() += g * as_mat(t.value(ib)).transpose();
    if (t.needs_grad(ib)) as_mat(t.grad_accumulator(ib)).noalias() += as_mat(t.value(ia)).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Tensor out = Tensor::zeros(av.rows(), bv.rows());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv).transpose();
  const std::size_t ia = a.id, ib = b.id;
  return tape.record("matmul_nt", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = as_mat(t.grad(self));
    if (t.needs_grad(ia)) as_mat(t.grad_accumulator(ia)).noalias() += g * as_mat(t.value(ib));
    if (t.needs_grad(ib)) as_mat(t.grad_accumulator(ib)).noalias() += g.transpose() * as_mat(t.value(ia));
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.cols(), av.rows());
  as_mat(out) = as_mat(av).transpose();
  const std::size_t ia = a.id;
  return tape.record("transpose", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    as_mat(t.grad_accumulator(ia)) += as_mat(t.grad(self)).transpose();
  });
}

// ---- row-wise normalisers -----------------------------------------------

Var softmax_rows(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data().data() + r * n;
    double* y = out.data().data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  const std::size_t ia = a.id;
  return tape.record("softmax_rows", std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data().data() + r * n;
    double* y = out.data().data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) y[c] = x[c] - lse;
  }
  const std::size_t ia = a.id;
  return tape.record("log_softmax_rows", std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r * n + c] - std::exp(y[r * n + c]) * gs;
    }
  });
}

Var masked_logsumexp_rows(Var a, const Tensor& mask) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (!mask.empty()) require_same_shape(av, mask, "masked_logsumexp_rows");
  auto on = [&mask](std::size_t i) { return mask.empty() || mask[i] != 0.0; };
  Tensor out = Tensor::zeros(m, 1);
  Tensor weights = Tensor::zeros(m, n);  // softmax over the unmasked entries
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (on(r * n + c)) mx = std::max(mx, av[r * n + c]);
    if (!std::isfinite(mx)) throw std::domain_error("logsumexp over an empty or non-finite row");
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c)
      if (on(r * n + c)) z += (weights[r * n + c] = std::exp(av[r * n + c] - mx));
    for (std::size_t c = 0; c < n; ++c) weights[r * n + c] /= z;
    out[r] = mx + std::log(z);
  }
  const std::size_t ia = a.id;
  return tape.record("logsumexp_rows", std::move(out), {a},
                     [ia, m, n, w = std::move(weights)](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       Tensor& ga = t.grad_accumulator(ia);
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r] * w[r * n + c];
                     });
}

Var logsumexp_rows(Var a) { return masked_logsumexp_rows(a, Tensor{}); }

// ---- reductions ---------------------------------------------------------

Var sum(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const std::size_t ia = a.id;
  return tape.record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_accumulator(ia).data()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, 1);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r] += av[r * n + c];
  const std::size_t ia = a.id;
  return tape.record("row_sum", std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r];
  });
}

Var col_sum(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(1, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += av[r * n + c];
  const std::size_t ia = a.id;
  return tape.record("col_sum", std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c];
  });
}

// ---- structural ---------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& tape = tape_of(parts[0]);
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != m) shape_error("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.value().cols());
    ids.push_back(p.id);
    total += p.value().cols();
  }
  Tensor out = Tensor::zeros(m, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * total + off);
    off += widths[k];
  }
  return tape.record("concat_cols", std::move(out), parts, [ids, widths, m, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Tensor& gk = t.grad_accumulator(ids[k]);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& tape = tape_of(parts[0]);
  const std::size_t n = parts[0].value().cols();
  std::vector<std::size_t> sizes, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != n) shape_error("concat_rows", parts[0].value(), p.value());
    sizes.push_back(p.value().size());
    ids.push_back(p.id);
    total += p.value().rows();
  }
  Tensor out = Tensor::zeros(total, n);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.value().size();
  }
  return tape.record("concat_rows", std::move(out), parts, [ids, sizes](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Tensor& gk = t.grad_accumulator(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) gk[i] += g[off + i];
      }
      off += sizes[k];
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (start + len > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") outside " + shape_string(av.shape()));
  }
  Tensor out = Tensor::zeros(m, len);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(av.data().data() + r * n + start, len, out.data().data() + r * len);
  const std::size_t ia = a.id;
  return tape.record("slice_cols", std::move(out), {a}, [ia, m, n, start, len](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < len; ++c) ga[r * n + start + c] += g[r * len + c];
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t len) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (start + len > m) {
    throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") outside " + shape_string(av.shape()));
  }
  Tensor out = Tensor::zeros(len, n);
  std::copy_n(av.data().data() + start * n, len * n, out.data().data());
  const std::size_t ia = a.id;
  return tape.record("slice_rows", std::move(out), {a}, [ia, n, start](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[start * n + i] += g[i];
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out = Tensor::zeros(idx.size(), n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " outside " + shape_string(av.shape()));
    }
    std::copy_n(av.data().data() + idx[i] * n, n, out.data().data() + i * n);
  }
  const std::size_t ia = a.id;
  return tape.record("gather_rows", std::move(out), {a}, [ia, n, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) ga[idx[i] * n + c] += g[i * n + c];
  });
}

Var pick(Var a, std::span<const std::size_t> cols) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (cols.size() != m) throw DimensionError("pick: index count does not match " + shape_string(av.shape()));
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  Tensor out = Tensor::zeros(m, 1);
  for (std::size_t r = 0; r < m; ++r) {
    if (idx[r] >= n) throw DimensionError("pick: column " + std::to_string(idx[r]) + " outside " + shape_string(av.shape()));
    out[r] = av[r * n + idx[r]];
  }
  const std::size_t ia = a.id;
  return tape.record("pick", std::move(out), {a}, [ia, n, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * n + idx[r]] += g[r];
  });
}

// ---- sparse / graph -----------------------------------------------------

Var spmm(Var values, std::span<const std::size_t> rows, std::span<const std::size_t> cols, Var x,
         std::size_t out_rows) {
  Tape& tape = tape_of(values);
  const Tensor& vv = values.value();
  const Tensor& xv = x.value();
  const std::size_t nnz = rows.size(), d = xv.cols();
  if (cols.size() != nnz || vv.size() != nnz) shape_error("spmm", vv, xv);
  std::vector<std::size_t> ri(rows.begin(), rows.end()), ci(cols.begin(), cols.end());
  Tensor out = Tensor::zeros(out_rows, d);
  for (std::size_t k = 0; k < nnz; ++k) {
    if (ri[k] >= out_rows || ci[k] >= xv.rows()) throw DimensionError("spmm: coordinate outside operand shapes");
    const double w = vv[k];
    const double* src = xv.data().data() + ci[k] * d;
    double* dst = out.data().data() + ri[k] * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
  }
  const std::size_t iv = values.id, ix = x.id;
  return tape.record("spmm", std::move(out), {values, x},
                     [iv, ix, d, ri = std::move(ri), ci = std::move(ci)](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& vv = t.value(iv);
                       const Tensor& xv = t.value(ix);
                       Tensor* gv = t.needs_grad(iv) ? &t.grad_accumulator(iv) : nullptr;
                       Tensor* gx = t.needs_grad(ix) ? &t.grad_accumulator(ix) : nullptr;
                       for (std::size_t k = 0; k < ri.size(); ++k) {
                         const double* grow = g.data().data() + ri[k] * d;
                         if (gv) {
                           const double* xrow = xv.data().data() + ci[k] * d;
                           double dot = 0.0;
                           for (std::size_t c = 0; c < d; ++c) dot += grow[c] * xrow[c];
                           (*gv)[k] += dot;
                         }
                         if (gx) {
                           double* dst = gx->data().data() + ci[k] * d;
                           for (std::size_t c = 0; c < d; ++c) dst[c] += vv[k] * grow[c];
                         }
                       }
                     });
}

Var segment_softmax(Var scores, std::span<const std::size_t> offsets) {
  Tape& tape = tape_of(scores);
  const Tensor& sv = scores.value();
  if (offsets.empty() || offsets.back() != sv.size()) {
    throw DimensionError("segment_softmax: offsets do not cover " + shape_string(sv.shape()));
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  Tensor out(sv.shape());
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    if (off[s] == off[s + 1]) continue;
    const double mx = *std::max_element(sv.data().begin() + off[s], sv.data().begin() + off[s + 1]);
    double z = 0.0;
    for (std::size_t k = off[s]; k < off[s + 1]; ++k) z += (out[k] = std::exp(sv[k] - mx));
    for (std::size_t k = off[s]; k < off[s + 1]; ++k) out[k] /= z;
  }
  const std::size_t is = scores.id;
  return tape.record("segment_softmax", std::move(out), {scores}, [is, off = std::move(off)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gs = t.grad_accumulator(is);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      double dot = 0.0;
      for (std::size_t k = off[s]; k < off[s + 1]; ++k) dot += g[k] * y[k];
      for (std::size_t k = off[s]; k < off[s + 1]; ++k) gs[k] += y[k] * (g[k] - dot);
    }
  });
}

Var l2_normalize_rows(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += av[r * n + c] * av[r * n + c];
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) throw std::domain_error("cosine similarity undefined for a zero-norm vector");
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] / norms[r];
  }
  const std::size_t ia = a.id;
  return tape.record("l2_normalize_rows", std::move(out), {a},
                     [ia, m, n, norms = std::move(norms)](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& y = t.value(self);
                       Tensor& ga = t.grad_accumulator(ia);
                       for (std::size_t r = 0; r < m; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                         for (std::size_t c = 0; c < n; ++c)
                           ga[r * n + c] += (g[r * n + c] - y[r * n + c] * dot) / norms[r];
                       }
                     });
}

Var pairwise_gaussian_logpdf(Var z, Var mean, Var logvar, const Tensor& zmask, const Tensor& qmask) {
  Tape& tape = tape_of(z);
  const Tensor& zv = z.value();
  const Tensor& mv = mean.value();
  const Tensor& lv = logvar.value();
  require_same_shape(mv, lv, "pairwise_gaussian_logpdf");
  if (zv.cols() != mv.cols()) shape_error("pairwise_gaussian_logpdf", zv, mv);
  if (!zmask.empty()) require_same_shape(zv, zmask, "pairwise_gaussian_logpdf");
  if (!qmask.empty()) require_same_shape(mv, qmask, "pairwise_gaussian_logpdf");
  const std::size_t M = zv.rows(), N = mv.rows(), D = zv.cols();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Tensor out = Tensor::zeros(M, N);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double w = (zmask.empty() ? 1.0 : zmask[i * D + d]) * (qmask.empty() ? 1.0 : qmask[j * D + d]);
        if (w == 0.0) continue;
        const double delta = zv[i * D + d] - mv[j * D + d];
        acc += w * (-half_log_2pi - 0.5 * lv[j * D + d] - 0.5 * delta * delta * std::exp(-lv[j * D + d]));
      }
      out[i * N + j] = acc;
    }
  }
  const std::size_t iz = z.id, im = mean.id, il = logvar.id;
  return tape.record(
      "pairwise_gaussian_logpdf", std::move(out), {z, mean, logvar},
      [iz, im, il, M, N, D, zmask, qmask](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& zv = t.value(iz);
        const Tensor& mv = t.value(im);
        const Tensor& lv = t.value(il);
        Tensor* gz = t.needs_grad(iz) ? &t.grad_accumulator(iz) : nullptr;
        Tensor* gm = t.needs_grad(im) ? &t.grad_accumulator(im) : nullptr;
        Tensor* gl = t.needs_grad(il) ? &t.grad_accumulator(il) : nullptr;
        for (std::size_t i = 0; i < M; ++i) {
          for (std::size_t j = 0; j < N; ++j) {
            const double gij = g[i * N + j];
            if (gij == 0.0) continue;
            for (std::size_t d = 0; d < D; ++d) {
              const double w =
                  (zmask.empty() ? 1.0 : zmask[i * D + d]) * (qmask.empty() ? 1.0 : qmask[j * D + d]);
              if (w == 0.0) continue;
              const double G = gij * w;
              const double prec = std::exp(-lv[j * D + d]);
              const double delta = zv[i * D + d] - mv[j * D + d];
              if (gz) (*gz)[i * D + d] -= G * delta * prec;
              if (gm) (*gm)[j * D + d] += G * delta * prec;
              if (gl) (*gl)[j * D + d] += G * (-0.5 + 0.5 * delta * delta * prec);
            }
          }
        }
      });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Tensor& av = a.value();
  Tensor mask(av.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (double& v : mask.data()) v = keep(rng) ? s : 0.0;
  return mul(a, tape_of(a).constant(std::move(mask)));
}

}  // namespace ssdl::num

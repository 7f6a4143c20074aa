// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cantus/error.hpp"

namespace cantus::ops {
namespace {

using NodePtr = std::shared_ptr<Node>;

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

// Accumulation target for parent i, or nullptr if it needs no gradient.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data().data();
}

template <typename Forward, typename Derivative>
Var unary(const char* op, const Var& x, Forward f, Derivative df) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(std::move(out), op, {x.node()}, [df](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const Tensor& in = self.parents[0]->value;
    for (std::size_t i = 0; i < in.size(); ++i) {
      gx[i] += self.grad[i] * df(in[i], self.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), "add", {a.node(), b.node()}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), "sub", {a.node(), b.node()}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), "mul", {a.node(), b.node()}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Var add_scalar(const Var& x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t n = x.value().cols();
  if (bias.value().rank() != 1 || bias.value().size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) +
                     " does not match last axis of " + shape_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data().data() + r * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += bias.value()[j];
  }
  return make_result(std::move(out), "add_bias", {x.node(), bias.node()}, [n](Node& self) {
    const std::size_t rows = self.grad.rows();
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* go = self.grad.data().data() + r * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += go[j];
      }
    }
  });
}

Var matmul(const Var& x, const Var& w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.rank() < 1 || xv.cols() != wv.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_string(xv.shape()) + " by " +
                     shape_string(wv.shape()));
  }
  const std::size_t rows = xv.rows(), k = wv.dim(0), n = wv.dim(1);
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor out(out_shape, 0.0);
  const double* xp = xv.data().data();
  const double* wp = wv.data().data();
  double* op = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = op + r * n;
    const double* xrow = xp + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double xi = xrow[i];
      const double* wrow = wp + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xi * wrow[j];
    }
  }
  return make_result(std::move(out), "matmul", {x.node(), w.node()},
                     [rows, k, n](Node& self) {
    const double* gp = self.grad.data().data();
    const double* xp = self.parents[0]->value.data().data();
    const double* wp = self.parents[1]->value.data().data();
    if (double* gx = grad_of(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = gp + r * n;
        double* gxrow = gx + r * k;
        for (std::size_t i = 0; i < k; ++i) {
          const double* wrow = wp + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
          gxrow[i] += acc;
        }
      }
    }
    if (double* gw = grad_of(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = gp + r * n;
        const double* xrow = xp + r * k;
        for (std::size_t i = 0; i < k; ++i) {
          const double xi = xrow[i];
          double* gwrow = gw + i * n;
          for (std::size_t j = 0; j < n; ++j) gwrow[j] += xi * grow[j];
        }
      }
    }
  });
}

Var gather_rows(const Var& x, std::span<const std::int64_t> index, const Shape& out_shape) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  const std::size_t rows = xv.rows();
  if (shape_size(out_shape) != index.size()) {
    throw ShapeError("gather_rows: index count " + std::to_string(index.size()) +
                     " does not match shape " + shape_string(out_shape));
  }
  for (std::int64_t idx : index) {
    if (idx < -1 || idx >= static_cast<std::int64_t>(rows)) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
  }
  Shape shape = out_shape;
  shape.push_back(d);
  Tensor out(shape, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0) continue;
    std::copy_n(xv.data().data() + index[r] * d, d, out.data().data() + r * d);
  }
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return make_result(std::move(out), "gather_rows", {x.node()},
                     [idx = std::move(idx), d](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      const double* g = self.grad.data().data() + r * d;
      double* dst = gx + idx[r] * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
}

Var embedding(const Var& table, std::span<const std::int64_t> ids, const Shape& ids_shape) {
  if (table.value().rank() != 2) {
    throw ShapeError("embedding: table must be rank 2, got " + shape_string(table.shape()));
  }
  for (std::int64_t id : ids) {
    if (id < 0 || id >= static_cast<std::int64_t>(table.value().dim(0))) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside table of " +
                       std::to_string(table.value().dim(0)) + " rows");
    }
  }
  return gather_rows(table, ids, ids_shape);
}

Var conv1d(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(1) != xv.dim(2) || wv.dim(0) % 2 == 0 ||
      bias.value().rank() != 1 || bias.value().size() != wv.dim(2)) {
    throw ShapeError("conv1d: incompatible input " + shape_string(xv.shape()) + ", weight " +
                     shape_string(wv.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const std::size_t batch = xv.dim(0), len = xv.dim(1), cin = xv.dim(2);
  const std::size_t kernel = wv.dim(0), cout = wv.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  Tensor out({batch, len, cout}, 0.0);
  const double* xp = xv.data().data();
  const double* wp = wv.data().data();
  const double* bp = bias.value().data().data();
  double* op = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double* orow = op + (b * len + t) * cout;
      std::copy_n(bp, cout, orow);
      for (std::size_t kk = 0; kk < kernel; ++kk) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const double* xrow = xp + (b * len + src) * cin;
        const double* wk = wp + kk * cin * cout;
        for (std::size_t i = 0; i < cin; ++i) {
          const double xi = xrow[i];
          const double* wrow = wk + i * cout;
          for (std::size_t j = 0; j < cout; ++j) orow[j] += xi * wrow[j];
        }
      }
    }
  }
  return make_result(std::move(out), "conv1d", {x.node(), weight.node(), bias.node()},
                     [=](Node& self) {
    const double* gp = self.grad.data().data();
    const double* xp = self.parents[0]->value.data().data();
    const double* wp = self.parents[1]->value.data().data();
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const double* grow = gp + (b * len + t) * cout;
        if (gb) {
          for (std::size_t j = 0; j < cout; ++j) gb[j] += grow[j];
        }
        for (std::size_t kk = 0; kk < kernel; ++kk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          const std::size_t srow = b * len + static_cast<std::size_t>(src);
          const double* wk = wp + kk * cin * cout;
          if (gx) {
            double* gxrow = gx + srow * cin;
            for (std::size_t i = 0; i < cin; ++i) {
              const double* wrow = wk + i * cout;
              double acc = 0.0;
              for (std::size_t j = 0; j < cout; ++j) acc += grow[j] * wrow[j];
              gxrow[i] += acc;
            }
          }
          if (gw) {
            const double* xrow = xp + srow * cin;
            double* gwk = gw + kk * cin * cout;
            for (std::size_t i = 0; i < cin; ++i) {
              const double xi = xrow[i];
              double* gwrow = gwk + i * cout;
              for (std::size_t j = 0; j < cout; ++j) gwrow[j] += xi * grow[j];
            }
          }
        }
      }
    }
  });
}

Var relu(const Var& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(const Var& x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Var exp(const Var& x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Var abs(const Var& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result(std::move(out), "softmax", {x.node()}, [n, rows](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data().data() + r * n;
      const double* g = self.grad.data().data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double epsilon) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                     shape_string(bias.shape()) + " do not match last axis of " +
                     shape_string(xv.shape()));
  }
  Tensor out(xv.shape());
  // Normalized activations and inverse deviations, kept for backward.
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  const double* g = gain.value().data().data();
  const double* b = bias.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (in[j] - mu) * is;
      normalized[r * n + j] = xhat;
      out[r * n + j] = xhat * g[j] + b[j];
    }
  }
  return make_result(std::move(out), "layer_norm", {x.node(), gain.node(), bias.node()},
                     [n, rows, normalized = std::move(normalized),
                      inv_std = std::move(inv_std)](Node& self) {
    const double* gain = self.parents[1]->value.data().data();
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* go = self.grad.data().data() + r * n;
      const double* xhat = normalized.data() + r * n;
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (gg) gg[j] += go[j] * xhat[j];
        if (gb) gb[j] += go[j];
        dxhat[j] = go[j] * gain[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[j];
      }
      if (!gx) continue;
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
      }
    }
  });
}

Var dropout(const Var& x, double rate, bool training, std::mt19937_64& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ShapeError("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    // 53-bit uniform in [0, 1), independent of the standard library's distributions.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result(std::move(out), "dropout", {x.node()},
                     [mask = std::move(mask)](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
}

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

constexpr std::size_t kRowBlock = 4;

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

// Copies head h of the first n rows of a [L, width] slice into a [dh, n] block.
void pack_transposed(const double* src, std::size_t n, std::size_t width, std::size_t offset,
                     std::size_t dh, double* dst) {
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < dh; ++c) dst[c * n + j] = src[j * width + offset + c];
  }
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              std::span<const std::size_t> lengths, Tensor* probs) {
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const Tensor& qv = q.value();
  if (qv.rank() != 3 || heads == 0 || qv.dim(2) % heads != 0 || lengths.size() != qv.dim(0)) {
    throw ShapeError("attention: input " + shape_string(qv.shape()) + " with " +
                     std::to_string(heads) + " heads and " + std::to_string(lengths.size()) +
                     " lengths");
  }
  const std::size_t batch = qv.dim(0), len = qv.dim(1), width = qv.dim(2);
  const std::size_t dh = width / heads;
  for (std::size_t len_b : lengths) {
    if (len_b == 0 || len_b > len) throw ShapeError("attention: invalid sequence length");
  }
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  // Probabilities are kept only for the valid n x n block of each (b, h).
  std::vector<std::size_t> offsets(batch * heads + 1, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      offsets[b * heads + h + 1] = offsets[b * heads + h] + lengths[b] * lengths[b];
    }
  }
  std::vector<double> weights(offsets.back());
  Tensor out(qv.shape(), 0.0);
  const double* qp = qv.data().data();
  const double* kp = k.value().data().data();
  const double* vp = v.value().data().data();
  std::vector<double> kt(dh * len), vt(dh * len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = lengths[b];
    const std::size_t base = b * len * width;
    for (std::size_t h = 0; h < heads; ++h) {
      pack_transposed(kp + base, n, width, h * dh, dh, kt.data());
      pack_transposed(vp + base, n, width, h * dh, dh, vt.data());
      double* wbh = weights.data() + offsets[b * heads + h];
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qp + base + i * width + h * dh;
        double* row = wbh + i * n;
        for (std::size_t c = 0; c < dh; ++c) axpy(qi[c] * scale_factor, kt.data() + c * n, row, n);
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += (row[j] = std::exp(row[j] - mx));
        const double inv = 1.0 / total;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
        double* oi = out.data().data() + base + i * width + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] = dot(row, vt.data() + c * n, n);
      }
    }
  }
  if (probs) {
    *probs = Tensor({batch, heads, len, len}, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t n = lengths[b];
      for (std::size_t h = 0; h < heads; ++h) {
        const double* src = weights.data() + offsets[b * heads + h];
        double* dst = probs->data().data() + (b * heads + h) * len * len;
        for (std::size_t i = 0; i < n; ++i) std::copy_n(src + i * n, n, dst + i * len);
      }
    }
  }
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  return make_result(std::move(out), "attention", {q.node(), k.node(), v.node()},
                     [=, weights = std::move(weights), offsets = std::move(offsets),
                      lens = std::move(lens)](Node& self) {
    const double* qp = self.parents[0]->value.data().data();
    const double* kp = self.parents[1]->value.data().data();
    const double* vp = self.parents[2]->value.data().data();
    const double* gp = self.grad.data().data();
    double* gq = grad_of(self, 0);
    double* gk = grad_of(self, 1);
    double* gv = grad_of(self, 2);
    std::vector<double> kt(dh * len), vt(dh * len), gkt(dh * len), gvt(dh * len);
    std::vector<double> dscore(len), ds(kRowBlock * len);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t n = lens[b];
      const std::size_t base = b * len * width;
      for (std::size_t h = 0; h < heads; ++h) {
        pack_transposed(kp + base, n, width, h * dh, dh, kt.data());
        pack_transposed(vp + base, n, width, h * dh, dh, vt.data());
        std::fill_n(gkt.begin(), dh * n, 0.0);
        std::fill_n(gvt.begin(), dh * n, 0.0);
        const double* wbh = weights.data() + offsets[b * heads + h];
        for (std::size_t i0 = 0; i0 < n; i0 += kRowBlock) {
          const std::size_t rows = std::min(kRowBlock, n - i0);
          const double* go[kRowBlock];
          const double* qi[kRowBlock];
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t i = i0 + r;
            const double* row = wbh + i * n;
            go[r] = gp + base + i * width + h * dh;
            qi[r] = qp + base + i * width + h * dh;
            // dP = dO V^T, then the softmax Jacobian.
            std::fill_n(dscore.begin(), n, 0.0);
            for (std::size_t c = 0; c < dh; ++c) axpy(go[r][c], vt.data() + c * n, dscore.data(), n);
            const double d = dot(dscore.data(), row, n);
            double* dsr = ds.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) dsr[j] = row[j] * (dscore[j] - d) * scale_factor;
            if (gq) {
              double* gqi = gq + base + i * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += dot(dsr, kt.data() + c * n, n);
            }
          }
          // Row-ordered accumulation into dV^T and dK^T, a block of rows per pass.
          for (std::size_t c = 0; c < dh; ++c) {
            double* gvc = gvt.data() + c * n;
            double* gkc = gkt.data() + c * n;
            if (rows == kRowBlock) {
              const double a0 = go[0][c], a1 = go[1][c], a2 = go[2][c], a3 = go[3][c];
              const double b0 = qi[0][c], b1 = qi[1][c], b2 = qi[2][c], b3 = qi[3][c];
              const double* p0 = wbh + i0 * n;
              const double* p1 = p0 + n;
              const double* p2 = p1 + n;
              const double* p3 = p2 + n;
              const double* d0 = ds.data();
              const double* d1 = d0 + n;
              const double* d2 = d1 + n;
              const double* d3 = d2 + n;
              for (std::size_t j = 0; j < n; ++j) {
                double gv_j = gvc[j];
                gv_j += a0 * p0[j];
                gv_j += a1 * p1[j];
                gv_j += a2 * p2[j];
                gv_j += a3 * p3[j];
                gvc[j] = gv_j;
                double gk_j = gkc[j];
                gk_j += b0 * d0[j];
                gk_j += b1 * d1[j];
                gk_j += b2 * d2[j];
                gk_j += b3 * d3[j];
                gkc[j] = gk_j;
              }
            } else {
              for (std::size_t r = 0; r < rows; ++r) {
                axpy(go[r][c], wbh + (i0 + r) * n, gvc, n);
                axpy(qi[r][c], ds.data() + r * n, gkc, n);
              }
            }
          }
        }
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t c = 0; c < dh; ++c) {
            if (gk) gk[base + j * width + h * dh + c] += gkt[c * n + j];
            if (gv) gv[base + j * width + h * dh + c] += gvt[c * n + j];
          }
        }
      }
    }
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const std::size_t rows = parts.front().value().rows();
  Shape shape = parts.front().shape();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr> nodes;
  for (const Var& p : parts) {
    Shape expect = p.shape();
    if (expect.size() != shape.size() ||
        !std::equal(expect.begin(), expect.end() - 1, shape.begin())) {
      throw ShapeError("concat_last: shape mismatch " + shape_string(shape) + " vs " +
                       shape_string(expect));
    }
    widths.push_back(p.value().cols());
    total += widths.back();
    nodes.push_back(p.node());
  }
  shape.back() = total;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      std::copy_n(parts[p].value().data().data() + r * widths[p], widths[p],
                  out.data().data() + r * total + offset);
      offset += widths[p];
    }
  }
  return make_result(std::move(out), "concat_last", std::move(nodes),
                     [rows, total, widths = std::move(widths)](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* src = self.grad.data().data() + r * total + offset;
          for (std::size_t j = 0; j < widths[p]; ++j) g[r * widths[p] + j] += src[j];
        }
      }
      offset += widths[p];
    }
  });
}

std::vector<Var> split_last(const Var& x, std::span<const std::size_t> widths) {
  const std::size_t total = x.value().cols(), rows = x.value().rows();
  std::size_t sum_widths = 0;
  for (std::size_t w : widths) sum_widths += w;
  if (sum_widths != total) {
    throw ShapeError("split_last: widths sum to " + std::to_string(sum_widths) +
                     " but last axis of " + shape_string(x.shape()) + " is " +
                     std::to_string(total));
  }
  std::vector<Var> parts;
  std::size_t offset = 0;
  for (std::size_t width : widths) {
    Shape shape = x.shape();
    shape.back() = width;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.value().data().data() + r * total + offset, width,
                  out.data().data() + r * width);
    }
    parts.push_back(make_result(std::move(out), "split_last", {x.node()},
                                [rows, total, offset, width](Node& self) {
      double* g = grad_of(self, 0);
      if (!g) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = self.grad.data().data() + r * width;
        for (std::size_t j = 0; j < width; ++j) g[r * total + offset + j] += src[j];
      }
    }));
    offset += width;
  }
  return parts;
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {x.node()}, [](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var mask_rows(const Var& x, std::span<const double> row_scale) {
  const std::size_t n = x.value().cols(), rows = x.value().rows();
  if (row_scale.size() != rows) {
    throw ShapeError("mask_rows: " + std::to_string(row_scale.size()) + " scales for " +
                     std::to_string(rows) + " rows of " + shape_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] *= row_scale[r];
  }
  std::vector<double> scales(row_scale.begin(), row_scale.end());
  return make_result(std::move(out), "mask_rows", {x.node()},
                     [n, scales = std::move(scales)](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < scales.size(); ++r) {
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r * n + j] * scales[r];
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_result(Tensor::scalar(total), "sum", {x.node()}, [](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const double go = self.grad[0];
    const std::size_t count = self.parents[0]->value.size();
    for (std::size_t i = 0; i < count; ++i) g[i] += go;
  });
}

Var mean(const Var& x) {
  const std::size_t count = x.value().size();
  if (count == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(count));
}

Var masked_mean(const Var& x, std::span<const std::uint8_t> mask) {
  if (mask.size() != x.value().size()) {
    throw ShapeError("masked_mean: mask of " + std::to_string(mask.size()) +
                     " entries for shape " + shape_string(x.shape()));
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    total += x.value()[i];
    ++count;
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result(Tensor::scalar(total * inv), "masked_mean", {x.node()},
                     [inv, keep = std::move(keep)](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const double go = self.grad[0] * inv;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) g[i] += go;
    }
  });
}

Var segment_sum(const Var& x, std::span<const std::pair<std::size_t, std::size_t>> spans) {
  const std::size_t size = x.value().size();
  Tensor out({spans.size()}, 0.0);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto [begin, end] = spans[s];
    if (begin >= end || end > size) {
      throw ShapeError("segment_sum: span [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ") out of range for " + std::to_string(size) +
                       " elements");
    }
    for (std::size_t i = begin; i < end; ++i) out[s] += x.value()[i];
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranges(spans.begin(), spans.end());
  return make_result(std::move(out), "segment_sum", {x.node()},
                     [ranges = std::move(ranges)](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t s = 0; s < ranges.size(); ++s) {
      for (std::size_t i = ranges[s].first; i < ranges[s].second; ++i) g[i] += self.grad[s];
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits: shape mismatch " + shape_string(logits.shape()) +
                     " vs " + shape_string(targets.shape()));
  }
  const Tensor& z = logits.value();
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::fabs(z[i])));
  }
  return make_result(std::move(out), "bce_with_logits", {logits.node()},
                     [targets](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const Tensor& z = self.parents[0]->value;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                   : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      g[i] += self.grad[i] * (p - targets[i]);
    }
  });
}

}  // namespace cantus::ops

#include "txscam/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace txscam::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const auto& v : vars)
    if (v.tape().needs_grad(v.id())) return true;
  return false;
}

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix m) { return push(std::move(m), false, nullptr); }

Var Tape::param(Param& p) {
  if (!p.grad.same_shape(p.value)) p.zero_grad();
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw Error("backward on a non-recording tape");
  if (loss.value().size() != 1) throw ShapeMismatch("backward needs a 1x1 loss, got " + loss.value().shape_str());
  grad(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.back) n.back(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  same_tape(a, b);
  require(a.cols() == b.rows(), "matmul " + a.value().shape_str() + " x " + b.value().shape_str());
  auto& t = a.tape();
  const auto ia = a.id(), ib = b.id();
  return t.push(nn::matmul(a.value(), b.value()), any_grad({a, b}), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) matmul_a_bt_acc(g, t.value(ib), t.grad(ia));
    if (t.needs_grad(ib)) matmul_at_b_acc(t.value(ia), g, t.grad(ib));
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  require(a.value().same_shape(b.value()), "add " + a.value().shape_str() + " + " + b.value().shape_str());
  Matrix out = a.value();
  out += b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var add_row(Var a, Var bias) {
  same_tape(a, bias);
  require(bias.rows() == 1 && bias.cols() == a.cols(),
          "add_row " + a.value().shape_str() + " + " + bias.value().shape_str());
  Matrix out = a.value();
  const auto& b = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b[c];
  const auto ia = a.id(), ib = bias.id();
  return a.tape().push(std::move(out), any_grad({a, bias}), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var hadamard(Var a, Var b) {
  same_tape(a, b);
  require(a.value().same_shape(b.value()), "hadamard " + a.value().shape_str() + " * " + b.value().shape_str());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad(ia);
      const Matrix& vb = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad(ib);
      const Matrix& va = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  out *= s;
  const auto ia = a.id();
  return a.tape().push(std::move(out), any_grad({a}), [ia, s](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

// ---------------------------------------------------------------------------
// Element-wise activations

namespace {

template <typename F, typename D>
Var elementwise(Var a, F f, D df) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = f(x);
  const auto ia = a.id();
  return a.tape().push(std::move(out), any_grad({a}), [ia, df](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var leaky_relu(Var a, double slope) {
  return elementwise(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(Var a, double alpha) {
  return elementwise(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Var sigmoid(Var a) {
  return elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Softmax

Var softmax_rows(Var a, std::span<const std::uint8_t> valid_cols) {
  const Matrix& x = a.value();
  require(valid_cols.empty() || valid_cols.size() == x.cols(), "softmax mask length does not match columns");
  auto ok = [&](std::size_t c) { return valid_cols.empty() || valid_cols[c]; };
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (ok(c)) mx = std::max(mx, x(r, c));
    if (mx == -INFINITY) throw Error("softmax row has no valid entries");
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!ok(c)) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= z;
  }
  const auto ia = a.id();
  return a.tape().push(std::move(y), any_grad({a}), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var transpose(Var a) {
  const auto ia = a.id();
  return a.tape().push(a.value().transposed(), any_grad({a}), [ia](Tape& t, std::size_t self) {
    t.grad(ia) += t.grad(self).transposed();
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  require(rows * cols == a.value().size(), "reshape " + a.value().shape_str() + " to " + std::to_string(rows) + "x" +
                                               std::to_string(cols));
  const auto ia = a.id();
  return a.tape().push(Matrix(rows, cols, a.value().data()), any_grad({a}), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b);
  require(a.rows() == b.rows(), "concat_cols " + a.value().shape_str() + " | " + b.value().shape_str());
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy_n(a.value().row(r).begin(), ca, out.row(r).begin());
    std::copy_n(b.value().row(r).begin(), cb, out.row(r).begin() + ca);
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), any_grad({a, b}), [ia, ib, ca, cb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
    }
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
    }
  });
}

Var stack_rows(std::span<const Var> parts) {
  require(!parts.empty(), "stack_rows needs at least one part");
  Tape& tape = parts[0].tape();
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (&p.tape() != &tape) throw Error("operands live on different tapes");
    require(p.cols() == cols, "stack_rows column mismatch");
    rows += p.rows();
    grad = grad || tape.needs_grad(p.id());
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off * cols);
    off += p.rows();
  }
  return tape.push(std::move(out), grad, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.needs_grad(id)) {
        Matrix& gi = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.rows(), "slice_rows out of range on " + a.value().shape_str());
  const std::size_t cols = a.cols();
  Matrix out(count, cols);
  std::copy_n(a.value().data().begin() + begin * cols, count * cols, out.data().begin());
  const auto ia = a.id();
  return a.tape().push(std::move(out), any_grad({a}), [ia, begin, cols](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const auto ia = a.id();
  return a.tape().push(Matrix(1, 1, s), any_grad({a}), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& x : t.grad(ia).data()) x += g;
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x * x;
  const auto ia = a.id();
  return a.tape().push(Matrix(1, 1, s), any_grad({a}), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution helpers

Var unfold_rows(Var a, std::size_t kernel) {
  require(kernel >= 1, "unfold kernel must be >= 1");
  const Matrix& x = a.value();
  const std::size_t len = x.rows(), ch = x.cols();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  Matrix out(len, kernel * ch);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t k = 0; k < kernel; ++k) {
      const auto src = static_cast<std::ptrdiff_t>(t + k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      for (std::size_t c = 0; c < ch; ++c) out(t, k * ch + c) = x(static_cast<std::size_t>(src), c);
    }
  const auto ia = a.id();
  return a.tape().push(std::move(out), any_grad({a}), [ia, kernel, half, len, ch](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(r + k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        for (std::size_t c = 0; c < ch; ++c) ga(static_cast<std::size_t>(src), c) += g(r, k * ch + c);
      }
  });
}

Var masked_max_rows(Var a, std::span<const std::uint8_t> valid_rows) {
  const Matrix& x = a.value();
  require(valid_rows.size() == x.rows(), "max-pool mask length does not match rows");
  std::vector<std::size_t> arg(x.cols(), x.rows());
  Matrix out(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!valid_rows[r]) continue;
      if (arg[c] == x.rows() || x(r, c) > x(arg[c], c)) arg[c] = r;
    }
    if (arg[c] == x.rows()) throw Error("max-pool over zero valid rows");
    out[c] = x(arg[c], c);
  }
  const auto ia = a.id();
  return a.tape().push(std::move(out), any_grad({a}), [ia, arg = std::move(arg)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t c = 0; c < g.cols(); ++c) ga(arg[c], c) += g[c];
  });
}

// ---------------------------------------------------------------------------
// Attention

Var block_attention(Var q, Var k, Var v, std::size_t blocks, std::size_t len, std::size_t heads,
                    std::span<const std::uint8_t> valid, bool causal, double scale, std::vector<Matrix>* weights_out) {
  same_tape(q, k);
  same_tape(q, v);
  const std::size_t d = q.cols();
  require(q.value().same_shape(k.value()) && q.value().same_shape(v.value()), "attention q/k/v shapes differ");
  require(q.rows() == blocks * len, "attention rows != blocks * len");
  require(heads >= 1 && d % heads == 0, "attention width not divisible by heads");
  require(valid.size() == len, "attention mask length != sequence length");
  const std::size_t dh = d / heads;

  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  auto weights = std::make_shared<std::vector<Matrix>>();
  weights->reserve(blocks * heads);
  Matrix out(blocks * len, d);

  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t off = b * len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      Matrix A(len, len);
      for (std::size_t i = 0; i < len; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < len; ++j) {
          double s;
          if (!valid[j] || (causal && j > i)) {
            s = kMaskFill;
          } else {
            s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += Q(off + i, c0 + c) * K(off + j, c0 + c);
            s *= scale;
          }
          A(i, j) = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          A(i, j) = std::exp(A(i, j) - mx);
          z += A(i, j);
        }
        for (std::size_t j = 0; j < len; ++j) A(i, j) /= z;
        for (std::size_t j = 0; j < len; ++j) {
          const double w = A(i, j);
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < dh; ++c) out(off + i, c0 + c) += w * V(off + j, c0 + c);
        }
      }
      weights->push_back(std::move(A));
    }
  }
  if (weights_out) *weights_out = *weights;

  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().push(
      std::move(out), any_grad({q, k, v}),
      [iq, ik, iv, blocks, len, heads, dh, scale, weights](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Q = t.value(iq);
        const Matrix& K = t.value(ik);
        const Matrix& V = t.value(iv);
        const bool gq = t.needs_grad(iq), gk = t.needs_grad(ik), gv = t.needs_grad(iv);
        Matrix* GQ = gq ? &t.grad(iq) : nullptr;
        Matrix* GK = gk ? &t.grad(ik) : nullptr;
        Matrix* GV = gv ? &t.grad(iv) : nullptr;
        Matrix dA(len, len);
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::size_t off = b * len;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            const Matrix& A = (*weights)[b * heads + h];
            for (std::size_t i = 0; i < len; ++i)
              for (std::size_t j = 0; j < len; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += G(off + i, c0 + c) * V(off + j, c0 + c);
                dA(i, j) = s;
              }
            if (GV)
              for (std::size_t i = 0; i < len; ++i)
                for (std::size_t j = 0; j < len; ++j) {
                  const double w = A(i, j);
                  if (w == 0.0) continue;
                  for (std::size_t c = 0; c < dh; ++c) (*GV)(off + j, c0 + c) += w * G(off + i, c0 + c);
                }
            for (std::size_t i = 0; i < len; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < len; ++j) dot += dA(i, j) * A(i, j);
              for (std::size_t j = 0; j < len; ++j) {
                const double ds = A(i, j) * (dA(i, j) - dot) * scale;
                if (ds == 0.0) continue;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (GQ) (*GQ)(off + i, c0 + c) += ds * K(off + j, c0 + c);
                  if (GK) (*GK)(off + j, c0 + c) += ds * Q(off + i, c0 + c);
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

Var cross_entropy(Var logits, std::size_t label) {
  const Matrix& x = logits.value();
  require(x.rows() == 1 && label < x.cols(), "cross_entropy expects 1xC logits and label < C");
  double mx = -INFINITY;
  for (double v : x.data()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  const auto il = logits.id();
  return logits.tape().push(Matrix(1, 1, lse - x[label]), any_grad({logits}),
                            [il, label, lse](Tape& t, std::size_t self) {
                              const double g = t.grad(self)[0];
                              const Matrix& x = t.value(il);
                              Matrix& gl = t.grad(il);
                              for (std::size_t c = 0; c < x.cols(); ++c)
                                gl[c] += g * (std::exp(x[c] - lse) - (c == label ? 1.0 : 0.0));
                            });
}

}  // namespace txscam::nn

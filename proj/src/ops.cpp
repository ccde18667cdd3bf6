#include "dgerc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dgerc/kernels.hpp"

namespace dgerc {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace dgerc

namespace dgerc::ops {

namespace {

// Offset maps from every output element back into the two broadcast inputs.
struct Broadcast {
  Shape out;
  enum class Kind { Same, SuffixB, SuffixA, General } kind = Kind::General;
  std::vector<std::size_t> a_idx, b_idx;

  std::size_t a(std::size_t i, std::size_t na) const {
    switch (kind) {
      case Kind::Same:
      case Kind::SuffixB:
        return i;
      case Kind::SuffixA:
        return i % na;
      default:
        return a_idx[i];
    }
  }
  std::size_t b(std::size_t i, std::size_t nb) const {
    switch (kind) {
      case Kind::Same:
      case Kind::SuffixA:
        return i;
      case Kind::SuffixB:
        return i % nb;
      default:
        return b_idx[i];
    }
  }
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast plan_broadcast(const Shape& sa, const Shape& sb, const char* op) {
  Broadcast bc;
  if (sa == sb) {
    bc.out = sa;
    bc.kind = Broadcast::Kind::Same;
    return bc;
  }
  if (is_suffix(sb, sa)) {
    bc.out = sa;
    bc.kind = Broadcast::Kind::SuffixB;
    return bc;
  }
  if (is_suffix(sa, sb)) {
    bc.out = sb;
    bc.kind = Broadcast::Kind::SuffixA;
    return bc;
  }
  const std::size_t rank = std::max(sa.size(), sb.size());
  Shape pa(rank - sa.size(), 1), pb(rank - sb.size(), 1);
  pa.insert(pa.end(), sa.begin(), sa.end());
  pb.insert(pb.end(), sb.begin(), sb.end());
  bc.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(sa) + " with " +
                       shape_str(sb));
    }
    bc.out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    stride_a[d] = pa[d] == 1 ? 0 : ra;
    stride_b[d] = pb[d] == 1 ? 0 : rb;
    ra *= pa[d];
    rb *= pb[d];
  }
  const std::size_t n = numel(bc.out);
  bc.a_idx.resize(n);
  bc.b_idx.resize(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bc.a_idx[i] = oa;
    bc.b_idx[i] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      oa += stride_a[d];
      ob += stride_b[d];
      if (counter[d] < bc.out[d]) break;
      oa -= stride_a[d] * counter[d];
      ob -= stride_b[d] * counter[d];
      counter[d] = 0;
    }
  }
  return bc;
}

template <std::floating_point T, typename F>
Tensor<T> map_unary(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

std::size_t last_dim(const Shape& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1");
  return s.back();
}

}  // namespace

template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape();
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();

  if (sb.size() == 2) {
    // Shared right operand: fold the batch of A into rows.
    const std::size_t rows = a.value().size() / k;
    Shape so(sa.begin(), sa.end() - 1);
    so.push_back(n);
    Tensor<T> out(so);
    kernels::parallel::gemm(false, false, rows, n, k, a.value().data(), b.value().data(),
                            out.data(), false);
    return tape.record(std::move(out), {a, b},
                       [a, b, rows, n, k](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                         if (a.requires_grad()) {
                           kernels::parallel::gemm(false, true, rows, k, n, g.data(),
                                                   t.value(b).data(), t.grad_sink(a).data(),
                                                   true);
                         }
                         if (b.requires_grad()) {
                           kernels::parallel::gemm(true, false, k, n, rows, t.value(a).data(),
                                                   g.data(), t.grad_sink(b).data(), true);
                         }
                       });
  }

  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  Broadcast bc = plan_broadcast(ba, bb, "matmul");
  const std::size_t batches = numel(bc.out);
  const std::size_t na = numel(ba), nb = numel(bb);
  std::vector<std::size_t> ia(batches), ib(batches);
  for (std::size_t i = 0; i < batches; ++i) {
    ia[i] = bc.a(i, na);
    ib[i] = bc.b(i, nb);
  }
  Shape so = bc.out;
  so.push_back(m);
  so.push_back(n);
  Tensor<T> out(so);
  for (std::size_t i = 0; i < batches; ++i) {
    kernels::parallel::gemm(false, false, m, n, k, a.value().data() + ia[i] * m * k,
                            b.value().data() + ib[i] * k * n, out.data() + i * m * n, false);
  }
  return tape.record(
      std::move(out), {a, b},
      [a, b, ia, ib, m, n, k](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        for (std::size_t i = 0; i < ia.size(); ++i) {
          if (a.requires_grad()) {
            kernels::parallel::gemm(false, true, m, k, n, g.data() + i * m * n,
                                    t.value(b).data() + ib[i] * k * n,
                                    t.grad_sink(a).data() + ia[i] * m * k, true);
          }
          if (b.requires_grad()) {
            kernels::parallel::gemm(true, false, k, n, m, t.value(a).data() + ia[i] * m * k,
                                    g.data() + i * m * n,
                                    t.grad_sink(b).data() + ib[i] * k * n, true);
          }
        }
      });
}

namespace {

enum class BinOp { Add, Sub, Mul };

template <std::floating_point T>
Var<T> binary(Var<T> a, Var<T> b, BinOp op, const char* name) {
  Tape<T>& tape = *a.tape();
  auto bc = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t na = av.size(), nb = bv.size();
  Tensor<T> out(bc->out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[bc->a(i, na)];
    const T y = bv[bc->b(i, nb)];
    out[i] = op == BinOp::Add ? x + y : op == BinOp::Sub ? x - y : x * y;
  }
  return tape.record(std::move(out), {a, b},
                     [a, b, bc, op, na, nb](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                       if (a.requires_grad()) {
                         Tensor<T>& ga = t.grad_sink(a);
                         const Tensor<T>& bv = t.value(b);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const T d = op == BinOp::Mul ? g[i] * bv[bc->b(i, nb)] : g[i];
                           ga[bc->a(i, na)] += d;
                         }
                       }
                       if (b.requires_grad()) {
                         Tensor<T>& gb = t.grad_sink(b);
                         const Tensor<T>& av = t.value(a);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const T d = op == BinOp::Mul   ? g[i] * av[bc->a(i, na)]
                                       : op == BinOp::Sub ? -g[i]
                                                          : g[i];
                           gb[bc->b(i, nb)] += d;
                         }
                       }
                     });
}

// Elementwise op whose derivative depends only on the input value.
template <std::floating_point T, typename F, typename DF>
Var<T> pointwise(Var<T> x, F f, DF df) {
  Tensor<T> out = map_unary(x.value(), f);
  return x.tape()->record(std::move(out), {x},
                          [x, df](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            const Tensor<T>& xv = t.value(x);
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
                          });
}

}  // namespace

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Add, "add");
}

template <std::floating_point T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Sub, "sub");
}

template <std::floating_point T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Mul, "mul");
}

template <std::floating_point T>
Var<T> scale(Var<T> x, T factor) {
  return pointwise(
      x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <std::floating_point T>
Var<T> exp(Var<T> x) {
  Tensor<T> out = map_unary(x.value(), [](T v) { return std::exp(v); });
  return x.tape()->record(std::move(out), {x},
                          [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
                          });
}

template <std::floating_point T>
Var<T> sum(Var<T> x) {
  T s = T(0);
  for (T v : x.value().values()) s += v;
  return x.tape()->record(Tensor<T>::scalar(s), {x},
                          [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                          });
}

template <std::floating_point T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape()->record(std::move(out), {x},
                          [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          });
}

template <std::floating_point T>
Var<T> transpose(Var<T> x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("transpose: needs rank >= 2, got " + shape_str(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batches = x.value().size() / (r * c);
  Shape so = s;
  std::swap(so[so.size() - 2], so.back());
  Tensor<T> out(so);
  const Tensor<T>& xv = x.value();
  for (std::size_t b = 0; b < batches; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
  return x.tape()->record(std::move(out), {x},
                          [x, batches, r, c](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t b = 0; b < batches; ++b)
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                  gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
                          });
}

template <std::floating_point T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  const std::size_t d = last_dim(s, "slice_last");
  if (begin > end || end > d) {
    throw ShapeError("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_str(s));
  }
  const std::size_t rows = d == 0 ? 0 : x.value().size() / d;
  const std::size_t w = end - begin;
  Shape so = s;
  so.back() = w;
  Tensor<T> out(so);
  const Tensor<T>& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data() + r * d + begin, w, out.data() + r * w);
  return x.tape()->record(std::move(out), {x},
                          [x, rows, d, w, begin](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < w; ++j)
                                gx[r * d + begin + j] += g[r * w + j];
                          });
}

template <std::floating_point T>
Var<T> concat_last(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  Tape<T>& tape = *parts.front().tape();
  Shape lead = parts.front().shape();
  last_dim(lead, "concat_last");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    Shape l = p.shape();
    const std::size_t w = last_dim(l, "concat_last");
    l.pop_back();
    if (l != lead) {
      throw ShapeError("concat_last: leading dims differ: " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    }
    widths.push_back(w);
    total += w;
  }
  const std::size_t rows = numel(lead);
  Shape so = lead;
  so.push_back(total);
  Tensor<T> out(so);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  return tape.record(std::move(out), parts,
                     [parts, widths, rows, total](Tape<T>& t, const Tensor<T>& g,
                                                  const Tensor<T>&) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         if (parts[k].requires_grad()) {
                           Tensor<T>& gp = t.grad_sink(parts[k]);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               gp[r * widths[k] + j] += g[r * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

template <std::floating_point T>
Var<T> relu(Var<T> x) {
  return pointwise(
      x, [](T v) { return v > T(0) || std::isnan(v) ? v : T(0); },  // NaN passes through
      [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <std::floating_point T>
Var<T> leaky_relu(Var<T> x, T slope) {
  return pointwise(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v) { return v > T(0) ? T(1) : slope; });
}

template <std::floating_point T>
Var<T> gelu(Var<T> x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return pointwise(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-T(0.5) * v * v);
      });
}

template <std::floating_point T>
Var<T> log_softmax(Var<T> x) {
  const std::size_t d = last_dim(x.shape(), "log_softmax");
  const Tensor<T>& xv = x.value();
  const std::size_t rows = d == 0 ? 0 : xv.size() / d;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xi = xv.data() + r * d;
    const T mx = *std::max_element(xi, xi + d);
    T z = T(0);
    for (std::size_t j = 0; j < d; ++j) z += std::exp(xi[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xi[j] - lse;
  }
  return x.tape()->record(std::move(out), {x},
                          [x, rows, d](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                            Tensor<T>& gx = t.grad_sink(x);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T gs = T(0);
                              for (std::size_t j = 0; j < d; ++j) gs += g[r * d + j];
                              for (std::size_t j = 0; j < d; ++j) {
                                gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * gs;
                              }
                            }
                          });
}

template <std::floating_point T>
Var<T> softmax_masked(Var<T> scores, const MaskTensor& mask) {
  const Tensor<T>& sv = scores.value();
  if (mask.shape() != sv.shape()) {
    throw ShapeError("softmax_masked: mask " + shape_str(mask.shape()) + " vs scores " +
                     shape_str(sv.shape()));
  }
  const std::size_t d = last_dim(sv.shape(), "softmax_masked");
  const std::size_t rows = d == 0 ? 0 : sv.size() / d;
  Tensor<T> out(sv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < d; ++j)
      if (mask[r * d + j]) mx = std::max(mx, sv[r * d + j]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T z = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      if (!mask[r * d + j]) continue;
      out[r * d + j] = std::exp(sv[r * d + j] - mx);
      z += out[r * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= z;
  }
  return scores.tape()->record(
      std::move(out), {scores}, [scores, rows, d](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
        Tensor<T>& gx = t.grad_sink(scores);
        for (std::size_t r = 0; r < rows; ++r) {
          T dot = T(0);
          for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * g[r * d + j];
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
        }
      });
}

template <std::floating_point T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const std::size_t d = last_dim(x.shape(), "layer_norm");
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
  }
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  const std::size_t rows = d == 0 ? 0 : xv.size() / d;
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xi = xv.data() + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xi[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, inv_std, rows, d](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        const Tensor<T>& gv = t.value(gain);
        if (gain.requires_grad()) {
          Tensor<T>& gg = t.grad_sink(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
        }
        if (bias.requires_grad()) {
          Tensor<T>& gb = t.grad_sink(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (x.requires_grad()) {
          Tensor<T>& gx = t.grad_sink(x);
          for (std::size_t r = 0; r < rows; ++r) {
            T m1 = T(0), m2 = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gv[j];
              m1 += dh;
              m2 += dh * (*xhat)[r * d + j];
            }
            m1 /= static_cast<T>(d);
            m2 /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gv[j];
              gx[r * d + j] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * d + j] * m2);
            }
          }
        }
      });
}

template <std::floating_point T>
Var<T> embedding(Var<T> table, const IdTensor& ids) {
  const Shape& ts = table.shape();
  if (ts.size() != 2) throw ShapeError("embedding: table must be 2-d, got " + shape_str(ts));
  const std::size_t rows = ts[0], d = ts[1];
  for (int id : ids.values()) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw DataError("embedding: id " + std::to_string(id) + " outside table of " +
                      std::to_string(rows) + " rows");
    }
  }
  Shape so = ids.shape();
  so.push_back(d);
  Tensor<T> out(so);
  const Tensor<T>& tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  return table.tape()->record(std::move(out), {table},
                              [table, ids, d](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                                Tensor<T>& gt = t.grad_sink(table);
                                for (std::size_t i = 0; i < ids.size(); ++i) {
                                  const std::size_t row = static_cast<std::size_t>(ids[i]);
                                  for (std::size_t j = 0; j < d; ++j) gt[row * d + j] += g[i * d + j];
                                }
                              });
}

template <std::floating_point T>
Var<T> masked_nll(Var<T> log_probs, const IdTensor& labels, const MaskTensor& mask) {
  const Shape& s = log_probs.shape();
  const std::size_t c = last_dim(s, "masked_nll");
  const Shape lead(s.begin(), s.end() - 1);
  if (labels.shape() != lead || mask.shape() != lead) {
    throw ShapeError("masked_nll: log-probs " + shape_str(s) + " vs labels " +
                     shape_str(labels.shape()) + " / mask " + shape_str(mask.shape()));
  }
  std::size_t count = 0;
  T total = T(0);
  const Tensor<T>& lp = log_probs.value();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i]) continue;
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw DataError("masked_nll: label " + std::to_string(y) + " outside [0," +
                      std::to_string(c) + ") at a valid position");
    }
    total -= lp[i * c + static_cast<std::size_t>(y)];
    ++count;
  }
  if (count == 0) throw DataError("masked_nll: no valid positions (empty batch)");
  const T inv = T(1) / static_cast<T>(count);
  return log_probs.tape()->record(
      Tensor<T>::scalar(total * inv), {log_probs},
      [log_probs, labels, mask, c, inv](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        Tensor<T>& gl = t.grad_sink(log_probs);
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (mask[i]) gl[i * c + static_cast<std::size_t>(labels[i])] -= g[0] * inv;
        }
      });
}

template <std::floating_point T>
Var<T> dropout(Var<T> x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const T keep_scale = T(1.0 / (1.0 - rate));
  Tensor<T> m(x.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.bernoulli(1.0 - rate) ? keep_scale : T(0);
  return mul(x, x.tape()->constant(std::move(m)));
}

template <std::floating_point T>
Var<T> custom_grad_apply(const CustomGradSpec<T>& spec, const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw std::logic_error("custom_grad_apply: no inputs");
  Tape<T>& tape = *inputs.front().tape();
  std::vector<Tensor<T>> vals;
  vals.reserve(inputs.size());
  for (const Var<T>& v : inputs) vals.push_back(v.value());
  Tensor<T> out = spec.forward(std::span<const Tensor<T>>(vals));
  return tape.record(
      std::move(out), inputs,
      [spec, inputs](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
        std::vector<Tensor<T>> vals;
        vals.reserve(inputs.size());
        for (const Var<T>& v : inputs) vals.push_back(t.value(v));
        std::vector<Tensor<T>> grads = spec.backward(g, std::span<const Tensor<T>>(vals), y);
        if (grads.size() != inputs.size()) {
          throw std::logic_error("custom gradient returned " + std::to_string(grads.size()) +
                                 " gradients for " + std::to_string(inputs.size()) + " inputs");
        }
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (grads[i].shape() != vals[i].shape()) {
            throw std::logic_error("custom gradient for input " + std::to_string(i) +
                                   " has shape " + shape_str(grads[i].shape()) + ", expected " +
                                   shape_str(vals[i].shape()));
          }
          const bool blocked = i < spec.blocked.size() && spec.blocked[i];
          if (blocked || !inputs[i].requires_grad()) continue;
          Tensor<T>& gi = t.grad_sink(inputs[i]);
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += grads[i][k];
        }
      });
}

template <std::floating_point T>
CustomGradSpec<T> compensation_scaling_spec() {
  CustomGradSpec<T> spec;
  spec.forward = [](std::span<const Tensor<T>> in) {
    const T theta = in[1].item();
    if (!(theta < T(1))) throw std::domain_error("compensation scaling needs theta < 1");
    const T s = T(1) / (T(1) - theta);
    Tensor<T> out(in[0].shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0][i] * s;
    return out;
  };
  spec.backward = [](const Tensor<T>& g, std::span<const Tensor<T>> in, const Tensor<T>&) {
    const T s = T(1) / (T(1) - in[1].item());
    Tensor<T> gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * s;
    return std::vector<Tensor<T>>{std::move(gx), Tensor<T>(in[1].shape())};
  };
  spec.blocked = {false, true};
  return spec;
}

#define DGERC_INSTANTIATE_OPS(T)                                                     \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                         \
  template Var<T> add<T>(Var<T>, Var<T>);                                            \
  template Var<T> sub<T>(Var<T>, Var<T>);                                            \
  template Var<T> mul<T>(Var<T>, Var<T>);                                            \
  template Var<T> scale<T>(Var<T>, T);                                               \
  template Var<T> exp<T>(Var<T>);                                                    \
  template Var<T> sum<T>(Var<T>);                                                    \
  template Var<T> reshape<T>(Var<T>, Shape);                                         \
  template Var<T> transpose<T>(Var<T>);                                              \
  template Var<T> slice_last<T>(Var<T>, std::size_t, std::size_t);                   \
  template Var<T> concat_last<T>(const std::vector<Var<T>>&);                        \
  template Var<T> relu<T>(Var<T>);                                                   \
  template Var<T> leaky_relu<T>(Var<T>, T);                                          \
  template Var<T> gelu<T>(Var<T>);                                                   \
  template Var<T> log_softmax<T>(Var<T>);                                            \
  template Var<T> softmax_masked<T>(Var<T>, const MaskTensor&);                      \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                          \
  template Var<T> embedding<T>(Var<T>, const IdTensor&);                             \
  template Var<T> masked_nll<T>(Var<T>, const IdTensor&, const MaskTensor&);         \
  template Var<T> dropout<T>(Var<T>, double, Rng&);                                  \
  template Var<T> custom_grad_apply<T>(const CustomGradSpec<T>&, const std::vector<Var<T>>&); \
  template CustomGradSpec<T> compensation_scaling_spec<T>();

DGERC_INSTANTIATE_OPS(float)
DGERC_INSTANTIATE_OPS(double)

#undef DGERC_INSTANTIATE_OPS

}  // namespace dgerc::ops

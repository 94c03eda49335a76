#include "cafield/ad/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cafield/error.hpp"

namespace cafield::ad {
namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> index_a;  // empty when a's shape equals out
  std::vector<std::size_t> index_b;
};

std::vector<std::size_t> broadcast_map(const Shape& src, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - src.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    strides[i + offset] = src[i] == 1 ? 0 : s;
    s *= src[i];
  }
  const std::size_t n = shape_size(out);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t idx = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = idx;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      idx += strides[ax];
      if (counter[ax] < out[ax]) break;
      idx -= strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return map;
}

Broadcast broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    bc.out[i] = std::max(ea, eb);
  }
  if (a != bc.out) bc.index_a = broadcast_map(a, bc.out);
  if (b != bc.out) bc.index_b = broadcast_map(b, bc.out);
  return bc;
}

inline std::size_t at(const std::vector<std::size_t>& map, std::size_t i) {
  return map.empty() ? i : map[i];
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  auto bc = broadcast(a.shape(), b.shape());
  const std::size_t n = shape_size(bc.out);
  std::vector<double> out(n);
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = va[at(bc.index_a, i)];
    const double y = vb[at(bc.index_b, i)];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
    }
  }
  auto ia = std::move(bc.index_a);
  auto ib = std::move(bc.index_b);
  return Tensor::from_op(
      bc.out, std::move(out), {a, b},
      [kind, ia = std::move(ia), ib = std::move(ib)](Node& o) {
        Node& pa = *o.parents[0];
        Node& pb = *o.parents[1];
        const auto& g = o.grad;
        if (pa.requires_grad) {
          auto& ga = pa.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double scale = kind == BinaryKind::Mul ? pb.value[at(ib, i)] : 1.0;
            ga[at(ia, i)] += g[i] * scale;
          }
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) {
            double scale = 1.0;
            if (kind == BinaryKind::Sub) scale = -1.0;
            if (kind == BinaryKind::Mul) scale = pa.value[at(ia, i)];
            gb[at(ib, i)] += g[i] * scale;
          }
        }
      });
}

/// Elementwise unary op given value and derivative-from-(input, output).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
  return Tensor::from_op(a.shape(), std::move(out), {a}, [df](Node& o) {
    Node& p = *o.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(p.value[i], o.value[i]);
  });
}

/// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul); }

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw DomainError("sqrt of negative value");
  }
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = va[i * k + p];
      if (s == 0.0) continue;
      const double* brow = vb.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    const auto& g = o.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = pb.value.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa.value[i * k + p];
          if (s == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto va = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = va[i * c + j];
  return Tensor::from_op({c, r}, std::move(out), {a}, [r, c](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor left_multiply(const Tensor& m, const Tensor& x) {
  if (m.rank() != 2 || x.rank() != 3 || m.dim(1) != x.dim(1)) {
    throw DimensionError("left_multiply shape mismatch " + shape_string(m.shape()) + " . " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = m.dim(0), inner = m.dim(1), batch = x.dim(0), ch = x.dim(2);
  const auto vm = m.values();
  const auto vx = x.values();
  std::vector<double> out(batch * rows * ch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = vx.data() + b * inner * ch;
    double* ob = out.data() + b * rows * ch;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < inner; ++j) {
        const double s = vm[i * inner + j];
        if (s == 0.0) continue;
        for (std::size_t c = 0; c < ch; ++c) ob[i * ch + c] += s * xb[j * ch + c];
      }
    }
  }
  return Tensor::from_op({batch, rows, ch}, std::move(out), {m, x},
                         [rows, inner, batch, ch](Node& o) {
    Node& pm = *o.parents[0];
    Node& px = *o.parents[1];
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gb = o.grad.data() + b * rows * ch;
        double* gxb = gx.data() + b * inner * ch;
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < inner; ++j) {
            const double s = pm.value[i * inner + j];
            if (s == 0.0) continue;
            for (std::size_t c = 0; c < ch; ++c) gxb[j * ch + c] += s * gb[i * ch + c];
          }
        }
      }
    }
    if (pm.requires_grad) {
      auto& gm = pm.grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gb = o.grad.data() + b * rows * ch;
        const double* xb = px.value.data() + b * inner * ch;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < inner; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < ch; ++c) acc += gb[i * ch + c] * xb[j * ch + c];
            gm[i * inner + j] += acc;
          }
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::from_op({}, {s}, {a}, [](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (auto& x : g) x += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DomainError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis);
  const auto va = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += va[(o * s.extent + e) * s.inner + i];
  return Tensor::from_op(drop_axis(a.shape(), axis), std::move(out), {a}, [s](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i)
          g[(o * s.extent + e) * s.inner + i] += n.grad[o * s.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis);
  if (s.extent == 0) throw DomainError("mean over an empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(s.extent));
}

MaxResult max(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis);
  if (s.extent == 0) throw DomainError("max over an empty axis");
  const auto va = a.values();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double bv = va[o * s.extent * s.inner + i];
      for (std::size_t e = 1; e < s.extent; ++e) {
        const double v = va[(o * s.extent + e) * s.inner + i];
        if (v > bv) {
          bv = v;
          best = e;
        }
      }
      out[o * s.inner + i] = bv;
      arg[o * s.inner + i] = best;
    }
  MaxResult r{Tensor::from_op(drop_axis(a.shape(), axis), std::move(out), {a},
                              [s, arg](Node& n) {
                                auto& g = n.parents[0]->grad_buffer();
                                for (std::size_t o = 0; o < s.outer; ++o)
                                  for (std::size_t i = 0; i < s.inner; ++i) {
                                    const std::size_t k = o * s.inner + i;
                                    g[(o * s.extent + arg[k]) * s.inner + i] += n.grad[k];
                                  }
                              }),
              arg};
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " +
                         shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of no tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& sh = p.shape();
    if (sh.size() != ref.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < sh.size(); ++i) {
      if (i != axis && sh[i] != ref[i]) {
        throw DimensionError("concat shape mismatch " + shape_string(sh) + " vs " +
                             shape_string(ref));
      }
    }
    extents.push_back(sh[axis]);
    total += sh[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const auto s = split_axis(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    const std::size_t ext = extents[k];
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(v.data() + o * ext * s.inner, ext * s.inner,
                  out.data() + (o * total + start) * s.inner);
    start += ext;
  }
  return Tensor::from_op(out_shape, std::move(out), parts, [s, extents, total](Node& n) {
    std::size_t start = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      Node& p = *n.parents[k];
      const std::size_t ext = extents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t j = 0; j < ext * s.inner; ++j)
            g[o * ext * s.inner + j] += n.grad[(o * total + start) * s.inner + j];
      }
      start += ext;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto s = split_axis(a.shape(), axis);
  if (start + length > s.extent) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") exceeds extent " + std::to_string(s.extent));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const auto va = a.values();
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(va.data() + (o * s.extent + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  return Tensor::from_op(out_shape, std::move(out), {a}, [s, start, length](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < length * s.inner; ++j)
        g[(o * s.extent + start) * s.inner + j] += n.grad[o * length * s.inner + j];
  });
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices) {
  if (a.rank() == 0) throw DimensionError("gather on a scalar");
  const std::size_t rows = a.dim(0);
  const std::size_t width = rows == 0 ? 0 : a.size() / rows;
  for (auto i : indices) {
    if (i >= rows) throw DimensionError("gather index " + std::to_string(i) + " out of range");
  }
  Shape out_shape = a.shape();
  out_shape[0] = indices.size();
  const auto va = a.values();
  std::vector<double> out(indices.size() * width);
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(va.data() + indices[r] * width, width, out.data() + r * width);
  return Tensor::from_op(out_shape, std::move(out), {a}, [indices, width](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (std::size_t j = 0; j < width; ++j) g[indices[r] * width + j] += n.grad[r * width + j];
  });
}

BatchNormState::BatchNormState(std::size_t c, double m, double e)
    : channels(c),
      momentum(m),
      eps(e),
      running_mean(c, 0.0),
      running_var(c, 1.0),
      gamma(Tensor::full({c}, 1.0, true)),
      beta(Tensor::zeros({c}, true)) {}

Tensor batch_norm(const Tensor& x, BatchNormState& st, bool training) {
  if (x.rank() != 2 || x.dim(1) != st.channels) {
    throw DimensionError("batch_norm expects [rows, " + std::to_string(st.channels) + "], got " +
                         shape_string(x.shape()));
  }
  if (!st.enabled) return x;
  const std::size_t rows = x.dim(0), ch = st.channels;
  if (rows == 0) throw DomainError("batch_norm on an empty batch");
  const auto vx = x.values();

  std::vector<double> mu(ch, 0.0), var(ch, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mu[c] += vx[r * ch + c];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = vx[r * ch + c] - mu[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t c = 0; c < ch; ++c) {
      st.running_mean[c] = st.momentum * st.running_mean[c] + (1.0 - st.momentum) * mu[c];
      st.running_var[c] = st.momentum * st.running_var[c] + (1.0 - st.momentum) * var[c];
    }
  } else {
    mu = st.running_mean;
    var = st.running_var;
  }

  std::vector<double> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + st.eps);
  std::vector<double> xhat(rows * ch), out(rows * ch);
  const auto gamma = st.gamma.values();
  const auto beta = st.beta.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t k = r * ch + c;
      xhat[k] = (vx[k] - mu[c]) * inv_std[c];
      out[k] = gamma[c] * xhat[k] + beta[c];
    }

  return Tensor::from_op(
      x.shape(), std::move(out), {x, st.gamma, st.beta},
      [rows, ch, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& n) {
        Node& px = *n.parents[0];
        Node& pg = *n.parents[1];
        Node& pb = *n.parents[2];
        const auto& g = n.grad;
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.grad_buffer();
          auto& gb = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c) {
              gg[c] += g[r * ch + c] * xhat[r * ch + c];
              gb[c] += g[r * ch + c];
            }
        }
        if (!px.requires_grad) return;
        auto& gx = px.grad_buffer();
        if (!training) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c)
              gx[r * ch + c] += g[r * ch + c] * pg.value[c] * inv_std[c];
          return;
        }
        const double inv_rows = 1.0 / static_cast<double>(rows);
        std::vector<double> sum_d(ch, 0.0), sum_dx(ch, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const double d = g[r * ch + c] * pg.value[c];
            sum_d[c] += d;
            sum_dx[c] += d * xhat[r * ch + c];
          }
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t k = r * ch + c;
            const double d = g[k] * pg.value[c];
            gx[k] += inv_std[c] * (d - inv_rows * sum_d[c] - xhat[k] * inv_rows * sum_dx[c]);
          }
      });
}

}  // namespace cafield::ad

#include "tmhfs/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detail.hpp"

namespace tmhfs::numeric {

using detail::grad_of;
using detail::ImplPtr;
using detail::make_output;
using detail::record;

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Offset into `in` for every flat index of `out`; empty when in == out.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  if (in == out) return {};
  const std::size_t rank = out.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis_in = in.size() - 1 - k;
    const std::size_t axis_out = rank - 1 - k;
    in_stride[axis_out] = in[axis_in] == 1 ? 0 : stride;
    stride *= in[axis_in];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    offsets[flat] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += in_stride[ax];
      if (idx[ax] < out[ax]) break;
      off -= in_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return offsets;
}

inline std::size_t at(const std::vector<std::size_t>& offsets, std::size_t i) {
  return offsets.empty() ? i : offsets[i];
}

template <typename T, typename F, typename DA, typename DB>
BasicTensor<T> binary_op(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name, F f, DA dfa,
                         DB dfb) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  auto oa = broadcast_offsets(out_shape, a.shape());
  auto ob = broadcast_offsets(out_shape, b.shape());
  const std::size_t n = shape_numel(out_shape);
  Buffer<T> out(n);
  auto xa = a.data();
  auto xb = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xa[at(oa, i)], xb[at(ob, i)]);
  auto result = make_output<T>(std::move(out_shape), std::move(out), name, {&a, &b});
  if (result.requires_grad()) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = result.impl(), oa = std::move(oa), ob = std::move(ob), dfa,
               dfb]() {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const std::size_t m = g.size();
      if (ai->requires_grad) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t ia = at(oa, i);
          ga[ia] += g[i] * dfa(ai->data[ia], bi->data[at(ob, i)]);
        }
      }
      if (bi->requires_grad) {
        auto& gb = grad_of(*bi);
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t ib = at(ob, i);
          gb[ib] += g[i] * dfb(ai->data[at(oa, i)], bi->data[ib]);
        }
      }
    });
  }
  return result;
}

// dfdx receives (x, y) where y = f(x).
template <typename T, typename F, typename D>
BasicTensor<T> unary_op(const BasicTensor<T>& x, const char* name, F f, D dfdx) {
  auto src = x.data();
  Buffer<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
  auto result = make_output<T>(x.shape(), std::move(out), name, {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), dfdx]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i] * dfdx(xi->data[i], oi->data[i]);
    });
  }
  return result;
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

template <typename T>
BasicTensor<T> reduce_axis(const BasicTensor<T>& x, std::size_t axis, bool keepdim, T factor, const char* name) {
  const auto s = split_axis(x.shape(), axis, name);
  Buffer<T> out(s.outer * s.inner, T(0));
  auto src = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      const T* row = src.data() + (o * s.n + k) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  for (auto& v : out) v *= factor;
  auto result = make_output<T>(reduced_shape(x.shape(), axis, keepdim), std::move(out), name, {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), s, factor]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.n; ++k) {
          T* dst = gx.data() + (o * s.n + k) * s.inner;
          const T* g = oi->grad.data() + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * factor;
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> reduce_all(const BasicTensor<T>& x, T factor, const char* name) {
  T acc = T(0);
  for (auto v : x.data()) acc += v;
  auto result = make_output<T>(Shape{1}, Buffer<T>{acc * factor}, name, {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), factor]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      const T g = oi->grad[0] * factor;
      for (auto& v : gx) v += g;
    });
  }
  return result;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_op<T>(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_op<T>(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_op<T>(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_op<T>(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& x) {
  return unary_op<T>(x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary_op<T>(x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value) {
  return unary_op<T>(x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary_op<T>(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return unary_op<T>(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
BasicTensor<T> sqrt(const BasicTensor<T>& x) {
  return unary_op<T>(x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return unary_op<T>(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary_op<T>(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
  return unary_op<T>(
      x, "softplus", [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  return reduce_all<T>(x, T(1), "sum");
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, std::size_t axis, bool keepdim) {
  return reduce_axis<T>(x, axis, keepdim, T(1), "sum");
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return reduce_all<T>(x, T(1) / static_cast<T>(x.numel()), "mean");
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis, bool keepdim) {
  return reduce_axis<T>(x, axis, keepdim, T(1) / static_cast<T>(x.dim(axis)), "mean");
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto src = x.data();
  auto result = make_output<T>(std::move(shape), Buffer<T>(src.begin(), src.end()), "reshape", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl()]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto src = x.data();
  Buffer<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  auto result = make_output<T>(Shape{c, r}, std::move(out), "transpose", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), r, c]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += oi->grad[j * r + i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  const auto whole = split_axis(out_shape, axis, "concat");
  Buffer<T> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  bool track = false;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * whole.inner;
    auto src = p.data();
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(src.data() + o * w, w, out.data() + o * whole.n * whole.inner + col);
    }
    col += w;
    widths.push_back(w);
    track = track || p.requires_grad();
  }
  BasicTensor<T> result = make_output<T>(std::move(out_shape), std::move(out), "concat", {});
  result.set_requires_grad(track && grad_enabled());
  if (result.requires_grad()) {
    std::vector<ImplPtr<T>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record<T>([impls = std::move(impls), widths = std::move(widths), oi = result.impl(), whole]() {
      if (oi->grad.empty()) return;
      const std::size_t row = whole.n * whole.inner;
      std::size_t col = 0;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (impls[k]->requires_grad) {
          auto& g = grad_of(*impls[k]);
          for (std::size_t o = 0; o < whole.outer; ++o) {
            const T* src = oi->grad.data() + o * row + col;
            T* dst = g.data() + o * widths[k];
            for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
          }
        }
        col += widths[k];
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> take_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("take_rows: empty row list");
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Buffer<T> out(rows.size() * inner);
  auto src = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw ShapeError("take_rows: row " + std::to_string(rows[r]) + " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(src.data() + rows[r] * inner, inner, out.data() + r * inner);
  }
  auto result = make_output<T>(std::move(out_shape), std::move(out), "take_rows", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), idx = std::vector<std::size_t>(rows.begin(), rows.end()),
               inner]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t i = 0; i < inner; ++i) gx[idx[r] * inner + i] += oi->grad[r * inner + i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  auto src = x.data();
  Buffer<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = src.data() + r * c;
    T* dst = out.data() + r * c;
    const T mx = *std::max_element(in, in + c);
    T acc = T(0);
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(in[j] - mx);
    const T lse = mx + std::log(acc);
    for (std::size_t j = 0; j < c; ++j) dst[j] = in[j] - lse;
  }
  auto result = make_output<T>(x.shape(), std::move(out), "log_softmax", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), rows, c]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* g = oi->grad.data() + r * c;
        const T* y = oi->data.data() + r * c;
        T gsum = T(0);
        for (std::size_t j = 0; j < c; ++j) gsum += g[j];
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  return exp(log_softmax(x));
}

template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const std::size_t> labels) {
  if (x.rank() != 2 || x.dim(0) != labels.size()) {
    throw ShapeError("pick: expected [" + std::to_string(labels.size()) + ", c] input, got " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  auto src = x.data();
  Buffer<T> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= c) throw ShapeError("pick: label " + std::to_string(labels[i]) + " >= " + std::to_string(c));
    out[i] = src[i * c + labels[i]];
  }
  auto result = make_output<T>(Shape{labels.size()}, std::move(out), "pick", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), lab = std::vector<std::size_t>(labels.begin(), labels.end()), c]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < lab.size(); ++i) gx[i * c + lab[i]] += oi->grad[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> sq_distances(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("sq_distances: expected [n, k] and [m, k], got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), m = b.dim(0), k = a.dim(1);
  auto xa = a.data();
  auto xb = b.data();
  Buffer<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      T acc = T(0);
      for (std::size_t d = 0; d < k; ++d) {
        const T diff = xa[i * k + d] - xb[j * k + d];
        acc += diff * diff;
      }
      out[i * m + j] = acc;
    }
  }
  auto result = make_output<T>(Shape{n, m}, std::move(out), "sq_distances", {&a, &b});
  if (result.requires_grad()) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = result.impl(), n, m, k]() {
      if (oi->grad.empty()) return;
      Buffer<T>* ga = ai->requires_grad ? &grad_of(*ai) : nullptr;
      Buffer<T>* gb = bi->requires_grad ? &grad_of(*bi) : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const T g2 = T(2) * oi->grad[i * m + j];
          if (g2 == T(0)) continue;
          for (std::size_t d = 0; d < k; ++d) {
            const T diff = ai->data[i * k + d] - bi->data[j * k + d];
            if (ga) (*ga)[i * k + d] += g2 * diff;
            if (gb) (*gb)[j * k + d] -= g2 * diff;
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x, T eps) {
  if (x.rank() != 2) throw ShapeError("l2_normalize_rows: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), k = x.dim(1);
  auto src = x.data();
  Buffer<T> out(n * k);
  Buffer<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t d = 0; d < k; ++d) acc += src[i * k + d] * src[i * k + d];
    norms[i] = std::sqrt(acc);
    const T denom = norms[i] + eps;
    for (std::size_t d = 0; d < k; ++d) out[i * k + d] = src[i * k + d] / denom;
  }
  auto result = make_output<T>(x.shape(), std::move(out), "l2_normalize_rows", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), norms = std::move(norms), n, k, eps]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < n; ++i) {
        const T s = norms[i];
        const T d = s + eps;
        const T* g = oi->grad.data() + i * k;
        const T* a = xi->data.data() + i * k;
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += g[j] * a[j];
        const T coef = s > T(0) ? dot / (s * d * d) : T(0);
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += g[j] / d - a[j] * coef;
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels) {
  return neg(mean(pick(log_softmax(logits), labels)));
}

#define TMHFS_INSTANTIATE_OPS(T)                                                                        \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> neg(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                             \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> log(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> sqrt(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> square(const BasicTensor<T>&);                                               \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> softplus(const BasicTensor<T>&);                                             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> sum(const BasicTensor<T>&, std::size_t, bool);                               \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> mean(const BasicTensor<T>&, std::size_t, bool);                              \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                       \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                            \
  template BasicTensor<T> concat(std::span<const BasicTensor<T>>, std::size_t);                        \
  template BasicTensor<T> take_rows(const BasicTensor<T>&, std::span<const std::size_t>);              \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&);                                          \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                              \
  template BasicTensor<T> pick(const BasicTensor<T>&, std::span<const std::size_t>);                   \
  template BasicTensor<T> sq_distances(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> l2_normalize_rows(const BasicTensor<T>&, T);                                 \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::size_t>);

TMHFS_INSTANTIATE_OPS(float)
TMHFS_INSTANTIATE_OPS(double)

}  // namespace tmhfs::numeric

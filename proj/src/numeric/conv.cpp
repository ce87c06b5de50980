#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include "detail.hpp"
#include "tmhfs/numeric/ops.hpp"

namespace tmhfs::numeric {

using detail::grad_of;
using detail::make_output;
using detail::record;

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Upper bound on im2col scratch (elements) per chunk of images.
constexpr std::size_t kColsBudget = std::size_t{1} << 22;

struct ConvGeom {
  std::size_t n, h, w, c, kh, kw, o, stride, pad, ho, wo;
  std::size_t patch() const { return kh * kw * c; }
  std::size_t out_pixels() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t oh = 0; oh < g.ho; ++oh) {
    for (std::size_t ow = 0; ow < g.wo; ++ow) {
      T* row = cols + (oh * g.wo + ow) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t iw =
              static_cast<std::ptrdiff_t>(ow * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + (ky * g.kw + kx) * g.c;
          if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.h) || iw >= static_cast<std::ptrdiff_t>(g.w)) {
            std::fill_n(dst, g.c, T(0));
          } else {
            std::copy_n(x + (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.c, g.c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t oh = 0; oh < g.ho; ++oh) {
    for (std::size_t ow = 0; ow < g.wo; ++ow) {
      const T* row = cols + (oh * g.wo + ow) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t iw =
              static_cast<std::ptrdiff_t>(ow * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const T* src = row + (ky * g.kw + kx) * g.c;
          T* dst = dx + (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.c;
          for (std::size_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

std::size_t images_per_chunk(const ConvGeom& g) {
  const std::size_t per_image = g.out_pixels() * g.patch();
  return std::max<std::size_t>(1, kColsBudget / std::max<std::size_t>(1, per_image));
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  Buffer<T> out(n * m);
  Map(out.data(), n, m).noalias() = CMap(a.data().data(), n, k) * CMap(b.data().data(), k, m);
  auto result = make_output<T>(Shape{n, m}, std::move(out), "matmul", {&a, &b});
  if (result.requires_grad()) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = result.impl(), n, k, m]() {
      if (oi->grad.empty()) return;
      CMap g(oi->grad.data(), n, m);
      if (ai->requires_grad) {
        Map(grad_of(*ai).data(), n, k).noalias() += g * CMap(bi->data.data(), k, m).transpose();
      }
      if (bi->requires_grad) {
        Map(grad_of(*bi).data(), k, m).noalias() += CMap(ai->data.data(), n, k).transpose() * g;
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(2) != x.dim(3) || bias.rank() != 1 ||
      bias.dim(0) != weight.dim(3)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(1), weight.dim(3), stride, padding,
             0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  const std::size_t patch = g.patch();
  const std::size_t in_image = g.h * g.w * g.c;
  const std::size_t out_image = g.out_pixels() * g.o;
  const std::size_t chunk = images_per_chunk(g);

  Buffer<T> out(g.n * out_image);
  Buffer<T> cols;
  const T* xs = x.data().data();
  CMap wm(weight.data().data(), patch, g.o);
  Eigen::Map<const RowVec<T>> bv(bias.data().data(), g.o);
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t count = std::min(chunk, g.n - n0);
    const std::size_t rows = count * g.out_pixels();
    const T* colp = xs + n0 * in_image;
    if (!g.pointwise()) {
      cols.resize(rows * patch);
      for (std::size_t i = 0; i < count; ++i) {
        im2col(xs + (n0 + i) * in_image, g, cols.data() + i * g.out_pixels() * patch);
      }
      colp = cols.data();
    }
    Map om(out.data() + n0 * out_image, rows, g.o);
    om.noalias() = CMap(colp, rows, patch) * wm;
    om.rowwise() += bv;
  }

  Shape out_shape{g.n, g.ho, g.wo, g.o};
  auto result = make_output<T>(std::move(out_shape), std::move(out), "conv2d", {&x, &weight, &bias});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = result.impl(), g, chunk]() {
      if (oi->grad.empty()) return;
      const std::size_t patch = g.patch();
      const std::size_t in_image = g.h * g.w * g.c;
      const std::size_t out_image = g.out_pixels() * g.o;
      CMap wm(wi->data.data(), patch, g.o);
      Buffer<T> cols;
      Buffer<T> dcols;
      for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
        const std::size_t count = std::min(chunk, g.n - n0);
        const std::size_t rows = count * g.out_pixels();
        CMap gm(oi->grad.data() + n0 * out_image, rows, g.o);
        if (bi->requires_grad) {
          Eigen::Map<RowVec<T>>(grad_of(*bi).data(), g.o).noalias() += gm.colwise().sum();
        }
        if (wi->requires_grad) {
          const T* colp = xi->data.data() + n0 * in_image;
          if (!g.pointwise()) {
            cols.resize(rows * patch);
            for (std::size_t i = 0; i < count; ++i) {
              im2col(xi->data.data() + (n0 + i) * in_image, g, cols.data() + i * g.out_pixels() * patch);
            }
            colp = cols.data();
          }
          Map(grad_of(*wi).data(), patch, g.o).noalias() += CMap(colp, rows, patch).transpose() * gm;
        }
        if (xi->requires_grad) {
          auto& gx = grad_of(*xi);
          if (g.pointwise()) {
            Map(gx.data() + n0 * in_image, rows, patch).noalias() += gm * wm.transpose();
          } else {
            dcols.resize(rows * patch);
            Map(dcols.data(), rows, patch).noalias() = gm * wm.transpose();
            for (std::size_t i = 0; i < count; ++i) {
              col2im_add(dcols.data() + i * g.out_pixels() * patch, g, gx.data() + (n0 + i) * in_image);
            }
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 4) throw ShapeError("max_pool2d: expected NHWC input, got " + shape_str(x.shape()));
  if (window == 0 || stride == 0) throw ShapeError("max_pool2d: window and stride must be positive");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h < window || w < window) {
    throw ShapeError("max_pool2d: window " + std::to_string(window) + " larger than input " + shape_str(x.shape()));
  }
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  auto src = x.data();
  Buffer<T> out(n * ho * wo * c);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const std::size_t o = ((b * ho + oh) * wo + ow) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = 0;
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t i = ((b * h + oh * stride + ky) * w + ow * stride + kx) * c + ch;
              if (src[i] > best) {
                best = src[i];
                best_i = i;
              }
            }
          }
          out[o + ch] = best;
          argmax[o + ch] = best_i;
        }
      }
    }
  }
  auto result = make_output<T>(Shape{n, ho, wo, c}, std::move(out), "max_pool2d", {&x});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), oi = result.impl(), argmax = std::move(argmax)]() {
      if (oi->grad.empty() || !xi->requires_grad) return;
      auto& gx = grad_of(*xi);
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += oi->grad[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool use_batch_stats,
                          T momentum, T eps) {
  const std::size_t c = x.shape().back();
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw ShapeError("batch_norm: channel parameter " + shape_str(t->shape()) + " does not match input " +
                       shape_str(x.shape()));
    }
  }
  const std::size_t m = x.numel() / c;
  auto src = x.data();
  Buffer<T> mu(c, T(0)), inv(c, T(0));
  if (use_batch_stats) {
    Buffer<T> var(c, T(0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) mu[ch] += src[i * c + ch];
    for (auto& v : mu) v /= static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T d = src[i * c + ch] - mu[ch];
        var[ch] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<T>(m);
    auto rm = running_mean.data();
    auto rv = running_var.data();
    const T unbias = m > 1 ? static_cast<T>(m) / static_cast<T>(m - 1) : T(1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      inv[ch] = T(1) / std::sqrt(var[ch] + eps);
      rm[ch] = momentum * rm[ch] + (T(1) - momentum) * mu[ch];
      rv[ch] = momentum * rv[ch] + (T(1) - momentum) * var[ch] * unbias;
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = rm[ch];
      inv[ch] = T(1) / std::sqrt(rv[ch] + eps);
    }
  }
  auto gm = gamma.data();
  auto bt = beta.data();
  Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[i * c + ch] = gm[ch] * (src[i * c + ch] - mu[ch]) * inv[ch] + bt[ch];
    }
  }
  auto result = make_output<T>(x.shape(), std::move(out), "batch_norm", {&x, &gamma, &beta});
  if (result.requires_grad()) {
    record<T>([xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = result.impl(), mu = std::move(mu),
               inv = std::move(inv), m, c, use_batch_stats]() {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const auto& xs = xi->data;
      Buffer<T> sum_g(c, T(0)), sum_gx(c, T(0));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T xhat = (xs[i * c + ch] - mu[ch]) * inv[ch];
          sum_g[ch] += g[i * c + ch];
          sum_gx[ch] += g[i * c + ch] * xhat;
        }
      }
      if (bi->requires_grad) {
        auto& gb = grad_of(*bi);
        for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
      }
      if (gi->requires_grad) {
        auto& gg = grad_of(*gi);
        for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
      }
      if (xi->requires_grad) {
        auto& gx = grad_of(*xi);
        const auto& gamma = gi->data;
        if (use_batch_stats) {
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T xhat = (xs[i * c + ch] - mu[ch]) * inv[ch];
              gx[i * c + ch] += gamma[ch] * inv[ch] * inv_m *
                                (static_cast<T>(m) * g[i * c + ch] - sum_g[ch] - xhat * sum_gx[ch]);
            }
          }
        } else {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) gx[i * c + ch] += g[i * c + ch] * gamma[ch] * inv[ch];
        }
      }
    });
  }
  return result;
}

#define TMHFS_INSTANTIATE_CONV(T)                                                                            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                 std::size_t, std::size_t);                                                  \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, std::size_t, std::size_t);                      \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                     BasicTensor<T>&, BasicTensor<T>&, bool, T, T);

TMHFS_INSTANTIATE_CONV(float)
TMHFS_INSTANTIATE_CONV(double)

}  // namespace tmhfs::numeric

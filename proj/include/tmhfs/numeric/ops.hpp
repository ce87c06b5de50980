#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tmhfs/numeric/tensor.hpp"

// Differentiable tensor ops. Every op records a backward closure on the
// thread's tape when grad mode is on and any input requires grad.
// Image tensors are NHWC: [batch, height, width, channels].

namespace tmhfs::numeric {

// Elementwise binary ops with numpy-style broadcasting.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T> BasicTensor<T> neg(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value);
template <typename T> BasicTensor<T> exp(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sqrt(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> square(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
/// log(1 + e^x), evaluated without overflow.
template <typename T> BasicTensor<T> softplus(const BasicTensor<T>& x);

/// Sum of all elements, shape [1].
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
/// Sum along one axis; the axis is dropped unless keepdim.
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x, std::size_t axis, bool keepdim = false);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis, bool keepdim = false);

template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
/// 2-D transpose.
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, std::size_t axis);
/// Gathers slices along axis 0.
template <typename T> BasicTensor<T> take_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows);

/// [n, k] x [k, m] -> [n, m].
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Max-subtracted log-softmax along the last axis.
template <typename T> BasicTensor<T> log_softmax(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x);
/// out[i] = x[i, labels[i]] for a [n, c] input.
template <typename T> BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const std::size_t> labels);

/// Squared Euclidean distances between rows: [n, k], [m, k] -> [n, m].
template <typename T> BasicTensor<T> sq_distances(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Each row divided by (its L2 norm + eps).
template <typename T> BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x, T eps);

/// x [N,H,W,C], weight [KH,KW,C,O], bias [O] -> [N,Ho,Wo,O].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride = 1, std::size_t padding = 0);

/// Non-overlapping-by-default max pooling with floor output size.
template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& x, std::size_t window = 2, std::size_t stride = 2);

/// Per-channel normalization over every axis but the last. With
/// use_batch_stats the batch mean/variance are used and the running buffers
/// are updated as running = momentum * running + (1 - momentum) * batch;
/// otherwise the running buffers are used and left untouched.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool use_batch_stats,
                          T momentum = T(0.9), T eps = T(1e-5));

// Convenience: cross entropy of [n, c] logits against integer labels (mean).
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels);

}  // namespace tmhfs::numeric

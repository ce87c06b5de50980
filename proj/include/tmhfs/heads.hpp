#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tmhfs/backbone.hpp"
#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs {

/// Added to every norm before dividing, so zero vectors normalize to zero.
inline constexpr double kNormEps = 1e-8;
/// Floor added to the confidence scale.
inline constexpr double kSigmaFloor = 1e-3;

/// Input-dependent length scale sigma(z) = softplus(mlp(z)) + 1e-3, with the
/// MLP K -> max(1, K/4) -> 1 and a relu between the layers.
template <typename T>
class ConfidenceNet {
 public:
  ConfidenceNet() = default;
  ConfidenceNet(std::size_t k, std::uint64_t seed);
  /// All weights and biases zero: sigma is softplus(0) + 1e-3 everywhere.
  static ConfidenceNet zeros(std::size_t k);

  std::size_t dim() const { return w1_.dim(0); }
  /// z: [n, K] -> [n, 1].
  BasicTensor<T> sigma(const BasicTensor<T>& z) const;

  std::vector<BasicTensor<T>> parameters() const { return {w1_, b1_, w2_, b2_}; }
  std::vector<NamedTensor<T>> state() const;
  void load_state(const std::vector<NamedTensor<T>>& state);
  ConfidenceNet clone() const;
  template <typename U>
  ConfidenceNet<U> cast() const;

 private:
  template <typename>
  friend class ConfidenceNet;
  BasicTensor<T> w1_, b1_, w2_, b2_;
};

/// Squared Euclidean distance between row-wise L2-normalized a [n, K] and
/// b [m, K]; result [n, m] with entries in [0, 4].
template <typename T>
BasicTensor<T> normalized_sq_distances(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Class logits -d_phi(z, P_c) for z [n, K], protos [C, K] and a
/// per-row scale sigma [n, 1].
template <typename T>
BasicTensor<T> mct_logits(const BasicTensor<T>& z, const BasicTensor<T>& protos, const BasicTensor<T>& sigma);

template <typename T>
BasicTensor<T> mct_log_posterior(const BasicTensor<T>& z, const BasicTensor<T>& protos, const ConfidenceNet<T>& phi);

/// Rows are distributions over the C prototypes.
template <typename T>
BasicTensor<T> mct_posterior(const BasicTensor<T>& z, const BasicTensor<T>& protos, const ConfidenceNet<T>& phi);

/// Single-vector forms on plain arrays (no tape).
template <typename T>
T confidence_scale(std::span<const T> z, const ConfidenceNet<T>& phi);
template <typename T>
T scaled_distance(std::span<const T> z, std::span<const T> p, const ConfidenceNet<T>& phi);

/// One trainable prototype row per source class.
template <typename T>
class GlobalPrototypes {
 public:
  GlobalPrototypes() = default;
  GlobalPrototypes(std::size_t classes, std::size_t k, std::uint64_t seed);
  explicit GlobalPrototypes(BasicTensor<T> w);

  std::size_t classes() const { return w_.dim(0); }
  const BasicTensor<T>& weight() const { return w_; }

  std::vector<BasicTensor<T>> parameters() const { return {w_}; }
  std::vector<NamedTensor<T>> state() const { return {{"w", w_}}; }
  void load_state(const std::vector<NamedTensor<T>>& state);
  GlobalPrototypes clone() const { return GlobalPrototypes(w_.clone()); }
  template <typename U>
  GlobalPrototypes<U> cast() const {
    return GlobalPrototypes<U>(w_.template cast<U>());
  }

 private:
  BasicTensor<T> w_;
};

/// Per-pixel log posterior over global classes using plain squared Euclidean
/// distance: pixels [P, K] -> [P, C_g].
template <typename T>
BasicTensor<T> dfmn_log_posterior(const BasicTensor<T>& pixels, const GlobalPrototypes<T>& omega);
template <typename T>
BasicTensor<T> dfmn_posterior(const BasicTensor<T>& pixels, const GlobalPrototypes<T>& omega);

/// Linear softmax classifier z -> softmax(z W + b), W [K, C], b [C].
template <typename T>
class SemanticHead {
 public:
  SemanticHead() = default;
  SemanticHead(std::size_t k, std::size_t classes, std::uint64_t seed);
  SemanticHead(BasicTensor<T> weight, BasicTensor<T> bias);

  std::size_t classes() const { return weight_.dim(1); }
  const BasicTensor<T>& weight() const { return weight_; }
  const BasicTensor<T>& bias() const { return bias_; }

  BasicTensor<T> logits(const BasicTensor<T>& z) const;
  BasicTensor<T> posterior(const BasicTensor<T>& z) const;

  std::vector<BasicTensor<T>> parameters() const { return {weight_, bias_}; }
  std::vector<NamedTensor<T>> state() const { return {{"weight", weight_}, {"bias", bias_}}; }
  void load_state(const std::vector<NamedTensor<T>>& state);
  SemanticHead clone() const { return SemanticHead(weight_.clone(), bias_.clone()); }
  template <typename U>
  SemanticHead<U> cast() const {
    return SemanticHead<U>(weight_.template cast<U>(), bias_.template cast<U>());
  }

 private:
  BasicTensor<T> weight_, bias_;
};

template <typename T>
template <typename U>
ConfidenceNet<U> ConfidenceNet<T>::cast() const {
  ConfidenceNet<U> out;
  out.w1_ = w1_.template cast<U>();
  out.b1_ = b1_.template cast<U>();
  out.w2_ = w2_.template cast<U>();
  out.b2_ = b2_.template cast<U>();
  return out;
}

}  // namespace tmhfs

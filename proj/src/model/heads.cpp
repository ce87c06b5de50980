#include "tmhfs/heads.hpp"

#include <stdexcept>
#include <string>

#include "init.hpp"
#include "tmhfs/numeric/ops.hpp"

namespace tmhfs {

namespace nm = numeric;
using detail::filled;
using detail::xavier;

template <typename T>
ConfidenceNet<T>::ConfidenceNet(std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("confidence net needs K >= 1");
  Rng rng(seed);
  const std::size_t hidden = std::max<std::size_t>(1, k / 4);
  w1_ = xavier<T>({k, hidden}, k, hidden, rng);
  b1_ = filled<T>({hidden}, T(0), true);
  w2_ = xavier<T>({hidden, 1}, hidden, 1, rng);
  b2_ = filled<T>({1}, T(0), true);
}

template <typename T>
ConfidenceNet<T> ConfidenceNet<T>::zeros(std::size_t k) {
  ConfidenceNet out(k, 0);
  for (auto& p : out.parameters()) {
    auto d = p.data();
    std::fill(d.begin(), d.end(), T(0));
  }
  return out;
}

template <typename T>
BasicTensor<T> ConfidenceNet<T>::sigma(const BasicTensor<T>& z) const {
  auto h = nm::relu(nm::add(nm::matmul(z, w1_), b1_));
  auto out = nm::add(nm::matmul(h, w2_), b2_);
  return nm::add_scalar(nm::softplus(out), static_cast<T>(kSigmaFloor));
}

template <typename T>
std::vector<NamedTensor<T>> ConfidenceNet<T>::state() const {
  return {{"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}};
}

template <typename T>
void ConfidenceNet<T>::load_state(const std::vector<NamedTensor<T>>& state) {
  copy_state(state, this->state(), "confidence state");
}

template <typename T>
ConfidenceNet<T> ConfidenceNet<T>::clone() const {
  ConfidenceNet out;
  out.w1_ = w1_.clone();
  out.b1_ = b1_.clone();
  out.w2_ = w2_.clone();
  out.b2_ = b2_.clone();
  return out;
}

template <typename T>
BasicTensor<T> normalized_sq_distances(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const T eps = static_cast<T>(kNormEps);
  return nm::sq_distances(nm::l2_normalize_rows(a, eps), nm::l2_normalize_rows(b, eps));
}

template <typename T>
BasicTensor<T> mct_logits(const BasicTensor<T>& z, const BasicTensor<T>& protos, const BasicTensor<T>& sigma) {
  return nm::neg(nm::div(normalized_sq_distances(z, protos), sigma));
}

template <typename T>
BasicTensor<T> mct_log_posterior(const BasicTensor<T>& z, const BasicTensor<T>& protos, const ConfidenceNet<T>& phi) {
  return nm::log_softmax(mct_logits(z, protos, phi.sigma(z)));
}

template <typename T>
BasicTensor<T> mct_posterior(const BasicTensor<T>& z, const BasicTensor<T>& protos, const ConfidenceNet<T>& phi) {
  return nm::softmax(mct_logits(z, protos, phi.sigma(z)));
}

namespace {

template <typename T>
BasicTensor<T> row(std::span<const T> v) {
  return BasicTensor<T>({1, v.size()}, std::vector<T>(v.begin(), v.end()));
}

}  // namespace

template <typename T>
T confidence_scale(std::span<const T> z, const ConfidenceNet<T>& phi) {
  nm::NoGradGuard guard;
  return phi.sigma(row(z)).item();
}

template <typename T>
T scaled_distance(std::span<const T> z, std::span<const T> p, const ConfidenceNet<T>& phi) {
  if (z.size() != p.size()) {
    throw nm::ShapeError("scaled_distance: length " + std::to_string(z.size()) + " vs " + std::to_string(p.size()));
  }
  nm::NoGradGuard guard;
  const auto zt = row(z);
  return nm::div(normalized_sq_distances(zt, row(p)), phi.sigma(zt)).item();
}

template <typename T>
GlobalPrototypes<T>::GlobalPrototypes(std::size_t classes, std::size_t k, std::uint64_t seed) {
  if (classes == 0 || k == 0) throw std::invalid_argument("global prototypes need classes >= 1 and K >= 1");
  Rng rng(seed);
  w_ = xavier<T>({classes, k}, k, classes, rng);
}

template <typename T>
GlobalPrototypes<T>::GlobalPrototypes(BasicTensor<T> w) : w_(std::move(w)) {
  if (w_.rank() != 2) throw nm::ShapeError("global prototypes must be [C_g, K], got " + nm::shape_str(w_.shape()));
  w_.set_requires_grad(true);
}

template <typename T>
void GlobalPrototypes<T>::load_state(const std::vector<NamedTensor<T>>& state) {
  copy_state(state, this->state(), "global prototype state");
}

template <typename T>
BasicTensor<T> dfmn_log_posterior(const BasicTensor<T>& pixels, const GlobalPrototypes<T>& omega) {
  return nm::log_softmax(nm::neg(nm::sq_distances(pixels, omega.weight())));
}

template <typename T>
BasicTensor<T> dfmn_posterior(const BasicTensor<T>& pixels, const GlobalPrototypes<T>& omega) {
  return nm::softmax(nm::neg(nm::sq_distances(pixels, omega.weight())));
}

template <typename T>
SemanticHead<T>::SemanticHead(std::size_t k, std::size_t classes, std::uint64_t seed) {
  if (classes == 0 || k == 0) throw std::invalid_argument("semantic head needs classes >= 1 and K >= 1");
  Rng rng(seed);
  weight_ = xavier<T>({k, classes}, k, classes, rng);
  bias_ = filled<T>({classes}, T(0), true);
}

template <typename T>
SemanticHead<T>::SemanticHead(BasicTensor<T> weight, BasicTensor<T> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(1)) {
    throw nm::ShapeError("semantic head weight " + nm::shape_str(weight_.shape()) + " and bias " +
                         nm::shape_str(bias_.shape()) + " disagree");
  }
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

template <typename T>
BasicTensor<T> SemanticHead<T>::logits(const BasicTensor<T>& z) const {
  return nm::add(nm::matmul(z, weight_), bias_);
}

template <typename T>
BasicTensor<T> SemanticHead<T>::posterior(const BasicTensor<T>& z) const {
  return nm::softmax(logits(z));
}

template <typename T>
void SemanticHead<T>::load_state(const std::vector<NamedTensor<T>>& state) {
  copy_state(state, this->state(), "semantic head state");
}

#define TMHFS_INSTANTIATE_HEADS(T)                                                                          \
  template class ConfidenceNet<T>;                                                                         \
  template class GlobalPrototypes<T>;                                                                      \
  template class SemanticHead<T>;                                                                          \
  template BasicTensor<T> normalized_sq_distances(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> mct_logits(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> mct_log_posterior(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                            const ConfidenceNet<T>&);                                      \
  template BasicTensor<T> mct_posterior(const BasicTensor<T>&, const BasicTensor<T>&, const ConfidenceNet<T>&); \
  template T confidence_scale(std::span<const T>, const ConfidenceNet<T>&);                                \
  template T scaled_distance(std::span<const T>, std::span<const T>, const ConfidenceNet<T>&);             \
  template BasicTensor<T> dfmn_log_posterior(const BasicTensor<T>&, const GlobalPrototypes<T>&);           \
  template BasicTensor<T> dfmn_posterior(const BasicTensor<T>&, const GlobalPrototypes<T>&);

TMHFS_INSTANTIATE_HEADS(float)
TMHFS_INSTANTIATE_HEADS(double)

}  // namespace tmhfs

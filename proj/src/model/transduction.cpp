#include "tmhfs/transduction.hpp"

#include <stdexcept>
#include <string>
#include <vector>

#include "tmhfs/numeric/ops.hpp"

namespace tmhfs {

namespace nm = numeric;

namespace {

struct Membership {
  std::vector<double> onehot_t;  // [C, nS]
  std::vector<double> counts;    // [C]
};

Membership membership(std::span<const std::size_t> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw nm::ShapeError("transduction: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " support rows");
  }
  Membership m{std::vector<double>(classes * rows, 0.0), std::vector<double>(classes, 0.0)};
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] >= classes) {
      throw std::invalid_argument("transduction: support label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    m.onehot_t[labels[i] * rows + i] = 1.0;
    m.counts[labels[i]] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (m.counts[c] == 0.0) {
      throw std::invalid_argument("transduction: class " + std::to_string(c) + " has no support embedding");
    }
  }
  return m;
}

template <typename T>
BasicTensor<T> as_tensor(const std::vector<double>& v, nm::Shape shape) {
  return BasicTensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

void check_support(const nm::Shape& s, std::size_t classes) {
  if (s.size() != 2) throw nm::ShapeError("transduction: support must be [nS, K], got " + nm::shape_str(s));
  if (classes == 0) throw std::invalid_argument("transduction: classes must be >= 1");
}

}  // namespace

template <typename T>
Prototypes<T> init_prototypes(const BasicTensor<T>& support, std::span<const std::size_t> labels,
                              std::size_t classes) {
  check_support(support.shape(), classes);
  const auto m = membership(labels, support.dim(0), classes);
  auto sums = nm::matmul(as_tensor<T>(m.onehot_t, {classes, support.dim(0)}), support);
  return {nm::div(sums, as_tensor<T>(m.counts, {classes, 1})), 0};
}

template <typename T>
BasicTensor<T> soft_assign(const BasicTensor<T>& query, const Prototypes<T>& protos, const ConfidenceNet<T>& phi) {
  return mct_posterior(query, protos.matrix, phi);
}

template <typename T>
Prototypes<T> update_prototypes(const Prototypes<T>& protos, const BasicTensor<T>& support,
                                std::span<const std::size_t> labels, const BasicTensor<T>& query,
                                const BasicTensor<T>& q) {
  const std::size_t classes = protos.matrix.dim(0);
  check_support(support.shape(), classes);
  if (q.rank() != 2 || q.dim(1) != classes || query.rank() != 2 || q.dim(0) != query.dim(0)) {
    throw nm::ShapeError("update_prototypes: weights " + nm::shape_str(q.shape()) + " do not match query " +
                         nm::shape_str(query.shape()) + " and " + std::to_string(classes) + " classes");
  }
  const auto m = membership(labels, support.dim(0), classes);
  auto support_sums = nm::matmul(as_tensor<T>(m.onehot_t, {classes, support.dim(0)}), support);
  auto numer = nm::add(support_sums, nm::matmul(nm::transpose(q), query));
  auto denom = nm::add(as_tensor<T>(m.counts, {classes, 1}), nm::reshape(nm::sum(q, 0), {classes, 1}));
  return {nm::div(numer, denom), protos.iteration + 1};
}

template <typename T>
TransductionResult<T> transduce(const BasicTensor<T>& support, std::span<const std::size_t> labels,
                                const BasicTensor<T>& query, std::size_t classes, const ConfidenceNet<T>& phi,
                                std::size_t rounds) {
  TransductionResult<T> out{init_prototypes(support, labels, classes), {}, {}};
  if (!query.defined()) return out;
  for (std::size_t t = 0; t < rounds; ++t) {
    auto q = soft_assign(query, out.prototypes, phi);
    out.prototypes = update_prototypes(out.prototypes, support, labels, query, q);
  }
  out.log_posteriors = mct_log_posterior(query, out.prototypes.matrix, phi);
  out.posteriors = soft_assign(query, out.prototypes, phi);
  return out;
}

#define TMHFS_INSTANTIATE_TRANSDUCTION(T)                                                                    \
  template Prototypes<T> init_prototypes(const BasicTensor<T>&, std::span<const std::size_t>, std::size_t); \
  template BasicTensor<T> soft_assign(const BasicTensor<T>&, const Prototypes<T>&, const ConfidenceNet<T>&); \
  template Prototypes<T> update_prototypes(const Prototypes<T>&, const BasicTensor<T>&,                    \
                                           std::span<const std::size_t>, const BasicTensor<T>&,            \
                                           const BasicTensor<T>&);                                          \
  template TransductionResult<T> transduce(const BasicTensor<T>&, std::span<const std::size_t>,            \
                                           const BasicTensor<T>&, std::size_t, const ConfidenceNet<T>&,    \
                                           std::size_t);

TMHFS_INSTANTIATE_TRANSDUCTION(float)
TMHFS_INSTANTIATE_TRANSDUCTION(double)

}  // namespace tmhfs

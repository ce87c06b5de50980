#pragma once

#include <cstddef>
#include <span>

#include "tmhfs/heads.hpp"
#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs {

template <typename T>
struct Prototypes {
  BasicTensor<T> matrix;  ///< [C, K]
  std::size_t iteration = 0;
};

struct TransductionConfig {
  std::size_t t_train = 1;
  std::size_t t_test = 10;
};

/// Support means per class. support: [nS, K]; labels in [0, C). Throws
/// std::invalid_argument when some class has no support row.
template <typename T>
Prototypes<T> init_prototypes(const BasicTensor<T>& support, std::span<const std::size_t> labels, std::size_t classes);

/// Soft assignment of each query row to the current prototypes. Same
/// computation as mct_posterior.
template <typename T>
BasicTensor<T> soft_assign(const BasicTensor<T>& query, const Prototypes<T>& protos, const ConfidenceNet<T>& phi);

/// Confidence-weighted refinement: support rows count with weight 1 for
/// their own class, query rows with weight q[:, c].
template <typename T>
Prototypes<T> update_prototypes(const Prototypes<T>& protos, const BasicTensor<T>& support,
                                std::span<const std::size_t> labels, const BasicTensor<T>& query,
                                const BasicTensor<T>& q);

template <typename T>
struct TransductionResult {
  Prototypes<T> prototypes;
  BasicTensor<T> log_posteriors;  ///< [M_total, C]; undefined when query is
  BasicTensor<T> posteriors;      ///< undefined (no query rows)
};

/// init, then `rounds` soft_assign + update steps, then one more
/// assignment at the final prototypes. `query` may be an undefined tensor,
/// meaning an empty query set.
template <typename T>
TransductionResult<T> transduce(const BasicTensor<T>& support, std::span<const std::size_t> labels,
                                const BasicTensor<T>& query, std::size_t classes, const ConfidenceNet<T>& phi,
                                std::size_t rounds);

}  // namespace tmhfs

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs {

using numeric::BasicTensor;

enum class Arch { conv4, resnet12 };

std::string to_string(Arch arch);
Arch parse_arch(std::string_view name);

/// Shape of the shared embedding network f_theta.
///
/// `pooled_blocks` is the number of leading blocks that end in a 2x2 max
/// pool (floor division); the remaining blocks keep the spatial size. The
/// default of 4 gives the usual 84 -> 42 -> 21 -> 10 -> 5 reduction.
struct BackboneConfig {
  Arch arch = Arch::conv4;
  std::size_t channels = 64;
  std::size_t input_hw = 84;
  std::size_t pooled_blocks = 4;

  void validate() const;
  /// Side of the dense feature grid.
  std::size_t feature_hw() const;
  /// Output channels of each of the four blocks; the last equals `channels`.
  std::vector<std::size_t> block_widths() const;

  bool operator==(const BackboneConfig&) const = default;
};

/// Which statistics the normalization layers use.
enum class NormMode {
  batch,    ///< per-batch statistics; running averages are updated
  running,  ///< frozen running averages
};

/// Backbone output for a batch: dense is [N, H, W, K], pooled is [N, K] and
/// equals the spatial mean of dense.
template <typename T>
struct FeatureMap {
  BasicTensor<T> dense;
  BasicTensor<T> pooled;
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

/// Copies values from `source` into the same-named tensors of `target`.
/// Every target name must be present with an identical shape.
template <typename T>
void copy_state(const std::vector<NamedTensor<T>>& source, const std::vector<NamedTensor<T>>& target,
                std::string_view context);

template <typename T>
class Backbone {
 public:
  Backbone() = default;
  /// Xavier-uniform weights (bounds +-sqrt(6 / (fan_in + fan_out))), zero
  /// biases, unit scale / zero shift for normalization.
  Backbone(const BackboneConfig& config, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }

  /// images: [N, input_hw, input_hw, 3].
  FeatureMap<T> forward(const BasicTensor<T>& images, NormMode mode);

  /// Trainable tensors (shared handles).
  std::vector<BasicTensor<T>> parameters() const;
  /// Trainable tensors plus normalization running statistics, in a fixed
  /// order with stable names.
  std::vector<NamedTensor<T>> state() const;
  void load_state(const std::vector<NamedTensor<T>>& state);

  Backbone clone() const;

  template <typename U>
  Backbone<U> cast() const {
    Backbone<U> out(config_, 0);
    std::vector<NamedTensor<U>> converted;
    for (const auto& nt : state()) converted.push_back({nt.name, nt.tensor.template cast<U>()});
    out.load_state(converted);
    return out;
  }

 private:
  struct Layer {
    BasicTensor<T> weight, bias;
    BasicTensor<T> gamma, beta, running_mean, running_var;
  };
  struct Block {
    std::vector<Layer> layers;
    std::vector<Layer> shortcut;  // empty or one 1x1 projection
    bool pool = false;
  };

  BasicTensor<T> apply(Layer& layer, const BasicTensor<T>& x, std::size_t padding, NormMode mode);

  BackboneConfig config_;
  std::vector<Block> blocks_;
};

}  // namespace tmhfs

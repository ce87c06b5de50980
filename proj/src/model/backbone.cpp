#include "tmhfs/backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "tmhfs/numeric/ops.hpp"
#include "tmhfs/random.hpp"
#include "init.hpp"

namespace tmhfs {

namespace nm = numeric;

std::string to_string(Arch arch) { return arch == Arch::conv4 ? "conv4" : "resnet12"; }

Arch parse_arch(std::string_view name) {
  if (name == "conv4") return Arch::conv4;
  if (name == "resnet12") return Arch::resnet12;
  throw std::invalid_argument("unknown backbone arch '" + std::string(name) + "' (expected conv4 or resnet12)");
}

void BackboneConfig::validate() const {
  if (channels == 0) throw std::invalid_argument("backbone channels must be >= 1");
  if (pooled_blocks > 4) throw std::invalid_argument("backbone pooled_blocks must be <= 4");
  if (input_hw == 0 || (input_hw >> pooled_blocks) == 0) {
    throw std::invalid_argument("backbone input_hw " + std::to_string(input_hw) + " too small for " +
                                std::to_string(pooled_blocks) + " pooling stages");
  }
}

std::size_t BackboneConfig::feature_hw() const {
  std::size_t hw = input_hw;
  for (std::size_t i = 0; i < pooled_blocks; ++i) hw /= 2;
  return hw;
}

std::vector<std::size_t> BackboneConfig::block_widths() const {
  if (arch == Arch::conv4) return {channels, channels, channels, channels};
  // ResNet-12 proportions (64-160-320-640 at K = 640).
  auto frac = [this](std::size_t num, std::size_t den) {
    return std::max<std::size_t>(1, (channels * num + den - 1) / den);
  };
  return {frac(1, 10), frac(1, 4), frac(1, 2), channels};
}

template <typename T>
void copy_state(const std::vector<NamedTensor<T>>& source, const std::vector<NamedTensor<T>>& target,
                std::string_view context) {
  for (const auto& dst : target) {
    const NamedTensor<T>* match = nullptr;
    for (const auto& src : source) {
      if (src.name == dst.name) {
        match = &src;
        break;
      }
    }
    if (!match) throw std::invalid_argument(std::string(context) + ": missing tensor '" + dst.name + "'");
    if (match->tensor.shape() != dst.tensor.shape()) {
      throw std::invalid_argument(std::string(context) + ": tensor '" + dst.name + "' has shape " +
                                  nm::shape_str(match->tensor.shape()) + ", expected " +
                                  nm::shape_str(dst.tensor.shape()));
    }
    BasicTensor<T> handle = dst.tensor;
    auto out = handle.data();
    auto in = match->tensor.data();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

using detail::filled;
using detail::xavier;

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  auto make_layer = [&rng](std::size_t kernel, std::size_t in, std::size_t out) {
    Layer l;
    l.weight = xavier<T>({kernel, kernel, in, out}, kernel * kernel * in, kernel * kernel * out, rng);
    l.bias = filled<T>({out}, T(0), true);
    l.gamma = filled<T>({out}, T(1), true);
    l.beta = filled<T>({out}, T(0), true);
    l.running_mean = filled<T>({out}, T(0), false);
    l.running_var = filled<T>({out}, T(1), false);
    return l;
  };
  const auto widths = config_.block_widths();
  std::size_t in = 3;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    Block block;
    block.pool = b < config_.pooled_blocks;
    const std::size_t depth = config_.arch == Arch::conv4 ? 1 : 3;
    for (std::size_t j = 0; j < depth; ++j) block.layers.push_back(make_layer(3, j == 0 ? in : widths[b], widths[b]));
    if (config_.arch == Arch::resnet12) block.shortcut.push_back(make_layer(1, in, widths[b]));
    blocks_.push_back(std::move(block));
    in = widths[b];
  }
}

template <typename T>
BasicTensor<T> Backbone<T>::apply(Layer& layer, const BasicTensor<T>& x, std::size_t padding, NormMode mode) {
  auto h = nm::conv2d(x, layer.weight, layer.bias, 1, padding);
  return nm::batch_norm(h, layer.gamma, layer.beta, layer.running_mean, layer.running_var, mode == NormMode::batch);
}

template <typename T>
FeatureMap<T> Backbone<T>::forward(const BasicTensor<T>& images, NormMode mode) {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != config_.input_hw || s[2] != config_.input_hw || s[3] != 3) {
    throw nm::ShapeError("backbone expects images [N, " + std::to_string(config_.input_hw) + ", " +
                         std::to_string(config_.input_hw) + ", 3], got " + nm::shape_str(s));
  }
  BasicTensor<T> h = images;
  for (auto& block : blocks_) {
    BasicTensor<T> x = h;
    for (std::size_t j = 0; j < block.layers.size(); ++j) {
      h = apply(block.layers[j], h, 1, mode);
      const bool last = j + 1 == block.layers.size();
      if (!last || block.shortcut.empty()) h = nm::relu(h);
    }
    if (!block.shortcut.empty()) h = nm::relu(nm::add(h, apply(block.shortcut[0], x, 0, mode)));
    if (block.pool) h = nm::max_pool2d(h, 2, 2);
  }
  const std::size_t n = h.dim(0), hw = h.dim(1) * h.dim(2), k = h.dim(3);
  auto pooled = nm::mean(nm::reshape(h, {n, hw, k}), 1);
  return {h, pooled};
}

template <typename T>
std::vector<BasicTensor<T>> Backbone<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  auto add = [&out](const Layer& l) {
    for (const auto* t : {&l.weight, &l.bias, &l.gamma, &l.beta}) out.push_back(*t);
  };
  for (const auto& block : blocks_) {
    for (const auto& l : block.layers) add(l);
    for (const auto& l : block.shortcut) add(l);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Backbone<T>::state() const {
  std::vector<NamedTensor<T>> out;
  auto add = [&out](const std::string& prefix, const Layer& l) {
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
    out.push_back({prefix + ".gamma", l.gamma});
    out.push_back({prefix + ".beta", l.beta});
    out.push_back({prefix + ".running_mean", l.running_mean});
    out.push_back({prefix + ".running_var", l.running_var});
  };
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string block = "block" + std::to_string(b);
    for (std::size_t j = 0; j < blocks_[b].layers.size(); ++j) {
      add(block + ".layer" + std::to_string(j), blocks_[b].layers[j]);
    }
    for (const auto& l : blocks_[b].shortcut) add(block + ".shortcut", l);
  }
  return out;
}

template <typename T>
void Backbone<T>::load_state(const std::vector<NamedTensor<T>>& source) {
  copy_state(source, state(), "backbone state");
}

template <typename T>
Backbone<T> Backbone<T>::clone() const {
  Backbone out(config_, 0);
  out.load_state(state());
  return out;
}

template class Backbone<float>;
template class Backbone<double>;
template void copy_state(const std::vector<NamedTensor<float>>&, const std::vector<NamedTensor<float>>&,
                         std::string_view);
template void copy_state(const std::vector<NamedTensor<double>>&, const std::vector<NamedTensor<double>>&,
                         std::string_view);

}  // namespace tmhfs

#include <cmath>

#include "doctest.h"
#include "tmhfs/backbone.hpp"
#include "tmhfs/numeric/grad_check.hpp"
#include "tmhfs/numeric/ops.hpp"
#include "tmhfs/random.hpp"

namespace nm = tmhfs::numeric;
using tmhfs::Arch;
using tmhfs::Backbone;
using tmhfs::BackboneConfig;
using tmhfs::NormMode;

namespace {

template <typename T>
nm::BasicTensor<T> random_images(std::size_t n, std::size_t hw, std::uint64_t seed) {
  tmhfs::Rng rng(seed);
  nm::BasicTensor<T> x({n, hw, hw, 3});
  for (auto& v : x.data()) v = static_cast<T>(rng.uniform());
  return x;
}

}  // namespace

TEST_CASE("conv4 at 84 gives a 5x5 grid") {
  BackboneConfig cfg;
  CHECK(cfg.feature_hw() == 5);
  Backbone<float> net(cfg, 1);
  auto f = net.forward(random_images<float>(2, 84, 3), NormMode::batch);
  CHECK(f.dense.shape() == nm::Shape{2, 5, 5, 64});
  CHECK(f.pooled.shape() == nm::Shape{2, 64});
}

TEST_CASE("pooled is the spatial mean of dense") {
  for (auto arch : {Arch::conv4, Arch::resnet12}) {
    BackboneConfig cfg{arch, 20, 32, 3};
    Backbone<float> net(cfg, 5);
    auto f = net.forward(random_images<float>(3, 32, 8), NormMode::batch);
    const std::size_t hw = cfg.feature_hw() * cfg.feature_hw();
    auto d = f.dense.data();
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t k = 0; k < 20; ++k) {
        double acc = 0;
        for (std::size_t p = 0; p < hw; ++p) acc += d[(n * hw + p) * 20 + k];
        CHECK(std::abs(acc / hw - f.pooled.data()[n * 20 + k]) < 1e-5);
      }
    }
  }
}

TEST_CASE("zero image gives finite output and identical images give identical features") {
  BackboneConfig cfg{Arch::conv4, 16, 32, 4};
  Backbone<float> net(cfg, 2);
  nm::Tensor zeros({2, 32, 32, 3}, 0.0f);
  auto f = net.forward(zeros, NormMode::running);
  for (float v : f.dense.data()) CHECK(std::isfinite(v));

  auto img = random_images<float>(1, 32, 4);
  nm::Tensor pair({2, 32, 32, 3});
  for (std::size_t i = 0; i < pair.numel(); ++i) pair.data()[i] = img.data()[i % img.numel()];
  auto g = net.forward(pair, NormMode::running);
  const std::size_t half = g.dense.numel() / 2;
  for (std::size_t i = 0; i < half; ++i) CHECK(g.dense.data()[i] == g.dense.data()[half + i]);
}

TEST_CASE("same seed gives identical weights and output shape ignores content") {
  BackboneConfig cfg{Arch::conv4, 8, 16, 2};
  Backbone<float> a(cfg, 11), b(cfg, 11);
  auto sa = a.state(), sb = b.state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].name == sb[i].name);
    CHECK(std::equal(sa[i].tensor.data().begin(), sa[i].tensor.data().end(), sb[i].tensor.data().begin()));
  }
  auto f1 = a.forward(random_images<float>(2, 16, 1), NormMode::batch);
  auto f2 = a.forward(nm::Tensor({2, 16, 16, 3}, 1.0f), NormMode::batch);
  CHECK(f1.dense.shape() == f2.dense.shape());
}

TEST_CASE("wrong input size names expected and actual") {
  Backbone<float> net(BackboneConfig{}, 1);
  try {
    net.forward(nm::Tensor({1, 32, 32, 3}), NormMode::batch);
    FAIL("expected ShapeError");
  } catch (const nm::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("84") != std::string::npos);
    CHECK(msg.find("[1, 32, 32, 3]") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((BackboneConfig{Arch::conv4, 0, 84, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((BackboneConfig{Arch::conv4, 8, 8, 4}.validate()), std::invalid_argument);
  CHECK_NOTHROW((BackboneConfig{Arch::conv4, 8, 8, 2}.validate()));
  CHECK(tmhfs::parse_arch("resnet12") == Arch::resnet12);
  CHECK_THROWS_AS(tmhfs::parse_arch("vgg"), std::invalid_argument);
  CHECK((BackboneConfig{Arch::resnet12, 640, 84, 4}.block_widths()) == std::vector<std::size_t>{64, 160, 320, 640});
}

TEST_CASE("gradient of pooled features w.r.t. a conv weight") {
  for (auto arch : {Arch::conv4, Arch::resnet12}) {
    BackboneConfig cfg{arch, 4, 8, 2};
    Backbone<double> net(cfg, 7);
    auto images = random_images<double>(3, 8, 9);
    tmhfs::Rng rng(4);
    nm::Tensor64 probe({3, 4});
    for (auto& v : probe.data()) v = rng.uniform(-1, 1);
    // grad_check perturbs `weight` in place, and it aliases the network's
    // first conv weight. Batch-mode output does not read running averages.
    auto weight = net.parameters()[0];
    auto f = [&](const nm::Tensor64&) { return nm::sum(nm::mul(net.forward(images, NormMode::batch).pooled, probe)); };
    CHECK(nm::grad_check<double>(f, weight, 1e-4) < 1e-4);
  }
}

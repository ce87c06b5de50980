#include <cmath>

#include "doctest.h"
#include "tmhfs/augment.hpp"

using tmhfs::AugPipeline;
using tmhfs::Image;
using tmhfs::Rng;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

Image constant_image(std::size_t h, std::size_t w, float r, float g, float b) {
  Image img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    img.pixels[i * 3] = r;
    img.pixels[i * 3 + 1] = g;
    img.pixels[i * 3 + 2] = b;
  }
  return img;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, double(std::abs(a.pixels[i] - b.pixels[i])));
  return m;
}

bool is_constant(const Image& img, float r, float g, float b, double tol = 1e-6) {
  for (std::size_t i = 0; i < img.h * img.w; ++i) {
    if (std::abs(img.pixels[i * 3] - r) > tol || std::abs(img.pixels[i * 3 + 1] - g) > tol ||
        std::abs(img.pixels[i * 3 + 2] - b) > tol)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scale") {
  auto img = random_image(84, 84, 1);
  CHECK(max_abs_diff(tmhfs::op_scale(img), img) < 1e-6);
  for (std::size_t side : {7u, 50u, 168u}) {
    auto c = tmhfs::op_scale(constant_image(side, side + 3, 0.2f, 0.5f, 0.9f));
    CHECK(c.h == 84);
    CHECK(c.w == 84);
    CHECK(is_constant(c, 0.2f, 0.5f, 0.9f));
  }
  // 2x downsample with half-pixel centers averages 2x2 blocks
  Image small(2, 2);
  small.pixels = {0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1};
  auto one = tmhfs::resize_bilinear(small, 1, 1);
  CHECK(one.pixels[0] == doctest::Approx(0.5));
}

TEST_CASE("random resized crop") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    auto out = tmhfs::op_random_resized_crop(constant_image(40, 60, 0.3f, 0.3f, 0.7f), rng);
    CHECK(out.h == 84);
    CHECK(out.w == 84);
    CHECK(is_constant(out, 0.3f, 0.3f, 0.7f));
  }
  auto img = random_image(50, 50, 4);
  Rng a(9), b(9);
  CHECK(tmhfs::op_random_resized_crop(img, a) == tmhfs::op_random_resized_crop(img, b));
  // extreme aspect ratios force the center-crop fallback
  Rng c(1);
  auto thin = tmhfs::op_random_resized_crop(random_image(8, 200, 5), c);
  CHECK(thin.h == 84);
}

TEST_CASE("jitter") {
  auto img = random_image(10, 10, 6);
  CHECK(tmhfs::apply_jitter(img, tmhfs::JitterFactors{}) == img);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    auto f = tmhfs::sample_jitter(rng);
    for (double v : {f.brightness, f.contrast, f.saturation}) {
      CHECK(v >= 0.6);
      CHECK(v <= 1.4);
    }
  }
  Image gray(6, 6);
  Rng g(8);
  for (std::size_t i = 0; i < 36; ++i) {
    const float v = static_cast<float>(g.uniform());
    for (int c = 0; c < 3; ++c) gray.pixels[i * 3 + c] = v;
  }
  tmhfs::JitterFactors sat;
  sat.saturation = 1.4;
  CHECK(max_abs_diff(tmhfs::apply_jitter(gray, sat), gray) < 1e-6);
  Rng j(2);
  for (int i = 0; i < 20; ++i) {
    auto out = tmhfs::op_image_jitter(gray, j);
    for (std::size_t p = 0; p < 36; ++p) {
      CHECK(std::abs(out.pixels[p * 3] - out.pixels[p * 3 + 1]) < 1e-6);
      CHECK(std::abs(out.pixels[p * 3] - out.pixels[p * 3 + 2]) < 1e-6);
    }
  }
}

TEST_CASE("horizontal flip") {
  auto img = random_image(5, 7, 10);
  CHECK(tmhfs::hflip(tmhfs::hflip(img)) == img);
  Image sym(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t c = 0; c < 3; ++c) sym.at(y, x, c) = sym.at(y, 3 - x, c) = float(y * 3 + x + c) / 20.0f;
  CHECK(tmhfs::hflip(sym) == sym);
  Rng rng(11);
  int flips = 0;
  for (int i = 0; i < 10000; ++i) flips += !(tmhfs::op_hflip(img, rng) == img);
  CHECK(std::abs(flips / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("rotation") {
  auto img = random_image(20, 20, 12);
  CHECK(max_abs_diff(tmhfs::rotate(img, 0.0), img) < 1e-6);
  auto rot = tmhfs::rotate(constant_image(21, 21, 0.4f, 0.6f, 0.8f), 30.0);
  // interior: everything within the inscribed circle keeps the constant
  for (std::size_t y = 0; y < 21; ++y)
    for (std::size_t x = 0; x < 21; ++x) {
      const double r = std::hypot(double(y) - 10, double(x) - 10);
      if (r < 9) CHECK(std::abs(rot.at(y, x, 1) - 0.6f) < 1e-6);
    }
  CHECK(rot.at(0, 0, 0) == 0.0f);
  Rng a(13), b(13);
  CHECK(tmhfs::op_rotation(img, a) == tmhfs::op_rotation(img, b));
  // 90 degrees on a square grid is an exact index permutation
  auto q = tmhfs::rotate(img, 90.0);
  CHECK(q.at(0, 0, 0) == doctest::Approx(img.at(0, 19, 0)).epsilon(1e-5));
}

TEST_CASE("pipeline parsing") {
  auto p = AugPipeline::parse("SJHR");
  CHECK(p.ops.size() == 4);
  CHECK(p.ops[3] == tmhfs::AugKind::rotate);
  std::string id;
  for (auto op : p.ops) id += tmhfs::letter(op);
  CHECK(id == p.id);
  CHECK_THROWS_AS(AugPipeline::parse("JS"), std::invalid_argument);
  CHECK_THROWS_AS(AugPipeline::parse("SX"), std::invalid_argument);
  CHECK_THROWS_AS(AugPipeline::parse(""), std::invalid_argument);
  CHECK(tmhfs::pipeline_set_a().size() == 10);
  CHECK(tmhfs::pipeline_set_b().size() == 10);
}

TEST_CASE("every listed pipeline gives valid images and replays exactly") {
  for (const auto* set : {&tmhfs::pipeline_set_a(), &tmhfs::pipeline_set_b()}) {
    auto pipes = tmhfs::parse_pipelines(*set);
    for (std::size_t i = 0; i < pipes.size(); ++i) {
      for (std::uint64_t s = 0; s < 10; ++s) {
        auto img = random_image(30 + s * 7, 40 + s * 5, s);
        auto out = tmhfs::apply_pipeline(img, pipes[i], tmhfs::augment_seed(5, i, s));
        CHECK(out.h == 84);
        CHECK(out.w == 84);
        for (float v : out.pixels) CHECK((v >= 0.0f && v <= 1.0f));
        CHECK(out == tmhfs::apply_pipeline(img, pipes[i], tmhfs::augment_seed(5, i, s)));
      }
    }
  }
}

TEST_CASE("augmented sets") {
  std::vector<tmhfs::Sample> support, query;
  for (std::size_t i = 0; i < 6; ++i) support.push_back({random_image(84, 84, i), i % 3, 10 + i % 3, i});
  for (std::size_t i = 0; i < 3; ++i) query.push_back({random_image(84, 84, 100 + i), i, 10 + i, 100 + i});

  auto identity = tmhfs::build_augmented_sets(support, query, tmhfs::parse_pipelines({"S"}), 1);
  REQUIRE(identity.size() == 1);
  for (std::size_t i = 0; i < 6; ++i) CHECK(max_abs_diff(identity[0].support[i].image, support[i].image) < 1e-6);

  auto pipes = tmhfs::parse_pipelines(tmhfs::pipeline_set_a());
  auto a = tmhfs::build_augmented_sets(support, query, pipes, 77);
  auto b = tmhfs::build_augmented_sets(support, query, pipes, 77);
  REQUIRE(a.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a[k].support[i].local_label == support[i].local_label);
      CHECK(a[k].support[i].global_label == support[i].global_label);
      CHECK(a[k].support[i].image == b[k].support[i].image);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[k].query[i].image == b[k].query[i].image);
  }
  // "SJHR" appears at indices 1 and 5; the branch index enters the seed
  CHECK_FALSE(a[1].support[0].image == a[5].support[0].image);
}

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "tmhfs/data.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs {

namespace fs = std::filesystem;

namespace {

using Rgb = std::array<double, 3>;

constexpr std::uint64_t kClassStream = 0xC1A55;
constexpr std::uint64_t kDomainStream = 0xD0;
constexpr std::uint64_t kSampleStream = 0x5A;

// Noise levels, tuned so a 5-way 5-shot episode is neither trivial nor hopeless
// for a desk-size conv4 (see README, calibration).
constexpr double kBackgroundSpread = 0.1;  // class backgrounds in 0.5 +- this
constexpr double kBackgroundJitter = 0.05;
constexpr double kBlobColorJitter = 0.1;
constexpr double kDomainAmplitude = 0.45;
// Per-sample brightness, contrast and saturation factors in 1 +- this.
constexpr double kPhotometric = 0.3;

// Shape exponents: 1 diamond, 2 disc, 6 rounded square. Shift morphs each
// toward the next one in the cycle.
constexpr std::array<double, 3> kShapes{1.0, 2.0, 6.0};

struct Blob {
  Rgb color;
  double radius;
  std::size_t shape;
};

struct ClassPattern {
  Rgb background;
  double frequency, amplitude;
  std::vector<Blob> blobs;
};

ClassPattern class_pattern(std::uint64_t seed, std::size_t class_id) {
  Rng rng(derive_seed({seed, kClassStream, class_id}));
  ClassPattern p;
  for (auto& v : p.background) v = rng.uniform(0.5 - kBackgroundSpread, 0.5 + kBackgroundSpread);
  p.frequency = rng.uniform(2.0, 7.0);
  p.amplitude = rng.uniform(0.06, 0.16);
  const std::size_t n = 1 + rng.index(3);
  for (std::size_t b = 0; b < n; ++b) {
    Blob blob;
    for (auto& v : blob.color) v = rng.uniform(0.0, 1.0);
    blob.radius = rng.uniform(0.12, 0.22);
    blob.shape = rng.index(kShapes.size());
    p.blobs.push_back(blob);
  }
  return p;
}

Rgb hue_rotate(const Rgb& c, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double k = (1.0 - cs) / 3.0, s = std::sqrt(1.0 / 3.0) * sn;
  const Rgb out{(cs + k) * c[0] + (k - s) * c[1] + (k + s) * c[2],
                (k + s) * c[0] + (cs + k) * c[1] + (k - s) * c[2],
                (k - s) * c[0] + (k + s) * c[1] + (cs + k) * c[2]};
  return {std::clamp(out[0], 0.0, 1.0), std::clamp(out[1], 0.0, 1.0), std::clamp(out[2], 0.0, 1.0)};
}

}  // namespace

Image render_synthetic(const SyntheticSpec& spec, std::size_t class_index, std::size_t sample_index) {
  const std::size_t class_id = spec.class_offset + class_index;
  const double s = spec.domain_shift;
  const auto pattern = class_pattern(spec.seed, class_id);
  Rng domain(derive_seed({spec.seed, kDomainStream}));
  const double domain_freq = domain.uniform(5.0, 9.0);
  const double domain_angle = domain.uniform(0.0, std::numbers::pi);
  Rng rng(derive_seed({spec.seed, kSampleStream, class_id, sample_index}));

  const double hue = 150.0 * s;
  Rgb bg = pattern.background;
  for (auto& v : bg) v += rng.uniform(-kBackgroundJitter, kBackgroundJitter);
  bg = hue_rotate(bg, hue);
  const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_d = rng.uniform(0.0, 2.0 * std::numbers::pi);

  struct Placed {
    Rgb color;
    double cx, cy, r, p;
  };
  std::vector<Placed> blobs;
  for (const auto& b : pattern.blobs) {
    Placed pl;
    pl.r = b.radius * rng.uniform(0.85, 1.15);
    pl.cx = rng.uniform(pl.r, 1.0 - pl.r);
    pl.cy = rng.uniform(pl.r, 1.0 - pl.r);
    Rgb c = b.color;
    for (auto& v : c) v = std::clamp(v + rng.uniform(-kBlobColorJitter, kBlobColorJitter), 0.0, 1.0);
    pl.color = hue_rotate(c, hue);
    pl.p = (1.0 - s) * kShapes[b.shape] + s * kShapes[(b.shape + 1) % kShapes.size()];
    blobs.push_back(pl);
  }

  const double two_pi = 2.0 * std::numbers::pi;
  const double dx = std::cos(domain_angle), dy = std::sin(domain_angle);
  const double bright = rng.uniform(1.0 - kPhotometric, 1.0 + kPhotometric);
  const double contrast = rng.uniform(1.0 - kPhotometric, 1.0 + kPhotometric);
  const double saturation = rng.uniform(1.0 - kPhotometric, 1.0 + kPhotometric);
  std::vector<Rgb> buf(spec.hw * spec.hw);
  for (std::size_t y = 0; y < spec.hw; ++y) {
    for (std::size_t x = 0; x < spec.hw; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(spec.hw);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(spec.hw);
      const double own = pattern.amplitude * std::sin(two_pi * pattern.frequency * u + phase_x) *
                         std::sin(two_pi * pattern.frequency * v + phase_y);
      const double swapped = kDomainAmplitude * std::sin(two_pi * domain_freq * (u * dx + v * dy) + phase_d);
      const double tex = (1.0 - s) * own + s * swapped;
      Rgb px{bg[0] + tex, bg[1] + tex, bg[2] + tex};
      for (const auto& b : blobs) {
        const double ex = std::abs(u - b.cx) / b.r, ey = std::abs(v - b.cy) / b.r;
        const double dist = std::pow(std::pow(ex, b.p) + std::pow(ey, b.p), 1.0 / b.p);
        // one-pixel soft edge
        const double cover = std::clamp(0.5 - (dist - 1.0) * b.r * static_cast<double>(spec.hw), 0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) px[c] = (1.0 - cover) * px[c] + cover * b.color[c];
      }
      buf[y * spec.hw + x] = px;
    }
  }
  auto gray = [](const Rgb& p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; };
  double mean = 0;
  for (const auto& p : buf) mean += gray(p);
  mean = mean / static_cast<double>(buf.size()) * bright;
  Image img(spec.hw, spec.hw);
  for (std::size_t y = 0; y < spec.hw; ++y) {
    for (std::size_t x = 0; x < spec.hw; ++x) {
      Rgb px = buf[y * spec.hw + x];
      for (auto& v : px) v = (v * bright - mean) * contrast + mean;
      const double g = gray(px);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = g + (px[c] - g) * saturation;
        img.at(y, x, c) = static_cast<float>(std::clamp(v + 0.03 * rng.normal(), 0.0, 1.0));
      }
    }
  }
  return img;
}

Dataset gen_synthetic(const SyntheticSpec& spec, const fs::path& root) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic dataset needs at least 2 classes");
  if (spec.samples_per_class == 0) throw std::invalid_argument("synthetic dataset needs samples_per_class >= 1");
  if (spec.hw < 8 || spec.hw > 0xFFFF) throw std::invalid_argument("synthetic image side must be in [8, 65535]");
  if (!(spec.domain_shift >= 0.0 && spec.domain_shift <= 1.0)) {
    throw std::invalid_argument("domain_shift must be in [0, 1], got " + std::to_string(spec.domain_shift));
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError(root.string() + ": byte 0: cannot create directory (" + ec.message() + ")");

  nlohmann::json meta;
  meta["name"] = spec.name;
  meta["classes"] = nlohmann::json::array();
  char buf[32];
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::snprintf(buf, sizeof buf, "class_%03zu", c);
    const std::string dir = buf;
    fs::create_directories(root / dir, ec);
    if (ec) throw DataError((root / dir).string() + ": byte 0: cannot create directory (" + ec.message() + ")");
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      std::snprintf(buf, sizeof buf, "%05zu.img", i);
      const std::string rel = dir + "/" + buf;
      write_image(root / rel, render_synthetic(spec, c, i));
      samples.push_back(rel);
    }
    meta["classes"].push_back(
        {{"label", c}, {"class_name", "pattern_" + std::to_string(spec.class_offset + c)}, {"samples", samples}});
  }
  std::ofstream out(root / "meta.json", std::ios::trunc);
  if (!out) throw DataError((root / "meta.json").string() + ": byte 0: cannot open for writing");
  out << meta.dump(1) << '\n';
  if (!out) throw DataError((root / "meta.json").string() + ": byte 0: write failed");
  out.close();
  return Dataset::load(root);
}

}  // namespace tmhfs

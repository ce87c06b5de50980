#include "tmhfs/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tmhfs {

char letter(AugKind kind) {
  switch (kind) {
    case AugKind::scale: return 'S';
    case AugKind::crop: return 'C';
    case AugKind::jitter: return 'J';
    case AugKind::flip: return 'H';
    case AugKind::rotate: return 'R';
  }
  return '?';
}

AugPipeline AugPipeline::parse(std::string_view id) {
  AugPipeline p;
  p.id = std::string(id);
  for (char ch : id) {
    switch (ch) {
      case 'S': p.ops.push_back(AugKind::scale); break;
      case 'C': p.ops.push_back(AugKind::crop); break;
      case 'J': p.ops.push_back(AugKind::jitter); break;
      case 'H': p.ops.push_back(AugKind::flip); break;
      case 'R': p.ops.push_back(AugKind::rotate); break;
      default:
        throw std::invalid_argument("augmentation pipeline '" + p.id + "': unknown op '" + std::string(1, ch) +
                                    "' (expected S, C, J, H or R)");
    }
  }
  if (p.ops.empty() || (p.ops.front() != AugKind::scale && p.ops.front() != AugKind::crop)) {
    throw std::invalid_argument("augmentation pipeline '" + p.id + "' must start with S or C");
  }
  return p;
}

const std::vector<std::string>& pipeline_set_a() {
  static const std::vector<std::string> ids{"S", "SJHR", "SR", "SJ", "SH", "SJHR", "SR", "SJR", "SJH", "SH"};
  return ids;
}

const std::vector<std::string>& pipeline_set_b() {
  static const std::vector<std::string> ids{"S", "SJH", "C", "CJ", "CH", "CJH", "C", "CJ", "CJH", "CH"};
  return ids;
}

std::vector<AugPipeline> parse_pipelines(const std::vector<std::string>& ids) {
  std::vector<AugPipeline> out;
  for (const auto& id : ids) out.push_back(AugPipeline::parse(id));
  return out;
}

namespace {

// Bilinear resample of the window [y0, y0+h) x [x0, x0+w) of `img`.
Image resample(const Image& img, double y0, double x0, double h, double w, std::size_t out_h, std::size_t out_w) {
  Image out(out_h, out_w);
  const double sy = h / static_cast<double>(out_h), sx = w / static_cast<double>(out_w);
  const double max_y = static_cast<double>(img.h - 1), max_x = static_cast<double>(img.w - 1);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp(y0 + (static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y_lo = static_cast<std::size_t>(fy);
    const std::size_t y_hi = std::min(y_lo + 1, img.h - 1);
    const double ty = fy - static_cast<double>(y_lo);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp(x0 + (static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x_lo = static_cast<std::size_t>(fx);
      const std::size_t x_hi = std::min(x_lo + 1, img.w - 1);
      const double tx = fx - static_cast<double>(x_lo);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = std::lerp(double(img.at(y_lo, x_lo, c)), double(img.at(y_lo, x_hi, c)), tx);
        const double bot = std::lerp(double(img.at(y_hi, x_lo, c)), double(img.at(y_hi, x_hi, c)), tx);
        out.at(oy, ox, c) = static_cast<float>(std::lerp(top, bot, ty));
      }
    }
  }
  return out;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double luminance(const Image& img, std::size_t i) {
  return 0.299 * img.pixels[i * 3] + 0.587 * img.pixels[i * 3 + 1] + 0.114 * img.pixels[i * 3 + 2];
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.h == 0 || img.w == 0 || out_h == 0 || out_w == 0) throw std::invalid_argument("resize of empty image");
  if (img.h == out_h && img.w == out_w) return img;
  return resample(img, 0.0, 0.0, static_cast<double>(img.h), static_cast<double>(img.w), out_h, out_w);
}

Image op_scale(const Image& img, std::size_t side) { return resize_bilinear(img, side, side); }

Image op_random_resized_crop(const Image& img, Rng& rng, std::size_t side) {
  const double height = static_cast<double>(img.h), width = static_cast<double>(img.w);
  const double area = height * width;
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(0.08, 1.0);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const double w = std::round(std::sqrt(target * aspect));
    const double h = std::round(std::sqrt(target / aspect));
    if (w >= 1 && h >= 1 && w <= width && h <= height) {
      const double y0 = static_cast<double>(rng.index(static_cast<std::size_t>(height - h) + 1));
      const double x0 = static_cast<double>(rng.index(static_cast<std::size_t>(width - w) + 1));
      return resample(img, y0, x0, h, w, side, side);
    }
  }
  double w = width, h = height;
  if (width / height < 3.0 / 4.0) {
    h = std::round(w / (3.0 / 4.0));
  } else if (width / height > 4.0 / 3.0) {
    w = std::round(h * 4.0 / 3.0);
  }
  return resample(img, std::floor((height - h) / 2), std::floor((width - w) / 2), h, w, side, side);
}

JitterFactors sample_jitter(Rng& rng) {
  JitterFactors f;
  f.brightness = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  f.contrast = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  f.saturation = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  rng.shuffle(f.order.begin(), f.order.end());
  return f;
}

Image apply_jitter(const Image& img, const JitterFactors& f) {
  Image out = img;
  const std::size_t n = img.h * img.w;
  for (int step : f.order) {
    if (step == 0) {
      if (f.brightness == 1.0) continue;
      for (auto& v : out.pixels) v = clamp01(v * f.brightness);
    } else if (step == 1) {
      if (f.contrast == 1.0) continue;
      double mean = 0;
      for (std::size_t i = 0; i < n; ++i) mean += luminance(out, i);
      mean /= static_cast<double>(n);
      for (auto& v : out.pixels) v = clamp01((v - mean) * f.contrast + mean);
    } else {
      if (f.saturation == 1.0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const double gray = luminance(out, i);
        for (std::size_t c = 0; c < 3; ++c) {
          out.pixels[i * 3 + c] = clamp01((out.pixels[i * 3 + c] - gray) * f.saturation + gray);
        }
      }
    }
  }
  return out;
}

Image op_image_jitter(const Image& img, Rng& rng) { return apply_jitter(img, sample_jitter(rng)); }

Image hflip(const Image& img) {
  Image out(img.h, img.w);
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

Image op_hflip(const Image& img, Rng& rng) { return rng.bernoulli(0.5) ? hflip(img) : img; }

Image rotate(const Image& img, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double cy = (static_cast<double>(img.h) - 1.0) / 2.0, cx = (static_cast<double>(img.w) - 1.0) / 2.0;
  const auto ih = static_cast<std::ptrdiff_t>(img.h), iw = static_cast<std::ptrdiff_t>(img.w);
  auto sample = [&](std::ptrdiff_t y, std::ptrdiff_t x, std::size_t c) -> double {
    if (y < 0 || x < 0 || y >= ih || x >= iw) return 0.0;
    return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
  };
  Image out(img.h, img.w);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      // inverse map: rotate the output coordinate clockwise into the source
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double ty = sy - fy, tx = sx - fx;
      const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
      for (std::size_t c = 0; c < 3; ++c) {
        double v = (1 - ty) * (1 - tx) * sample(y0, x0, c);
        if (tx != 0.0) v += (1 - ty) * tx * sample(y0, x0 + 1, c);
        if (ty != 0.0) v += ty * (1 - tx) * sample(y0 + 1, x0, c);
        if (tx != 0.0 && ty != 0.0) v += ty * tx * sample(y0 + 1, x0 + 1, c);
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Image op_rotation(const Image& img, Rng& rng) { return rotate(img, rng.uniform(0.0, kMaxRotation)); }

Image apply_pipeline(const Image& img, const AugPipeline& pipeline, std::uint64_t seed, std::size_t side) {
  Rng rng(seed);
  Image out = img;
  for (auto op : pipeline.ops) {
    switch (op) {
      case AugKind::scale: out = op_scale(out, side); break;
      case AugKind::crop: out = op_random_resized_crop(out, rng, side); break;
      case AugKind::jitter: out = op_image_jitter(out, rng); break;
      case AugKind::flip: out = op_hflip(out, rng); break;
      case AugKind::rotate: out = op_rotation(out, rng); break;
    }
  }
  return out;
}

std::uint64_t augment_seed(std::uint64_t base_seed, std::size_t branch, std::uint64_t sample_id) {
  return derive_seed({base_seed, branch, sample_id});
}

std::vector<AugmentedSet> build_augmented_sets(const std::vector<Sample>& support, const std::vector<Sample>& query,
                                               const std::vector<AugPipeline>& pipelines, std::uint64_t base_seed,
                                               std::size_t side) {
  if (pipelines.empty()) throw std::invalid_argument("build_augmented_sets needs at least one pipeline");
  std::vector<AugmentedSet> out(pipelines.size());
  for (std::size_t i = 0; i < pipelines.size(); ++i) {
    auto apply = [&](const std::vector<Sample>& in, std::vector<Sample>& dst) {
      dst.reserve(in.size());
      for (const auto& s : in) {
        Sample a = s;
        a.image = apply_pipeline(s.image, pipelines[i], augment_seed(base_seed, i, s.sample_id), side);
        dst.push_back(std::move(a));
      }
    };
    apply(support, out[i].support);
    apply(query, out[i].query);
  }
  return out;
}

}  // namespace tmhfs

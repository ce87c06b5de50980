#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tmhfs/data.hpp"
#include "tmhfs/image.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs {

inline constexpr std::size_t kAugmentSide = 84;

enum class AugKind { scale, crop, jitter, flip, rotate };

char letter(AugKind kind);

/// Ordered op list parsed from a letter string such as "SJHR". The first op
/// must be S or C so every pipeline ends at the configured output size.
struct AugPipeline {
  std::string id;
  std::vector<AugKind> ops;

  static AugPipeline parse(std::string_view id);
};

/// The two ten-pipeline sets used for augmentation ensembles. Set A mixes
/// scale, jitter, flip and rotation; set B is crop-heavy.
const std::vector<std::string>& pipeline_set_a();
const std::vector<std::string>& pipeline_set_b();
std::vector<AugPipeline> parse_pipelines(const std::vector<std::string>& ids);

/// Bilinear resize with half-pixel centers; same-size input is copied exactly.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

Image op_scale(const Image& img, std::size_t side = kAugmentSide);

/// Crop with area fraction in [0.08, 1] and log-uniform aspect in [3/4, 4/3],
/// resized to side x side. Ten failed draws fall back to a center crop.
Image op_random_resized_crop(const Image& img, Rng& rng, std::size_t side = kAugmentSide);

struct JitterFactors {
  double brightness = 1.0, contrast = 1.0, saturation = 1.0;
  std::array<int, 3> order{0, 1, 2};  ///< 0 brightness, 1 contrast, 2 saturation
};
inline constexpr double kJitterStrength = 0.4;

JitterFactors sample_jitter(Rng& rng);
/// Applies the factors in `order`, clamping to [0, 1] after each step.
Image apply_jitter(const Image& img, const JitterFactors& f);
Image op_image_jitter(const Image& img, Rng& rng);

Image hflip(const Image& img);
Image op_hflip(const Image& img, Rng& rng);

/// Counter-clockwise rotation about the image center with bilinear sampling;
/// samples outside the source read as 0.
Image rotate(const Image& img, double degrees);
inline constexpr double kMaxRotation = 45.0;
Image op_rotation(const Image& img, Rng& rng);

Image apply_pipeline(const Image& img, const AugPipeline& pipeline, std::uint64_t seed,
                     std::size_t side = kAugmentSide);

/// Seed for sample `sample_id` under pipeline index `branch`.
std::uint64_t augment_seed(std::uint64_t base_seed, std::size_t branch, std::uint64_t sample_id);

struct AugmentedSet {
  std::vector<Sample> support;
  std::vector<Sample> query;
};

/// One (S_i, Q_i) pair per pipeline; labels and ids are preserved.
std::vector<AugmentedSet> build_augmented_sets(const std::vector<Sample>& support, const std::vector<Sample>& query,
                                               const std::vector<AugPipeline>& pipelines, std::uint64_t base_seed,
                                               std::size_t side = kAugmentSide);

}  // namespace tmhfs

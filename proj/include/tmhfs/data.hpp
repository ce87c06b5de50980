#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmhfs/image.hpp"

namespace tmhfs {

/// Missing, unreadable or malformed dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// IMG1 sample files: "IMG1", u16 LE height, u16 LE width, u8 channels (3),
// then height * width * 3 bytes of RGB.
inline constexpr std::size_t kImageHeaderBytes = 9;

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

struct SampleInfo {
  std::filesystem::path path;
  std::uint64_t id = 0;  ///< unique within the dataset
  std::size_t h = 0, w = 0;
};

struct ClassRecord {
  std::size_t label = 0;
  std::string name;
  std::vector<SampleInfo> samples;
};

/// A validated dataset root. Headers and file sizes are checked when loading;
/// pixel data is decoded on demand.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& root);

  const std::string& name() const { return name_; }
  const std::filesystem::path& root() const { return root_; }
  /// Indexed by global label.
  const std::vector<ClassRecord>& classes() const { return classes_; }
  std::size_t class_count() const { return classes_.size(); }
  std::size_t sample_count() const;

  Image image(std::size_t label, std::size_t index) const;

 private:
  std::string name_;
  std::filesystem::path root_;
  std::vector<ClassRecord> classes_;
};

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t samples_per_class = 100;
  std::size_t hw = 84;
  double domain_shift = 0.0;  ///< in [0, 1]
  std::uint64_t seed = 0;
  /// Index of the first class pattern. Two datasets with different offsets
  /// share no class patterns.
  std::size_t class_offset = 0;
  std::string name = "synthetic";
};

/// Writes meta.json and one IMG1 file per sample under `root`, then loads
/// it. Existing files with the same names are overwritten.
Dataset gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);

/// Renders one synthetic sample without touching the disk.
Image render_synthetic(const SyntheticSpec& spec, std::size_t class_index, std::size_t sample_index);

struct Sample {
  Image image;
  std::size_t local_label = 0;
  std::size_t global_label = 0;
  std::uint64_t sample_id = 0;
};

struct SampleRef {
  std::size_t global_label = 0;
  std::size_t index = 0;  ///< position within the class
  std::size_t local_label = 0;
  std::uint64_t sample_id = 0;
};

/// Which samples an episode uses, before decoding.
struct EpisodePlan {
  std::vector<std::size_t> class_map;  ///< local -> global
  std::vector<SampleRef> support;      ///< class-major, N per class
  std::vector<SampleRef> query;        ///< class-major, M per class
};

struct Episode {
  std::vector<Sample> support;
  std::vector<Sample> query;
  std::vector<std::size_t> class_map;

  std::size_t way() const { return class_map.size(); }
};

EpisodePlan plan_episode(const Dataset& ds, std::size_t way, std::size_t shot, std::size_t query,
                         std::uint64_t seed);
Episode materialize(const Dataset& ds, const EpisodePlan& plan);
Episode sample_episode(const Dataset& ds, std::size_t way, std::size_t shot, std::size_t query, std::uint64_t seed);

}  // namespace tmhfs

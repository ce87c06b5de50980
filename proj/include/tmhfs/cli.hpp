#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tmhfs/pipeline.hpp"

namespace tmhfs::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kDivergence = 3 };

struct DataSection {
  std::filesystem::path source_dir = "data/source";
  std::filesystem::path target_dir = "data/target";
  std::size_t source_classes = 8, source_samples = 100;
  std::size_t target_classes = 10, target_samples = 40;
  std::size_t hw = 84;
  double shift = 0.8;
  std::uint64_t seed = 0;
};

struct TrainSection {
  TrainConfig config;
  bool schedule_given = false;  ///< otherwise the default schedule scaled to `episodes`
  std::filesystem::path checkpoint = "model.ckpt";
};

struct FinetuneSection {
  FinetuneConfig config;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"mct", "tmhfs", "tmhfs_inductive", "tmhfs_da"};
  return m;
}

struct EvalSection {
  std::size_t episodes = 600;
  std::size_t way = 5, shot = 5, query = 15;
  std::size_t t_test = 10;
  std::vector<std::string> methods{"tmhfs"};
  std::filesystem::path out_dir = "eval";
  std::uint64_t seed = 0;
};

struct AugmentSection {
  std::vector<std::string> pipelines = pipeline_set_a();
  std::uint64_t seed = 0;
};

struct Config {
  DataSection data;
  TrainSection train;
  FinetuneSection finetune;
  EvalSection eval;
  AugmentSection augment;
  std::string hash;  ///< of the canonical JSON form, after overrides

  /// Parses the JSON text; unknown keys and bad values throw
  /// std::invalid_argument naming the key. Relative paths resolve against
  /// `base_dir`.
  static Config parse(const std::string& text, const std::filesystem::path& base_dir);
  static Config load(const std::filesystem::path& path);

  /// Replaces every section seed.
  void override_seed(std::uint64_t seed);
  std::string canonical_json() const;
  void rehash();
};

/// 16 hex digits of FNV-1a over the bytes.
std::string fnv1a_hex(const std::string& bytes);

double mean_of(const std::vector<double>& values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);
/// 1.96 * sample stddev / sqrt(n).
double ci95_of(const std::vector<double>& values);
/// "xx.xx% ± x.xx%" from fractions.
std::string format_accuracy(double mean, double ci95);

struct EvalReport {
  std::string method;
  std::vector<double> per_episode_acc;
  double mean = 0, ci95 = 0;
  std::size_t n_episodes = 0;
  std::string config_hash;

  static EvalReport from(std::string method, std::vector<double> accs, std::string config_hash);
  std::string summary() const { return format_accuracy(mean, ci95); }
  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

struct EpisodeRecord {
  std::size_t episode_id = 0;
  std::size_t n_query = 0, n_correct = 0;
  double accuracy = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

/// Paired comparison of two reports over the same episodes (a - b).
struct Comparison {
  double mean_delta = 0, ci95_delta = 0;
};
Comparison compare_reports(const EvalReport& a, const EvalReport& b);

/// Every method's records for one episode, in `methods` order.
std::vector<EpisodeRecord> evaluate_episode(const Model& trained, const Dataset& target, const Config& cfg,
                                            const std::vector<std::string>& methods, std::size_t episode_id);

/// Runs all eval episodes over `jobs` workers; reports come back in
/// `cfg.eval.methods` order with records in episode order.
struct EvalOutput {
  std::vector<EvalReport> reports;
  std::vector<std::vector<EpisodeRecord>> records;
};
EvalOutput run_evaluation(const Model& trained, const Dataset& target, const Config& cfg, std::size_t jobs);

/// Entry point behind the binary; returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tmhfs::cli

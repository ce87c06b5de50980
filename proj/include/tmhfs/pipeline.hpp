#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmhfs/augment.hpp"
#include "tmhfs/backbone.hpp"
#include "tmhfs/data.hpp"
#include "tmhfs/heads.hpp"
#include "tmhfs/numeric/optim.hpp"
#include "tmhfs/transduction.hpp"

namespace tmhfs {

enum class Stage { trained, finetuned };

std::string to_string(Stage stage);
Stage parse_stage(std::string_view name);

/// Embedding network plus the three heads.
template <typename T>
struct BasicModel {
  Backbone<T> theta;
  ConfidenceNet<T> phi;
  GlobalPrototypes<T> omega;
  SemanticHead<T> delta;
  Stage stage = Stage::trained;

  /// Fresh parameters; `source_classes` sizes both omega and delta.
  static BasicModel init(const BackboneConfig& backbone, std::size_t source_classes, std::uint64_t seed);

  std::size_t feature_dim() const { return theta.config().channels; }
  std::vector<BasicTensor<T>> parameters() const;
  /// All tensors, names prefixed theta. / phi. / omega. / delta.
  std::vector<NamedTensor<T>> state() const;
  void load_state(const std::vector<NamedTensor<T>>& state);
  BasicModel clone() const;

  template <typename U>
  BasicModel<U> cast() const {
    return {theta.template cast<U>(), phi.template cast<U>(), omega.template cast<U>(), delta.template cast<U>(),
            stage};
  }
};

using Model = BasicModel<float>;

/// Stacks sample images into [n, side, side, 3], scaling any image whose
/// size differs from side x side.
template <typename T>
BasicTensor<T> images_to_tensor(const std::vector<Sample>& samples, std::size_t side);

/// Episode images and labels in tensor form.
template <typename T>
struct EpisodeTensors {
  BasicTensor<T> images;  ///< support rows first, then query rows
  std::size_t n_support = 0;
  std::size_t way = 0;
  std::vector<std::size_t> support_local, query_local, support_global, query_global;

  std::size_t n_query() const { return images.dim(0) - n_support; }
};

template <typename T>
EpisodeTensors<T> episode_tensors(const Episode& episode, std::size_t side);

/// Backbone output for an episode, split into support and query parts.
template <typename T>
struct EpisodeFeatures {
  BasicTensor<T> support_pooled, query_pooled;  ///< [nS, K], [nQ, K]
  BasicTensor<T> query_dense;                   ///< [nQ, H, W, K]
  BasicTensor<T> all_pooled;                    ///< [nS + nQ, K]
};

template <typename T>
EpisodeFeatures<T> embed_episode(BasicModel<T>& model, const EpisodeTensors<T>& ep, NormMode mode);

/// Mean negative log-likelihood of `labels` under row log-probabilities.
template <typename T>
BasicTensor<T> nll(const BasicTensor<T>& log_probs, std::span<const std::size_t> labels);

/// Query NLL of local labels after `rounds` transduction steps.
template <typename T>
BasicTensor<T> loss_instance(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep, const ConfidenceNet<T>& phi,
                             std::size_t rounds);
/// Mean over query pixels of the NLL of the query's global label.
template <typename T>
BasicTensor<T> loss_dense(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep, const GlobalPrototypes<T>& omega);
/// Mean NLL of global labels over support and query. The rows are processed
/// in consecutive chunks of `batch`, each weighted by its share of the rows.
template <typename T>
BasicTensor<T> loss_semantic(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep, const SemanticHead<T>& delta,
                             std::size_t batch);

struct LossWeights {
  double lambda = 0.2;  ///< instance term
  double alpha = 0.4;   ///< semantic term
};

template <typename T>
struct LossTerms {
  BasicTensor<T> instance, semantic, dense, total;
};

/// total = lambda * instance + alpha * semantic + dense.
template <typename T>
LossTerms<T> loss_combined(BasicModel<T>& model, const EpisodeTensors<T>& ep, const LossWeights& weights,
                           std::size_t rounds, std::size_t semantic_batch);

struct TrainConfig {
  BackboneConfig backbone;
  LossWeights weights;
  std::size_t episodes = 2000;
  std::size_t way = 15;
  std::size_t shot = 5;
  std::size_t query = 15;
  numeric::LrSchedule schedule;
  std::size_t semantic_batch = 4;
  std::size_t t_train = 1;
  std::size_t log_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raised when a training loss or parameter turns non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t episode, const std::string& what);
  std::size_t episode() const { return episode_; }

 private:
  std::size_t episode_;
};

struct TrainLogEntry {
  std::size_t episode = 0;  ///< last episode included
  double lr = 0;
  /// Means over the episodes since the previous entry.
  double total = 0, instance = 0, semantic = 0, dense = 0;
};

struct TrainResult {
  Model model;
  std::vector<double> losses;  ///< combined loss per episode
  std::vector<TrainLogEntry> log;
};

TrainResult meta_train(const Dataset& source, const TrainConfig& cfg,
                       const std::function<void(const TrainLogEntry&)>& on_log = {});

struct FinetuneConfig {
  std::size_t epochs = 100;
  /// Epochs when training on the union of augmented support sets; 0 means
  /// use `epochs`.
  std::size_t augmented_epochs = 0;
  double lr = 0.01;
  std::size_t batch = 4;
  /// Joint gradient norm cap per step; 0 disables clipping.
  double clip_norm = 0.0;
  bool use_augmentation = false;
  std::vector<std::string> pipelines;

  void validate() const;
};

struct FinetuneResult {
  Model model;
  std::vector<double> losses;  ///< per mini-batch
};

/// Clones `model`, replaces delta with a fresh K x way head and trains theta
/// and delta on `support` (local labels) with frozen normalization
/// statistics. phi and omega are left as they are. With augmentation the
/// training set is the union of one augmented copy of `support` per
/// pipeline, so every augmented set carries equal weight.
FinetuneResult fine_tune(const Model& model, const std::vector<Sample>& support, std::size_t way,
                         const FinetuneConfig& cfg, std::uint64_t seed);

struct Prediction {
  std::vector<std::size_t> labels;
  std::vector<double> posteriors;  ///< row-major [n_query, way]
  std::size_t way = 0;
};

/// Argmax per row, lowest index on ties.
std::vector<std::size_t> argmax_rows(const std::vector<double>& rows, std::size_t width);

Prediction predict_episode(Model& model, const std::vector<Sample>& support, const std::vector<Sample>& query,
                           std::size_t way, std::size_t rounds);

/// Elementwise mean of branch posteriors in the given order.
Prediction average_predictions(const std::vector<Prediction>& branches);

Prediction predict_ensemble(Model& model, const std::vector<AugmentedSet>& sets, std::size_t way, std::size_t rounds);
Prediction predict_ensemble(Model& model, const std::vector<Sample>& support, const std::vector<Sample>& query,
                            std::size_t way, const std::vector<AugPipeline>& pipelines, std::uint64_t base_seed,
                            std::size_t rounds);

/// Fraction of matching labels.
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<Sample>& query);

// Checkpoint: "TMHF", u32 version, u32 meta length + JSON meta, u32 tensor
// count, per tensor (u16 name length, name, u8 rank, u32 dims..., u64 data
// offset), then little-endian f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace tmhfs

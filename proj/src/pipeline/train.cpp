#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tmhfs/numeric/ops.hpp"
#include "tmhfs/pipeline.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs {

namespace nm = numeric;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEpisodeStream = 0xE915;
constexpr std::uint64_t kHeadStream = 0xDE17A;
constexpr std::uint64_t kShuffleStream = 0x5F;
constexpr std::uint64_t kAugmentStream = 0xA6;

bool all_finite(const std::vector<nm::Tensor>& params) {
  for (const auto& p : params)
    for (float v : p.data())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  backbone.validate();
  if (!(weights.lambda >= 0.0) || !(weights.alpha >= 0.0)) {
    throw std::invalid_argument("train: lambda and alpha must be >= 0");
  }
  if (way < 2) throw std::invalid_argument("train: way must be >= 2");
  if (shot == 0 || query == 0) throw std::invalid_argument("train: shot and query must be >= 1");
  if (semantic_batch == 0) throw std::invalid_argument("train: semantic_batch must be >= 1");
  if (log_every == 0) throw std::invalid_argument("train: log_every must be >= 1");
}

DivergenceError::DivergenceError(std::size_t episode, const std::string& what)
    : std::runtime_error("training diverged at episode " + std::to_string(episode) + ": " + what),
      episode_(episode) {}

TrainResult meta_train(const Dataset& source, const TrainConfig& cfg,
                       const std::function<void(const TrainLogEntry&)>& on_log) {
  cfg.validate();
  if (source.class_count() < cfg.way) {
    throw std::invalid_argument("train: source has " + std::to_string(source.class_count()) +
                                " classes, way is " + std::to_string(cfg.way));
  }
  TrainResult out{Model::init(cfg.backbone, source.class_count(), derive_seed({cfg.seed, kInitStream})), {}, {}};
  Model& model = out.model;
  auto params = model.parameters();
  for (auto& p : params) p.zero_grad();

  TrainLogEntry acc;
  std::size_t in_window = 0;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const auto episode = sample_episode(source, cfg.way, cfg.shot, cfg.query, derive_seed({cfg.seed, kEpisodeStream, e}));
    const auto tensors = episode_tensors<float>(episode, cfg.backbone.input_hw);
    const double lr = nm::lr_at(cfg.schedule, e);
    LossTerms<float> terms;
    try {
      terms = loss_combined(model, tensors, cfg.weights, cfg.t_train, cfg.semantic_batch);
      nm::backward(terms.total);
    } catch (const nm::NumericError& err) {
      nm::Tape<float>::current().clear();
      throw DivergenceError(e, err.what());
    }
    const double total = terms.total.item();
    if (!std::isfinite(total)) throw DivergenceError(e, "non-finite loss");
    nm::sgd_step(std::span<nm::Tensor>(params), static_cast<float>(lr));
    if (!all_finite(params)) throw DivergenceError(e, "non-finite parameter after update");

    out.losses.push_back(total);
    acc.total += total;
    acc.instance += terms.instance.item();
    acc.semantic += terms.semantic.item();
    acc.dense += terms.dense.item();
    ++in_window;
    if (in_window == cfg.log_every || e + 1 == cfg.episodes) {
      const double n = static_cast<double>(in_window);
      TrainLogEntry entry{e, lr, acc.total / n, acc.instance / n, acc.semantic / n, acc.dense / n};
      out.log.push_back(entry);
      if (on_log) on_log(entry);
      acc = TrainLogEntry{};
      in_window = 0;
    }
  }
  return out;
}

void FinetuneConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("finetune: lr must be >= 0");
  if (batch == 0) throw std::invalid_argument("finetune: batch must be >= 1");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("finetune: clip_norm must be >= 0");
  if (use_augmentation && pipelines.empty()) throw std::invalid_argument("finetune: augmentation needs pipelines");
  for (const auto& id : pipelines) AugPipeline::parse(id);
}

FinetuneResult fine_tune(const Model& model, const std::vector<Sample>& support, std::size_t way,
                         const FinetuneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (support.empty()) throw std::invalid_argument("fine_tune: empty support set");
  if (model.stage != Stage::trained) throw std::logic_error("fine_tune: model is already fine-tuned");
  for (const auto& s : support) {
    if (s.local_label >= way) {
      throw std::invalid_argument("fine_tune: label " + std::to_string(s.local_label) + " outside way " +
                                  std::to_string(way));
    }
  }
  FinetuneResult out{model.clone(), {}};
  Model& m = out.model;
  m.delta = SemanticHead<float>(m.feature_dim(), way, derive_seed({seed, kHeadStream}));
  m.stage = Stage::finetuned;

  const std::size_t side = m.theta.config().input_hw;
  std::vector<Sample> train_set;
  std::size_t epochs = cfg.epochs;
  if (cfg.use_augmentation) {
    const auto sets = build_augmented_sets(support, {}, parse_pipelines(cfg.pipelines),
                                           derive_seed({seed, kAugmentStream}), side);
    for (const auto& s : sets) train_set.insert(train_set.end(), s.support.begin(), s.support.end());
    if (cfg.augmented_epochs > 0) epochs = cfg.augmented_epochs;
  } else {
    train_set = support;
  }
  const auto images = images_to_tensor<float>(train_set, side);
  std::vector<nm::Tensor> params = m.theta.parameters();
  for (auto& p : m.delta.parameters()) params.push_back(p);
  for (auto& p : params) p.zero_grad();

  Rng rng(derive_seed({seed, kShuffleStream}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train_set[i].local_label);
      auto pooled = m.theta.forward(nm::take_rows(images, idx), NormMode::running).pooled;
      auto loss = nll(nm::log_softmax(m.delta.logits(pooled)), std::span<const std::size_t>(labels));
      nm::backward(loss);
      if (cfg.clip_norm > 0.0) nm::clip_grad_norm(std::span<nm::Tensor>(params), cfg.clip_norm);
      nm::sgd_step(std::span<nm::Tensor>(params), static_cast<float>(cfg.lr));
      out.losses.push_back(loss.item());
    }
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const std::vector<double>& rows, std::size_t width) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r * width < rows.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < width; ++c)
      if (rows[r * width + c] > rows[r * width + best]) best = c;
    out.push_back(best);
  }
  return out;
}

Prediction predict_episode(Model& model, const std::vector<Sample>& support, const std::vector<Sample>& query,
                           std::size_t way, std::size_t rounds) {
  Prediction out;
  out.way = way;
  if (query.empty()) return out;
  nm::NoGradGuard guard;
  std::vector<Sample> all = support;
  all.insert(all.end(), query.begin(), query.end());
  const auto images = images_to_tensor<float>(all, model.theta.config().input_hw);
  const auto pooled = model.theta.forward(images, NormMode::running).pooled;
  std::vector<std::size_t> s_idx(support.size()), q_idx(query.size()), labels;
  std::iota(s_idx.begin(), s_idx.end(), 0);
  std::iota(q_idx.begin(), q_idx.end(), support.size());
  for (const auto& s : support) labels.push_back(s.local_label);
  auto r = transduce(nm::take_rows(pooled, std::span<const std::size_t>(s_idx)), std::span<const std::size_t>(labels),
                     nm::take_rows(pooled, std::span<const std::size_t>(q_idx)), way, model.phi, rounds);
  out.posteriors.assign(r.posteriors.data().begin(), r.posteriors.data().end());
  out.labels = argmax_rows(out.posteriors, way);
  return out;
}

Prediction average_predictions(const std::vector<Prediction>& branches) {
  if (branches.empty()) throw std::invalid_argument("average_predictions: no branches");
  Prediction out;
  out.way = branches[0].way;
  out.posteriors.assign(branches[0].posteriors.size(), 0.0);
  for (const auto& b : branches) {
    if (b.posteriors.size() != out.posteriors.size() || b.way != out.way) {
      throw std::invalid_argument("average_predictions: branch shapes differ");
    }
    for (std::size_t i = 0; i < b.posteriors.size(); ++i) out.posteriors[i] += b.posteriors[i];
  }
  for (auto& v : out.posteriors) v /= static_cast<double>(branches.size());
  out.labels = argmax_rows(out.posteriors, out.way);
  return out;
}

Prediction predict_ensemble(Model& model, const std::vector<AugmentedSet>& sets, std::size_t way,
                            std::size_t rounds) {
  std::vector<Prediction> branches;
  for (const auto& s : sets) branches.push_back(predict_episode(model, s.support, s.query, way, rounds));
  return average_predictions(branches);
}

Prediction predict_ensemble(Model& model, const std::vector<Sample>& support, const std::vector<Sample>& query,
                            std::size_t way, const std::vector<AugPipeline>& pipelines, std::uint64_t base_seed,
                            std::size_t rounds) {
  const auto sets = build_augmented_sets(support, query, pipelines, base_seed, model.theta.config().input_hw);
  return predict_ensemble(model, sets, way, rounds);
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<Sample>& query) {
  if (predicted.size() != query.size() || query.empty()) {
    throw std::invalid_argument("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(query.size()) + " queries");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < query.size(); ++i) hits += predicted[i] == query[i].local_label;
  return static_cast<double>(hits) / static_cast<double>(query.size());
}

}  // namespace tmhfs

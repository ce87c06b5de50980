#include <numeric>
#include <stdexcept>

#include "tmhfs/numeric/ops.hpp"
#include "tmhfs/pipeline.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs {

namespace nm = numeric;

std::string to_string(Stage stage) { return stage == Stage::trained ? "trained" : "finetuned"; }

Stage parse_stage(std::string_view name) {
  if (name == "trained") return Stage::trained;
  if (name == "finetuned") return Stage::finetuned;
  throw std::invalid_argument("unknown model stage '" + std::string(name) + "'");
}

template <typename T>
BasicModel<T> BasicModel<T>::init(const BackboneConfig& backbone, std::size_t source_classes, std::uint64_t seed) {
  BasicModel m;
  m.theta = Backbone<T>(backbone, derive_seed({seed, 1}));
  m.phi = ConfidenceNet<T>(backbone.channels, derive_seed({seed, 2}));
  m.omega = GlobalPrototypes<T>(source_classes, backbone.channels, derive_seed({seed, 3}));
  m.delta = SemanticHead<T>(backbone.channels, source_classes, derive_seed({seed, 4}));
  m.stage = Stage::trained;
  return m;
}

template <typename T>
std::vector<BasicTensor<T>> BasicModel<T>::parameters() const {
  std::vector<BasicTensor<T>> out = theta.parameters();
  for (auto& p : phi.parameters()) out.push_back(p);
  for (auto& p : omega.parameters()) out.push_back(p);
  for (auto& p : delta.parameters()) out.push_back(p);
  return out;
}

namespace {

template <typename T>
void append_prefixed(std::vector<NamedTensor<T>>& out, const std::string& prefix,
                     const std::vector<NamedTensor<T>>& part) {
  for (const auto& nt : part) out.push_back({prefix + nt.name, nt.tensor});
}

template <typename T>
std::vector<NamedTensor<T>> strip_prefix(const std::vector<NamedTensor<T>>& all, const std::string& prefix) {
  std::vector<NamedTensor<T>> out;
  for (const auto& nt : all) {
    if (nt.name.compare(0, prefix.size(), prefix) == 0) out.push_back({nt.name.substr(prefix.size()), nt.tensor});
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> BasicModel<T>::state() const {
  std::vector<NamedTensor<T>> out;
  append_prefixed(out, "theta.", theta.state());
  append_prefixed(out, "phi.", phi.state());
  append_prefixed(out, "omega.", omega.state());
  append_prefixed(out, "delta.", delta.state());
  return out;
}

template <typename T>
void BasicModel<T>::load_state(const std::vector<NamedTensor<T>>& state) {
  theta.load_state(strip_prefix(state, "theta."));
  phi.load_state(strip_prefix(state, "phi."));
  omega.load_state(strip_prefix(state, "omega."));
  delta.load_state(strip_prefix(state, "delta."));
}

template <typename T>
BasicModel<T> BasicModel<T>::clone() const {
  return {theta.clone(), phi.clone(), omega.clone(), delta.clone(), stage};
}

template <typename T>
BasicTensor<T> images_to_tensor(const std::vector<Sample>& samples, std::size_t side) {
  if (samples.empty()) throw std::invalid_argument("images_to_tensor: no samples");
  const std::size_t per = side * side * 3;
  numeric::Buffer<T> data(samples.size() * per);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Image& img = samples[i].image;
    const Image scaled = img.h == side && img.w == side ? Image() : op_scale(img, side);
    const auto& px = scaled.pixels.empty() ? img.pixels : scaled.pixels;
    std::copy(px.begin(), px.end(), data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return BasicTensor<T>({samples.size(), side, side, 3}, std::move(data));
}

template <typename T>
EpisodeTensors<T> episode_tensors(const Episode& episode, std::size_t side) {
  EpisodeTensors<T> out;
  std::vector<Sample> all = episode.support;
  all.insert(all.end(), episode.query.begin(), episode.query.end());
  out.images = images_to_tensor<T>(all, side);
  out.n_support = episode.support.size();
  out.way = episode.way();
  for (const auto& s : episode.support) {
    out.support_local.push_back(s.local_label);
    out.support_global.push_back(s.global_label);
  }
  for (const auto& q : episode.query) {
    out.query_local.push_back(q.local_label);
    out.query_global.push_back(q.global_label);
  }
  return out;
}

template <typename T>
EpisodeFeatures<T> embed_episode(BasicModel<T>& model, const EpisodeTensors<T>& ep, NormMode mode) {
  auto fm = model.theta.forward(ep.images, mode);
  const std::size_t n = ep.images.dim(0);
  std::vector<std::size_t> s_idx(ep.n_support), q_idx(n - ep.n_support);
  std::iota(s_idx.begin(), s_idx.end(), 0);
  std::iota(q_idx.begin(), q_idx.end(), ep.n_support);
  EpisodeFeatures<T> f;
  f.all_pooled = fm.pooled;
  f.support_pooled = nm::take_rows(fm.pooled, std::span<const std::size_t>(s_idx));
  if (!q_idx.empty()) {
    f.query_pooled = nm::take_rows(fm.pooled, std::span<const std::size_t>(q_idx));
    f.query_dense = nm::take_rows(fm.dense, std::span<const std::size_t>(q_idx));
  }
  return f;
}

template <typename T>
BasicTensor<T> nll(const BasicTensor<T>& log_probs, std::span<const std::size_t> labels) {
  return nm::neg(nm::mean(nm::pick(log_probs, labels)));
}

template <typename T>
BasicTensor<T> loss_instance(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep, const ConfidenceNet<T>& phi,
                             std::size_t rounds) {
  if (!f.query_pooled.defined()) throw std::invalid_argument("loss_instance: episode has no query");
  auto r = transduce(f.support_pooled, std::span<const std::size_t>(ep.support_local), f.query_pooled, ep.way, phi,
                     rounds);
  return nll(r.log_posteriors, std::span<const std::size_t>(ep.query_local));
}

template <typename T>
BasicTensor<T> loss_dense(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep,
                          const GlobalPrototypes<T>& omega) {
  if (!f.query_dense.defined()) throw std::invalid_argument("loss_dense: episode has no query");
  const auto& s = f.query_dense.shape();
  const std::size_t pixels = s[1] * s[2];
  auto flat = nm::reshape(f.query_dense, {s[0] * pixels, s[3]});
  std::vector<std::size_t> labels;
  labels.reserve(s[0] * pixels);
  for (std::size_t q = 0; q < s[0]; ++q) labels.insert(labels.end(), pixels, ep.query_global[q]);
  return nll(dfmn_log_posterior(flat, omega), std::span<const std::size_t>(labels));
}

template <typename T>
BasicTensor<T> loss_semantic(const EpisodeFeatures<T>& f, const EpisodeTensors<T>& ep, const SemanticHead<T>& delta,
                             std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("loss_semantic: batch must be >= 1");
  std::vector<std::size_t> labels = ep.support_global;
  labels.insert(labels.end(), ep.query_global.begin(), ep.query_global.end());
  auto log_probs = nm::log_softmax(delta.logits(f.all_pooled));
  const std::size_t n = labels.size();
  BasicTensor<T> total;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    auto part = nll(nm::take_rows(log_probs, std::span<const std::size_t>(idx)),
                    std::span<const std::size_t>(labels.data() + start, count));
    auto weighted = nm::scale(part, static_cast<T>(count) / static_cast<T>(n));
    total = total.defined() ? nm::add(total, weighted) : weighted;
  }
  return total;
}

template <typename T>
LossTerms<T> loss_combined(BasicModel<T>& model, const EpisodeTensors<T>& ep, const LossWeights& weights,
                           std::size_t rounds, std::size_t semantic_batch) {
  auto f = embed_episode(model, ep, NormMode::batch);
  LossTerms<T> t;
  t.instance = loss_instance(f, ep, model.phi, rounds);
  t.semantic = loss_semantic(f, ep, model.delta, semantic_batch);
  t.dense = loss_dense(f, ep, model.omega);
  t.total = nm::add(nm::add(nm::scale(t.instance, static_cast<T>(weights.lambda)),
                            nm::scale(t.semantic, static_cast<T>(weights.alpha))),
                    t.dense);
  return t;
}

#define TMHFS_INSTANTIATE_PIPELINE(T)                                                                              \
  template struct BasicModel<T>;                                                                                   \
  template BasicTensor<T> images_to_tensor(const std::vector<Sample>&, std::size_t);                              \
  template EpisodeTensors<T> episode_tensors(const Episode&, std::size_t);                                        \
  template EpisodeFeatures<T> embed_episode(BasicModel<T>&, const EpisodeTensors<T>&, NormMode);                  \
  template BasicTensor<T> nll(const BasicTensor<T>&, std::span<const std::size_t>);                               \
  template BasicTensor<T> loss_instance(const EpisodeFeatures<T>&, const EpisodeTensors<T>&,                      \
                                        const ConfidenceNet<T>&, std::size_t);                                    \
  template BasicTensor<T> loss_dense(const EpisodeFeatures<T>&, const EpisodeTensors<T>&,                         \
                                     const GlobalPrototypes<T>&);                                                  \
  template BasicTensor<T> loss_semantic(const EpisodeFeatures<T>&, const EpisodeTensors<T>&,                      \
                                        const SemanticHead<T>&, std::size_t);                                     \
  template LossTerms<T> loss_combined(BasicModel<T>&, const EpisodeTensors<T>&, const LossWeights&, std::size_t, \
                                      std::size_t);

TMHFS_INSTANTIATE_PIPELINE(float)
TMHFS_INSTANTIATE_PIPELINE(double)

}  // namespace tmhfs

#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "naive.hpp"
#include "tmhfs/numeric/ops.hpp"
#include "tmhfs/pipeline.hpp"

namespace fs = std::filesystem;
namespace nm = tmhfs::numeric;
using nm::Tensor64;
using tmhfs::BasicModel;
using tmhfs::EpisodeFeatures;
using tmhfs::EpisodeTensors;
using tmhfs::FinetuneConfig;
using tmhfs::Model;
using tmhfs::NormMode;
using tmhfs::Prediction;
using tmhfs::Sample;
using tmhfs::Stage;

namespace {

using Model64 = BasicModel<double>;

Model64 tiny_model64(std::size_t global_classes, std::uint64_t seed) {
  return Model64::init(fixtures::tiny_backbone(), global_classes, seed);
}

Model tiny_model(std::size_t global_classes, std::uint64_t seed) {
  return Model::init(fixtures::tiny_backbone(), global_classes, seed);
}

template <typename T>
std::vector<std::vector<T>> values_of(const std::vector<tmhfs::NamedTensor<T>>& state) {
  std::vector<std::vector<T>> out;
  for (const auto& nt : state) out.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

template <typename T>
std::vector<std::vector<T>> values_of(const std::vector<nm::BasicTensor<T>>& tensors) {
  std::vector<std::vector<T>> out;
  for (const auto& t : tensors) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

// Features where every support and query row is the same vector, so the
// instance posterior is uniform.
EpisodeFeatures<double> constant_features(std::size_t n_support, std::size_t n_query, std::size_t k) {
  EpisodeFeatures<double> f;
  f.support_pooled = Tensor64({n_support, k}, 0.5);
  f.query_pooled = Tensor64({n_query, k}, 0.5);
  f.query_dense = Tensor64({n_query, 2, 2, k}, 0.5);
  f.all_pooled = Tensor64({n_support + n_query, k}, 0.5);
  return f;
}

EpisodeTensors<double> label_only_episode(std::size_t way, std::size_t shot, std::size_t query) {
  EpisodeTensors<double> ep;
  ep.way = way;
  ep.n_support = way * shot;
  for (std::size_t c = 0; c < way; ++c) {
    for (std::size_t i = 0; i < shot; ++i) {
      ep.support_local.push_back(c);
      ep.support_global.push_back(c);
    }
    for (std::size_t i = 0; i < query; ++i) {
      ep.query_local.push_back(c);
      ep.query_global.push_back(c);
    }
  }
  ep.images = Tensor64({way * (shot + query), 1, 1, 3});
  return ep;
}

double row_sum_error(const std::vector<double>& rows, std::size_t width) {
  double worst = 0;
  for (std::size_t r = 0; r * width < rows.size(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < width; ++c) s += rows[r * width + c];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

std::vector<Sample> flat_support(float low, float high, std::size_t shot, std::uint64_t seed) {
  tmhfs::Rng rng(seed);
  std::vector<Sample> out;
  std::uint64_t id = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < shot; ++i) {
      tmhfs::Image img(8, 8);
      for (auto& v : img.pixels) v = (c == 0 ? low : high) + static_cast<float>(rng.uniform(-0.02, 0.02));
      out.push_back({img, c, c, id++});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("nll of a one-hot correct posterior is zero") {
  Tensor64 lp({2, 2}, {0.0, -50.0, -50.0, 0.0});
  std::vector<std::size_t> y{0, 1};
  CHECK(tmhfs::nll(lp, std::span<const std::size_t>(y)).item() == 0.0);
}

TEST_CASE("uniform instance posterior gives ln C") {
  auto ep = label_only_episode(5, 2, 3);
  auto f = constant_features(10, 15, 4);
  auto phi = tmhfs::ConfidenceNet<double>(4, 1);
  for (std::size_t rounds : {0u, 1u, 3u}) {
    CHECK(tmhfs::loss_instance(f, ep, phi, rounds).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
}

TEST_CASE("equal global prototypes give ln C_g for the dense loss") {
  auto ep = label_only_episode(3, 1, 2);
  tmhfs::Rng rng(5);
  auto f = constant_features(3, 6, 4);
  for (auto& v : f.query_dense.data()) v = rng.uniform(-1, 1);
  tmhfs::GlobalPrototypes<double> omega(Tensor64({6, 4}, 0.3));
  CHECK(tmhfs::loss_dense(f, ep, omega).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("dense loss on a 1x1 grid is the single-pixel loss, and ignores query order") {
  auto ep = label_only_episode(3, 1, 2);
  tmhfs::Rng rng(6);
  tmhfs::GlobalPrototypes<double> omega(4, 4, 9);
  EpisodeFeatures<double> f;
  f.query_pooled = Tensor64({6, 4});
  for (auto& v : f.query_pooled.data()) v = rng.uniform(-1, 1);
  f.query_dense = nm::reshape(f.query_pooled, {6, 1, 1, 4});
  const double dense = tmhfs::loss_dense(f, ep, omega).item();
  const double single =
      tmhfs::nll(tmhfs::dfmn_log_posterior(f.query_pooled, omega), std::span<const std::size_t>(ep.query_global))
          .item();
  CHECK(dense == doctest::Approx(single).epsilon(1e-14));

  std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  auto shuffled = ep;
  EpisodeFeatures<double> g;
  g.query_dense = nm::take_rows(f.query_dense, std::span<const std::size_t>(perm));
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.query_global[i] = ep.query_global[perm[i]];
  CHECK(tmhfs::loss_dense(g, shuffled, omega).item() == doctest::Approx(dense).epsilon(1e-14));
}

TEST_CASE("semantic loss: uniform head, duplication and batch partition") {
  auto ep = label_only_episode(4, 1, 2);
  tmhfs::Rng rng(7);
  auto f = constant_features(4, 8, 4);
  for (auto& v : f.all_pooled.data()) v = rng.uniform(-1, 1);
  tmhfs::SemanticHead<double> uniform(Tensor64({4, 4}, 0.0), Tensor64({4}, 0.0));
  CHECK(tmhfs::loss_semantic(f, ep, uniform, 4).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  tmhfs::SemanticHead<double> head(4, 4, 11);
  const double base = tmhfs::loss_semantic(f, ep, head, 4).item();
  for (std::size_t batch : {1u, 3u, 5u, 100u}) {
    CHECK(tmhfs::loss_semantic(f, ep, head, batch).item() == doctest::Approx(base).epsilon(1e-13));
  }

  // S and Q concatenated with themselves: rows are ordered S, Q, S', Q'.
  auto twice = ep;
  twice.n_support = 8;
  twice.support_global.insert(twice.support_global.end(), ep.query_global.begin(), ep.query_global.end());
  twice.query_global = twice.support_global;
  EpisodeFeatures<double> g;
  std::vector<Tensor64> parts{f.all_pooled, f.all_pooled};
  g.all_pooled = nm::concat<double>(parts, 0);
  CHECK(tmhfs::loss_semantic(g, twice, head, 4).item() == doctest::Approx(base).epsilon(1e-13));

  // near-perfect classifier: huge weights on one-hot features
  EpisodeFeatures<double> h;
  h.all_pooled = Tensor64({12, 4}, 0.0);
  std::vector<std::size_t> labels = ep.support_global;
  labels.insert(labels.end(), ep.query_global.begin(), ep.query_global.end());
  for (std::size_t i = 0; i < 12; ++i) h.all_pooled.data()[i * 4 + labels[i]] = 1.0;
  Tensor64 eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye.data()[i * 5] = 100.0;
  tmhfs::SemanticHead<double> perfect(eye, Tensor64({4}, 0.0));
  CHECK(tmhfs::loss_semantic(h, ep, perfect, 4).item() < 1e-40);
}

TEST_CASE("combined loss is the weighted sum of its terms") {
  auto model = tiny_model64(3, 21);
  auto ep = tmhfs::episode_tensors<double>(fixtures::random_episode(2, 1, 2, 8, 3, 22), 8);
  auto t = tmhfs::loss_combined(model, ep, {0.2, 0.4}, 1, 4);
  CHECK(t.total.item() ==
        doctest::Approx(0.2 * t.instance.item() + 0.4 * t.semantic.item() + t.dense.item()).epsilon(1e-14));

  auto z = tmhfs::loss_combined(model, ep, {0.0, 0.0}, 1, 4);
  CHECK(z.total.item() == z.dense.item());
  nm::Tape<double>::current().clear();
}

TEST_CASE("lambda = alpha = 0 leaves no gradient on phi or delta") {
  auto model = tiny_model64(3, 23);
  auto ep = tmhfs::episode_tensors<double>(fixtures::random_episode(2, 1, 2, 8, 3, 24), 8);
  auto params = model.parameters();
  for (auto& p : params) p.zero_grad();
  auto t = tmhfs::loss_combined(model, ep, {0.0, 0.0}, 1, 4);
  nm::backward(t.total);
  for (auto& p : model.phi.parameters())
    for (double g : p.grad()) CHECK(g == 0.0);
  for (auto& p : model.delta.parameters())
    for (double g : p.grad()) CHECK(g == 0.0);
  double theta_norm = 0;
  for (auto& p : model.theta.parameters())
    for (double g : p.grad()) theta_norm += g * g;
  CHECK(theta_norm > 0);
}

TEST_CASE("loss gradients match finite differences on tiny episodes") {
  for (std::uint64_t seed : {31u, 32u}) {
    auto model = tiny_model64(3, seed);
    auto ep = tmhfs::episode_tensors<double>(fixtures::random_episode(2, 1, 2, 8, 3, seed + 100), 8);
    auto feats = [&] { return tmhfs::embed_episode(model, ep, NormMode::batch); };
    CHECK(fixtures::max_grad_error(model, [&] { return tmhfs::loss_instance(feats(), ep, model.phi, 1); }) < 1e-4);
    CHECK(fixtures::max_grad_error(model, [&] { return tmhfs::loss_dense(feats(), ep, model.omega); }) < 1e-4);
    CHECK(fixtures::max_grad_error(model, [&] { return tmhfs::loss_semantic(feats(), ep, model.delta, 4); }) < 1e-4);
    CHECK(fixtures::max_grad_error(model, [&] { return tmhfs::loss_combined(model, ep, {0.2, 0.4}, 1, 4).total; }) <
          1e-4);
  }
}

TEST_CASE("meta_train with zero episodes returns the initial state") {
  fixtures::TempDir dir("mt0");
  tmhfs::SyntheticSpec spec;
  spec.classes = 3;
  spec.samples_per_class = 4;
  spec.hw = 8;
  const auto ds = tmhfs::gen_synthetic(spec, dir.path / "src");
  tmhfs::TrainConfig cfg;
  cfg.backbone = fixtures::tiny_backbone();
  cfg.episodes = 0;
  cfg.way = 2;
  cfg.shot = 1;
  cfg.query = 2;
  cfg.seed = 3;
  auto a = tmhfs::meta_train(ds, cfg);
  auto b = tmhfs::meta_train(ds, cfg);
  CHECK(values_of(a.model.state()) == values_of(b.model.state()));
  CHECK(a.losses.empty());
  CHECK(a.model.stage == Stage::trained);

  cfg.way = 4;
  CHECK_THROWS_AS(tmhfs::meta_train(ds, cfg), std::invalid_argument);
}

TEST_CASE("meta_train is deterministic, logs per window and reports divergence") {
  fixtures::TempDir dir("mt");
  tmhfs::SyntheticSpec spec;
  spec.classes = 3;
  spec.samples_per_class = 4;
  spec.hw = 8;
  const auto ds = tmhfs::gen_synthetic(spec, dir.path / "src");
  tmhfs::TrainConfig cfg;
  cfg.backbone = fixtures::tiny_backbone();
  cfg.episodes = 5;
  cfg.way = 2;
  cfg.shot = 1;
  cfg.query = 2;
  cfg.log_every = 2;
  cfg.seed = 4;
  cfg.schedule = nm::LrSchedule({{0, 0.05}});
  std::vector<std::size_t> seen;
  auto a = tmhfs::meta_train(ds, cfg, [&](const tmhfs::TrainLogEntry& e) { seen.push_back(e.episode); });
  auto b = tmhfs::meta_train(ds, cfg);
  CHECK(seen == std::vector<std::size_t>{1, 3, 4});
  CHECK(a.losses == b.losses);
  tmhfs::save_checkpoint(dir.path / "a.ckpt", a.model);
  tmhfs::save_checkpoint(dir.path / "b.ckpt", b.model);
  std::ifstream fa(dir.path / "a.ckpt", std::ios::binary), fb(dir.path / "b.ckpt", std::ios::binary);
  std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(sa == sb);
  CHECK(a.log[0].total == doctest::Approx((a.losses[0] + a.losses[1]) / 2));

  cfg.schedule = nm::LrSchedule({{0, 1e30}});
  CHECK_THROWS_AS(tmhfs::meta_train(ds, cfg), tmhfs::DivergenceError);
}

// Wide enough for Eigen's vectorized kernels, which are sensitive to operand
// alignment; the second run sees a heap already used by the first.
TEST_CASE("meta_train repeats bit for bit in one process at desk width") {
  fixtures::TempDir dir("mt_wide");
  tmhfs::SyntheticSpec spec;
  spec.classes = 8;
  spec.samples_per_class = 10;
  spec.hw = 32;
  const auto ds = tmhfs::gen_synthetic(spec, dir.path / "src");
  tmhfs::TrainConfig cfg;
  cfg.backbone = {tmhfs::Arch::conv4, 32, 32, 4};
  cfg.episodes = 6;
  cfg.way = 8;
  cfg.shot = 5;
  cfg.query = 5;
  cfg.seed = 1;
  auto a = tmhfs::meta_train(ds, cfg);
  auto b = tmhfs::meta_train(ds, cfg);
  CHECK(a.losses == b.losses);
  CHECK(values_of(a.model.state()) == values_of(b.model.state()));
}

TEST_CASE("fine_tune with zero epochs keeps theta and never touches phi or omega") {
  auto model = tiny_model(3, 41);
  auto ep = fixtures::random_episode(2, 2, 1, 8, 3, 42);
  FinetuneConfig cfg;
  cfg.epochs = 0;
  const auto theta0 = values_of(model.theta.state());
  auto r = tmhfs::fine_tune(model, ep.support, 2, cfg, 1);
  CHECK(values_of(r.model.theta.state()) == theta0);
  CHECK(r.model.stage == Stage::finetuned);
  CHECK(r.model.delta.classes() == 2);
  CHECK(r.losses.empty());

  cfg.epochs = 3;
  auto t = tmhfs::fine_tune(model, ep.support, 2, cfg, 1);
  CHECK(values_of(t.model.phi.state()) == values_of(model.phi.state()));
  CHECK(values_of(t.model.omega.state()) == values_of(model.omega.state()));
  CHECK(values_of(t.model.theta.state()) != theta0);
  CHECK(values_of(model.theta.state()) == theta0);
  CHECK(t.losses.size() == 3);

  CHECK_THROWS_AS(tmhfs::fine_tune(model, {}, 2, cfg, 1), std::invalid_argument);
  CHECK_THROWS_AS(tmhfs::fine_tune(t.model, ep.support, 2, cfg, 1), std::logic_error);
}

TEST_CASE("fine_tune with one identity pipeline matches the plain run bit for bit") {
  auto model = tiny_model(3, 43);
  auto ep = fixtures::random_episode(3, 2, 1, 8, 3, 44);
  FinetuneConfig plain;
  plain.epochs = 4;
  FinetuneConfig aug = plain;
  aug.use_augmentation = true;
  aug.pipelines = {"S"};
  auto a = tmhfs::fine_tune(model, ep.support, 3, plain, 9);
  auto b = tmhfs::fine_tune(model, ep.support, 3, aug, 9);
  CHECK(a.losses == b.losses);
  CHECK(values_of(a.model.state()) == values_of(b.model.state()));
}

TEST_CASE("fine_tune gradient clipping") {
  auto model = tiny_model(3, 47);
  auto ep = fixtures::random_episode(3, 2, 1, 8, 3, 48);
  FinetuneConfig off;
  off.epochs = 3;
  FinetuneConfig loose = off, tight = off;
  loose.clip_norm = 1e30;
  tight.clip_norm = 1e-3;
  auto a = tmhfs::fine_tune(model, ep.support, 3, off, 5);
  auto b = tmhfs::fine_tune(model, ep.support, 3, loose, 5);
  auto c = tmhfs::fine_tune(model, ep.support, 3, tight, 5);
  CHECK(a.losses == b.losses);
  CHECK(values_of(a.model.state()) == values_of(b.model.state()));
  CHECK(a.losses.front() == c.losses.front());
  CHECK(values_of(a.model.theta.state()) != values_of(c.model.theta.state()));
}

TEST_CASE("fine_tune separates a linearly separable support set") {
  const auto support = flat_support(0.1f, 0.9f, 5, 46);
  const auto images = tmhfs::images_to_tensor<float>(support, 8);
  std::vector<std::size_t> labels;
  for (const auto& s : support) labels.push_back(s.local_label);
  FinetuneConfig cfg;
  const std::size_t steps = cfg.epochs * 3;

  for (float gain : {1.0f, 4.0f}) {
    CAPTURE(gain);
    auto model = tiny_model(3, 45);
    {
      // settle the running statistics the way meta-training would; fresh
      // unit-variance averages shrink pooled features to ~1e-3
      nm::NoGradGuard guard;
      for (int i = 0; i < 30; ++i) model.theta.forward(images, NormMode::batch);
    }
    for (auto& nt : model.theta.state())
      if (nt.name == "block3.layer0.gamma")
        for (auto& v : nt.tensor.data()) v *= gain;
    std::vector<double> frozen;
    {
      nm::NoGradGuard guard;
      auto f = model.theta.forward(images, NormMode::running).pooled;
      frozen.assign(f.data().begin(), f.data().end());
    }
    const double oracle = naive::logistic_descent(frozen, 4, labels, 2, cfg.lr, steps);

    auto r = tmhfs::fine_tune(model, support, 2, cfg, 2);
    // last epoch: three batches of sizes 4, 4, 2
    const std::size_t n = r.losses.size();
    const double last = (4 * r.losses[n - 3] + 4 * r.losses[n - 2] + 2 * r.losses[n - 1]) / 10;
    CHECK(last <= oracle);
    if (gain > 1.0f) CHECK(last < 0.1);
  }
}

TEST_CASE("predict_episode recovers support samples and returns distributions") {
  auto model = tiny_model(3, 51);
  const auto support = flat_support(0.1f, 0.9f, 2, 52);
  std::vector<Sample> query{support[3], support[0]};
  auto p = tmhfs::predict_episode(model, support, query, 2, 10);
  CHECK(p.labels == std::vector<std::size_t>{1, 0});
  CHECK(p.posteriors.size() == 4);
  CHECK(row_sum_error(p.posteriors, 2) < 1e-6);

  auto none = tmhfs::predict_episode(model, support, {}, 2, 10);
  CHECK(none.labels.empty());

  auto ep = fixtures::random_episode(3, 2, 2, 8, 3, 53);
  auto r = tmhfs::predict_episode(model, ep.support, ep.query, 3, 10);
  CHECK(row_sum_error(r.posteriors, 3) < 1e-6);
  CHECK(tmhfs::accuracy(r.labels, ep.query) >= 0.0);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(tmhfs::argmax_rows({0.5, 0.5, 0.2, 0.4, 0.4}, 5) == std::vector<std::size_t>{0});
  CHECK(tmhfs::argmax_rows({0.25, 0.25, 0.5, 0.5, 0.25, 0.25}, 3) == std::vector<std::size_t>{2, 0});
}

TEST_CASE("ensemble averages branch posteriors") {
  Prediction a{{0}, {0.6, 0.4}, 2}, b{{1}, {0.2, 0.8}, 2};
  auto m = tmhfs::average_predictions({a, b});
  CHECK(m.posteriors[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(m.posteriors[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.labels == std::vector<std::size_t>{1});
  auto swapped = tmhfs::average_predictions({b, a});
  CHECK(swapped.labels == m.labels);
  for (std::size_t i = 0; i < 2; ++i) CHECK(swapped.posteriors[i] == doctest::Approx(m.posteriors[i]).epsilon(1e-15));
  CHECK_THROWS_AS(tmhfs::average_predictions({}), std::invalid_argument);
}

TEST_CASE("identity ensemble equals a single prediction") {
  auto model = tiny_model(3, 61);
  auto ep = fixtures::random_episode(3, 2, 2, 8, 3, 62);
  auto single = tmhfs::predict_episode(model, ep.support, ep.query, 3, 10);
  auto pipes = tmhfs::parse_pipelines({"S", "S", "S"});
  auto ens = tmhfs::predict_ensemble(model, ep.support, ep.query, 3, pipes, 5, 10);
  CHECK(ens.labels == single.labels);
  for (std::size_t i = 0; i < single.posteriors.size(); ++i) {
    CHECK(std::abs(ens.posteriors[i] - single.posteriors[i]) < 1e-6);
  }
  auto mixed = tmhfs::predict_ensemble(model, ep.support, ep.query, 3, tmhfs::parse_pipelines(tmhfs::pipeline_set_a()),
                                       5, 10);
  CHECK(row_sum_error(mixed.posteriors, 3) < 1e-6);
}

TEST_CASE("checkpoint round trip preserves every tensor and the stage") {
  fixtures::TempDir dir("ckpt");
  auto model = tiny_model(5, 71);
  auto ep = fixtures::random_episode(3, 2, 1, 8, 5, 72);
  FinetuneConfig cfg;
  cfg.epochs = 1;
  auto tuned = tmhfs::fine_tune(model, ep.support, 3, cfg, 3).model;
  for (const Model* m : {&model, &tuned}) {
    tmhfs::save_checkpoint(dir.path / "m.ckpt", *m);
    auto back = tmhfs::load_checkpoint(dir.path / "m.ckpt");
    CHECK(back.stage == m->stage);
    CHECK(back.theta.config() == m->theta.config());
    CHECK(back.delta.classes() == m->delta.classes());
    CHECK(values_of(back.state()) == values_of(m->state()));
  }

  std::ofstream(dir.path / "bad.ckpt", std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(tmhfs::load_checkpoint(dir.path / "bad.ckpt"), tmhfs::DataError);
  CHECK_THROWS_AS(tmhfs::load_checkpoint(dir.path / "missing.ckpt"), tmhfs::DataError);
  const auto full = fs::file_size(dir.path / "m.ckpt");
  fs::resize_file(dir.path / "m.ckpt", full - 8);
  try {
    tmhfs::load_checkpoint(dir.path / "m.ckpt");
    FAIL("truncated checkpoint loaded");
  } catch (const tmhfs::DataError& e) {
    CHECK(std::string(e.what()).find("past end of file") != std::string::npos);
  }
}

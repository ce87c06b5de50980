#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "tmhfs/cli.hpp"

namespace tmhfs::cli {

namespace {

constexpr std::uint64_t kEpisodeStream = 0xE7A1;
constexpr std::uint64_t kFinetuneStream = 0xF1;
constexpr std::uint64_t kAugmentStream = 0xA7;

bool wants(const std::vector<std::string>& methods, const char* name) {
  return std::find(methods.begin(), methods.end(), name) != methods.end();
}

}  // namespace

std::vector<EpisodeRecord> evaluate_episode(const Model& trained, const Dataset& target, const Config& cfg,
                                            const std::vector<std::string>& methods, std::size_t episode_id) {
  const auto& ec = cfg.eval;
  const std::uint64_t seed = derive_seed({ec.seed, kEpisodeStream, episode_id});
  const std::uint64_t ft_seed = derive_seed({cfg.finetune.seed, kFinetuneStream, episode_id});
  const Episode ep = sample_episode(target, ec.way, ec.shot, ec.query, seed);

  // tmhfs and tmhfs_inductive differ only in T, so they share one fine-tune
  std::optional<Model> tuned;
  if (wants(methods, "tmhfs") || wants(methods, "tmhfs_inductive")) {
    FinetuneConfig fc = cfg.finetune.config;
    fc.use_augmentation = false;
    tuned = fine_tune(trained, ep.support, ec.way, fc, ft_seed).model;
  }

  std::vector<EpisodeRecord> out;
  for (const auto& m : methods) {
    Prediction p;
    if (m == "mct") {
      Model base = trained.clone();
      p = predict_episode(base, ep.support, ep.query, ec.way, ec.t_test);
    } else if (m == "tmhfs") {
      p = predict_episode(*tuned, ep.support, ep.query, ec.way, ec.t_test);
    } else if (m == "tmhfs_inductive") {
      p = predict_episode(*tuned, ep.support, ep.query, ec.way, 0);
    } else if (m == "tmhfs_da") {
      FinetuneConfig fc = cfg.finetune.config;
      fc.use_augmentation = true;
      Model aug = fine_tune(trained, ep.support, ec.way, fc, ft_seed).model;
      p = predict_ensemble(aug, ep.support, ep.query, ec.way, parse_pipelines(cfg.augment.pipelines),
                           derive_seed({cfg.augment.seed, kAugmentStream, episode_id}), ec.t_test);
    } else {
      throw std::invalid_argument("unknown eval method '" + m + "'");
    }
    EpisodeRecord r;
    r.episode_id = episode_id;
    r.n_query = ep.query.size();
    for (std::size_t i = 0; i < ep.query.size(); ++i) r.n_correct += p.labels[i] == ep.query[i].local_label;
    r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_query);
    r.seed = seed;
    out.push_back(r);
  }
  return out;
}

EvalOutput run_evaluation(const Model& trained, const Dataset& target, const Config& cfg, std::size_t jobs) {
  const std::size_t n = cfg.eval.episodes;
  const auto& methods = cfg.eval.methods;
  std::vector<std::vector<EpisodeRecord>> per_episode(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t e = next.fetch_add(1);
      if (e >= n) return;
      try {
        per_episode[e] = evaluate_episode(trained, target, cfg, methods, e);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvalOutput out;
  out.records.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> accs;
    for (std::size_t e = 0; e < n; ++e) {
      out.records[m].push_back(per_episode[e][m]);
      accs.push_back(per_episode[e][m].accuracy);
    }
    out.reports.push_back(EvalReport::from(methods[m], std::move(accs), cfg.hash));
  }
  return out;
}

}  // namespace tmhfs::cli

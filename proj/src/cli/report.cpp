#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <stdexcept>

#include "tmhfs/cli.hpp"

namespace tmhfs::cli {

using nlohmann::json;

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double ci95_of(const std::vector<double>& values) {
  return 1.96 * sample_stddev(values) / std::sqrt(static_cast<double>(values.size()));
}

std::string format_accuracy(double mean, double ci95) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%% \xC2\xB1 %.2f%%", mean * 100.0, ci95 * 100.0);
  return buf;
}

EvalReport EvalReport::from(std::string method, std::vector<double> accs, std::string config_hash) {
  EvalReport r;
  r.method = std::move(method);
  r.mean = mean_of(accs);
  r.ci95 = ci95_of(accs);
  r.n_episodes = accs.size();
  r.per_episode_acc = std::move(accs);
  r.config_hash = std::move(config_hash);
  return r;
}

std::string EvalReport::to_json() const {
  const json j = {{"method", method},
                  {"n_episodes", n_episodes},
                  {"mean", mean},
                  {"ci95", ci95},
                  {"summary", summary()},
                  {"config_hash", config_hash},
                  {"per_episode_acc", per_episode_acc}};
  return j.dump(1) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    auto r = from(j.at("method").get<std::string>(), j.at("per_episode_acc").get<std::vector<double>>(),
                  j.at("config_hash").get<std::string>());
    if (r.n_episodes != j.at("n_episodes").get<std::size_t>()) {
      throw std::invalid_argument("n_episodes does not match per_episode_acc");
    }
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
}

std::string EpisodeRecord::to_json() const {
  const json j = {{"episode_id", episode_id},
                  {"n_query", n_query},
                  {"n_correct", n_correct},
                  {"accuracy", accuracy},
                  {"seed", seed}};
  return j.dump();
}

Comparison compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.per_episode_acc.size() != b.per_episode_acc.size()) {
    throw std::invalid_argument("reports cover " + std::to_string(a.per_episode_acc.size()) + " and " +
                                std::to_string(b.per_episode_acc.size()) + " episodes");
  }
  std::vector<double> delta(a.per_episode_acc.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = a.per_episode_acc[i] - b.per_episode_acc[i];
  return {mean_of(delta), ci95_of(delta)};
}

}  // namespace tmhfs::cli

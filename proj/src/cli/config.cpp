#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "tmhfs/cli.hpp"

namespace tmhfs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = root.at(name);
    if (!obj_.is_object()) throw std::invalid_argument("config: section '" + name + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      dst = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key); }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void path(const std::string& key, fs::path& dst, const fs::path& base) {
    std::string s;
    get(key, s);
    if (has(key)) dst = (fs::path(s).is_absolute() ? fs::path(s) : base / s).lexically_normal();
  }

  void finish() const {
    if (!obj_.is_object()) return;
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw std::invalid_argument("config: unknown key '" + name_ + "." + item.key() + "'");
    }
  }

 private:
  std::string name_;
  json obj_;
  std::set<std::string> seen_;
};

const char* kSections[] = {"data", "train", "finetune", "eval", "augment"};

}  // namespace

Config Config::parse(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  for (const auto& item : root.items()) {
    if (std::find(std::begin(kSections), std::end(kSections), item.key()) == std::end(kSections)) {
      throw std::invalid_argument("config: unknown section '" + item.key() + "'");
    }
  }

  Config c;
  c.data.source_dir = (base_dir / c.data.source_dir).lexically_normal();
  c.data.target_dir = (base_dir / c.data.target_dir).lexically_normal();
  c.train.checkpoint = (base_dir / c.train.checkpoint).lexically_normal();
  c.eval.out_dir = (base_dir / c.eval.out_dir).lexically_normal();

  Section d(root, "data");
  d.path("source_dir", c.data.source_dir, base_dir);
  d.path("target_dir", c.data.target_dir, base_dir);
  d.get("source_classes", c.data.source_classes);
  d.get("source_samples", c.data.source_samples);
  d.get("target_classes", c.data.target_classes);
  d.get("target_samples", c.data.target_samples);
  d.get("hw", c.data.hw);
  d.get("shift", c.data.shift);
  d.get("seed", c.data.seed);
  d.finish();
  if (!(c.data.shift >= 0.0 && c.data.shift <= 1.0)) {
    throw std::invalid_argument("config: data.shift must be in [0, 1]");
  }

  Section t(root, "train");
  auto& tc = c.train.config;
  std::string arch = to_string(tc.backbone.arch);
  t.get("arch", arch);
  tc.backbone.arch = parse_arch(arch);
  t.get("channels", tc.backbone.channels);
  t.get("input_hw", tc.backbone.input_hw);
  t.get("pooled_blocks", tc.backbone.pooled_blocks);
  t.get("episodes", tc.episodes);
  t.get("way", tc.way);
  t.get("shot", tc.shot);
  t.get("query", tc.query);
  t.get("lambda", tc.weights.lambda);
  t.get("alpha", tc.weights.alpha);
  t.get("semantic_batch", tc.semantic_batch);
  t.get("t_train", tc.t_train);
  t.get("log_every", tc.log_every);
  t.get("seed", tc.seed);
  t.path("checkpoint", c.train.checkpoint, base_dir);
  if (t.has("schedule")) {
    std::vector<numeric::Milestone> ms;
    const auto& arr = t.raw("schedule");
    if (!arr.is_array()) throw std::invalid_argument("config: train.schedule must be an array");
    for (const auto& m : arr) {
      if (!m.is_object() || m.size() != 2 || !m.contains("episode") || !m.contains("lr")) {
        throw std::invalid_argument("config: train.schedule entries must be {\"episode\": N, \"lr\": X}");
      }
      ms.push_back({m.at("episode").get<std::size_t>(), m.at("lr").get<double>()});
    }
    tc.schedule = numeric::LrSchedule(std::move(ms));
    c.train.schedule_given = true;
  }
  t.finish();
  if (!c.train.schedule_given) tc.schedule = numeric::LrSchedule::scaled_to(tc.episodes);
  tc.validate();

  Section f(root, "finetune");
  auto& fc = c.finetune.config;
  f.get("epochs", fc.epochs);
  f.get("augmented_epochs", fc.augmented_epochs);
  f.get("lr", fc.lr);
  f.get("batch", fc.batch);
  f.get("clip_norm", fc.clip_norm);
  f.get("seed", c.finetune.seed);
  f.finish();

  Section e(root, "eval");
  e.get("episodes", c.eval.episodes);
  e.get("way", c.eval.way);
  e.get("shot", c.eval.shot);
  e.get("query", c.eval.query);
  e.get("t_test", c.eval.t_test);
  e.get("methods", c.eval.methods);
  e.path("out_dir", c.eval.out_dir, base_dir);
  e.get("seed", c.eval.seed);
  e.finish();
  if (c.eval.episodes == 0) throw std::invalid_argument("config: eval.episodes must be >= 1");
  if (c.eval.way < 2 || c.eval.shot == 0 || c.eval.query == 0) {
    throw std::invalid_argument("config: eval needs way >= 2, shot >= 1, query >= 1");
  }
  if (c.eval.methods.empty()) throw std::invalid_argument("config: eval.methods is empty");
  for (const auto& m : c.eval.methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("config: unknown eval method '" + m +
                                  "' (expected mct, tmhfs, tmhfs_inductive or tmhfs_da)");
    }
  }

  Section a(root, "augment");
  if (a.has("pipelines")) {
    const auto& p = a.raw("pipelines");
    if (p.is_string() && p.get<std::string>() == "A") {
      c.augment.pipelines = pipeline_set_a();
    } else if (p.is_string() && p.get<std::string>() == "B") {
      c.augment.pipelines = pipeline_set_b();
    } else if (p.is_array()) {
      c.augment.pipelines = p.get<std::vector<std::string>>();
    } else {
      throw std::invalid_argument("config: augment.pipelines must be \"A\", \"B\" or a list of pipeline strings");
    }
  }
  a.get("seed", c.augment.seed);
  a.finish();
  if (c.augment.pipelines.empty()) throw std::invalid_argument("config: augment.pipelines is empty");
  parse_pipelines(c.augment.pipelines);
  fc.pipelines = c.augment.pipelines;
  fc.validate();

  c.rehash();
  return c;
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": byte 0: cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void Config::override_seed(std::uint64_t seed) {
  data.seed = seed;
  train.config.seed = seed;
  finetune.seed = seed;
  eval.seed = seed;
  augment.seed = seed;
  rehash();
}

std::string Config::canonical_json() const {
  const auto& tc = train.config;
  json schedule = json::array();
  for (const auto& m : tc.schedule.milestones()) schedule.push_back({{"episode", m.episode}, {"lr", m.lr}});
  // paths are left out so the hash does not depend on where a run lives
  const json j = {
      {"data",
       {{"source_classes", data.source_classes},
        {"source_samples", data.source_samples},
        {"target_classes", data.target_classes},
        {"target_samples", data.target_samples},
        {"hw", data.hw},
        {"shift", data.shift},
        {"seed", data.seed}}},
      {"train",
       {{"arch", to_string(tc.backbone.arch)},
        {"channels", tc.backbone.channels},
        {"input_hw", tc.backbone.input_hw},
        {"pooled_blocks", tc.backbone.pooled_blocks},
        {"episodes", tc.episodes},
        {"way", tc.way},
        {"shot", tc.shot},
        {"query", tc.query},
        {"lambda", tc.weights.lambda},
        {"alpha", tc.weights.alpha},
        {"semantic_batch", tc.semantic_batch},
        {"t_train", tc.t_train},
        {"log_every", tc.log_every},
        {"schedule", schedule},
        {"seed", tc.seed}}},
      {"finetune",
       {{"epochs", finetune.config.epochs},
        {"augmented_epochs", finetune.config.augmented_epochs},
        {"lr", finetune.config.lr},
        {"batch", finetune.config.batch},
        {"clip_norm", finetune.config.clip_norm},
        {"seed", finetune.seed}}},
      {"eval",
       {{"episodes", eval.episodes},
        {"way", eval.way},
        {"shot", eval.shot},
        {"query", eval.query},
        {"t_test", eval.t_test},
        {"methods", eval.methods},
        {"seed", eval.seed}}},
      {"augment", {{"pipelines", augment.pipelines}, {"seed", augment.seed}}},
  };
  return j.dump();
}

void Config::rehash() { hash = fnv1a_hex(canonical_json()); }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tmhfs::cli

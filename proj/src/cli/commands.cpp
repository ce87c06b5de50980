#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tmhfs/cli.hpp"

namespace tmhfs::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  std::optional<double> shift;
  std::optional<std::size_t> hw;
  std::string checkpoint;
  std::vector<std::string> reports;
};

Config load_config(const Options& opt, bool required) {
  Config c;
  if (!opt.config.empty()) {
    if (!fs::exists(opt.config)) throw UsageError("config file not found: " + opt.config);
    c = Config::load(opt.config);
  } else if (required) {
    throw UsageError("--config is required");
  } else {
    c = Config::parse("{}", fs::current_path());
  }
  if (opt.seed) c.override_seed(*opt.seed);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(p.string() + ": byte 0: cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(p.string() + ": byte 0: cannot open for writing");
  out << text;
  if (!out) throw DataError(p.string() + ": byte 0: write failed");
}

int cmd_gen_data(const Options& opt, std::ostream& out) {
  Config c = load_config(opt, false);
  if (opt.shift) c.data.shift = *opt.shift;
  if (opt.hw) c.data.hw = *opt.hw;
  if (!(c.data.shift >= 0.0 && c.data.shift <= 1.0)) {
    throw UsageError("--shift must be in [0, 1], got " + std::to_string(c.data.shift));
  }
  fs::path source = c.data.source_dir, target = c.data.target_dir;
  if (!opt.out.empty()) {
    source = fs::path(opt.out) / "source";
    target = fs::path(opt.out) / "target";
  }
  SyntheticSpec s;
  s.classes = c.data.source_classes;
  s.samples_per_class = c.data.source_samples;
  s.hw = c.data.hw;
  s.seed = c.data.seed;
  s.name = "source";
  SyntheticSpec t = s;
  t.classes = c.data.target_classes;
  t.samples_per_class = c.data.target_samples;
  t.domain_shift = c.data.shift;
  t.class_offset = c.data.source_classes;  // disjoint class patterns
  t.name = "target";
  const auto a = gen_synthetic(s, source);
  const auto b = gen_synthetic(t, target);
  out << "source: " << a.class_count() << " classes, " << a.sample_count() << " samples -> " << source.string()
      << "\n";
  out << "target: " << b.class_count() << " classes, " << b.sample_count() << " samples, shift " << c.data.shift
      << " -> " << target.string() << "\n";
  return kOk;
}

int cmd_train(const Options& opt, std::ostream& out) {
  const Config c = load_config(opt, true);
  if (!fs::exists(c.data.source_dir / "meta.json")) {
    throw UsageError("source dataset not found: " + c.data.source_dir.string());
  }
  const auto source = Dataset::load(c.data.source_dir);
  const fs::path ckpt = opt.out.empty() ? c.train.checkpoint : fs::path(opt.out);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  fs::path log_path = ckpt;
  log_path += ".log";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError(log_path.string() + ": byte 0: cannot open for writing");
  auto result = meta_train(source, c.train.config, [&](const TrainLogEntry& e) {
    char line[160];
    std::snprintf(line, sizeof line, "episode %zu lr %.6g loss %.6f instance %.6f semantic %.6f dense %.6f\n",
                  e.episode + 1, e.lr, e.total, e.instance, e.semantic, e.dense);
    log << line;
    out << line;
  });
  save_checkpoint(ckpt, result.model);
  out << "checkpoint: " << ckpt.string() << " (config " << c.hash << ")\n";
  return kOk;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  const Config c = load_config(opt, true);
  const fs::path ckpt = opt.checkpoint.empty() ? c.train.checkpoint : fs::path(opt.checkpoint);
  if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt.string());
  if (!fs::exists(c.data.target_dir / "meta.json")) {
    throw UsageError("target dataset not found: " + c.data.target_dir.string());
  }
  const auto model = load_checkpoint(ckpt);
  if (model.stage != Stage::trained) throw UsageError("checkpoint is already fine-tuned: " + ckpt.string());
  const auto target = Dataset::load(c.data.target_dir);
  const fs::path dir = opt.out.empty() ? c.eval.out_dir : fs::path(opt.out);
  fs::create_directories(dir);

  const auto result = run_evaluation(model, target, c, opt.jobs);
  for (std::size_t m = 0; m < result.reports.size(); ++m) {
    const auto& r = result.reports[m];
    write_text(dir / (r.method + ".json"), r.to_json());
    std::string lines;
    for (const auto& rec : result.records[m]) lines += rec.to_json() + "\n";
    write_text(dir / (r.method + ".jsonl"), lines);
    out << r.method << ": " << r.summary() << " over " << r.n_episodes << " episodes\n";
  }
  return kOk;
}

int cmd_compare(const Options& opt, std::ostream& out) {
  if (opt.reports.size() != 2) throw UsageError("compare needs exactly two report files");
  const auto a = EvalReport::from_json(slurp(opt.reports[0]));
  const auto b = EvalReport::from_json(slurp(opt.reports[1]));
  if (a.n_episodes != b.n_episodes) {
    throw UsageError("episode counts differ: " + std::to_string(a.n_episodes) + " vs " +
                     std::to_string(b.n_episodes));
  }
  const auto d = compare_reports(a, b);
  const double unpaired = std::sqrt(a.ci95 * a.ci95 + b.ci95 * b.ci95);
  char delta[96];
  std::snprintf(delta, sizeof delta, "%+.2f%% \xC2\xB1 %.2f%% (paired), \xC2\xB1 %.2f%% (unpaired)",
                d.mean_delta * 100.0, d.ci95_delta * 100.0, unpaired * 100.0);
  out << "a: " << a.method << " " << a.summary() << "\n";
  out << "b: " << b.method << " " << b.summary() << "\n";
  out << "delta (a - b): " << delta << "\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-domain few-shot training and evaluation"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Replaces every seed in the config");
  app.add_option("--config", opt.config, "JSON config with sections data, train, finetune, eval, augment");
  app.add_option("--jobs", opt.jobs, "Evaluation workers")->check(CLI::PositiveNumber);
  app.add_option("--out", opt.out, "Output root (gen-data), checkpoint (train) or report directory (eval)");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic source and target datasets");
  gen->fallthrough();
  double shift = 0;
  std::size_t hw = 0;
  auto* shift_opt = gen->add_option("--shift", shift, "Target domain shift in [0, 1]");
  auto* hw_opt = gen->add_option("--hw", hw, "Image side");
  auto* train = app.add_subcommand("train", "Meta-train on the source dataset");
  train->fallthrough();
  auto* eval = app.add_subcommand("eval", "Fine-tune and evaluate on target episodes");
  eval->fallthrough();
  eval->add_option("--checkpoint", opt.checkpoint, "Overrides train.checkpoint");
  auto* compare = app.add_subcommand("compare", "Paired comparison of two eval reports");
  compare->fallthrough();
  compare->add_option("reports", opt.reports, "Two report JSON files")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (*seed_opt) opt.seed = seed;
  if (*shift_opt) opt.shift = shift;
  if (*hw_opt) opt.hw = hw;

  try {
    if (gen->parsed()) return cmd_gen_data(opt, out);
    if (train->parsed()) return cmd_train(opt, out);
    if (eval->parsed()) return cmd_eval(opt, out);
    return cmd_compare(opt, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    if (gen->parsed()) err << gen->help();
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const numeric::NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kDivergence;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace tmhfs::cli

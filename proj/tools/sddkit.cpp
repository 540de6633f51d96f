// sddkit: command-line driver for the detection pipeline.
//
//   synth     generate a synthetic corpus + feature store
//   extract   cache pooled utterance features for a manifest
//   plan      write a sub-dialogue augmentation plan
//   train     run the multi-seed protocol for one experiment
//   sweep     repeat the protocol over encoder blocks or M+ values
//   ensemble  majority-vote several trained systems
//   report    summary tables and a trend plot
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sddkit/sddkit.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public sdd::Error {
 public:
  using Error::Error;
};

void print_error(const char* kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

fs::path store_override(const fs::path& configured) {
  if (const char* env = std::getenv("SDDKIT_STORE"); env && *env) return env;
  return configured;
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path))
    throw UsageError(path.string() + " already exists; pass --force to overwrite");
}

void print_stats(const std::string& label, const sdd::SeedStats& s) {
  std::printf("%s F1-avg %.3f  F1-max %.3f  F1-std %.3f  (%zu seeds)\n", label.c_str(), s.f1_avg, s.f1_max, s.f1_std,
              s.n_seeds);
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> signal, noise_sigma;
  std::optional<std::size_t> n_pos, n_neg, dev_pos, dev_neg, t_min, t_max;
  std::optional<std::uint32_t> dim;
  bool force = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic corpus and its feature store");
  c->add_option("--config", a.config, "Synthetic config JSON");
  c->add_option("--out", a.out, "Output directory (manifest.jsonl + store/)")->required();
  c->add_option("--seed", a.seed, "Generator seed");
  c->add_option("--signal", a.signal, "Mean shift of positive sessions");
  c->add_option("--noise-sigma", a.noise_sigma, "Per-coordinate noise std");
  c->add_option("--n-pos", a.n_pos, "Positive training sessions");
  c->add_option("--n-neg", a.n_neg, "Negative training sessions");
  c->add_option("--dev-pos", a.dev_pos, "Positive dev sessions");
  c->add_option("--dev-neg", a.dev_neg, "Negative dev sessions");
  c->add_option("--t-min", a.t_min, "Minimum participant utterances per session");
  c->add_option("--t-max", a.t_max, "Maximum participant utterances per session");
  c->add_option("--dim", a.dim, "Feature dimension");
  c->add_flag("--force", a.force, "Overwrite an existing output directory");
}

int run_synth(const SynthArgs& a) {
  sdd::SyntheticConfig cfg;
  if (!a.config.empty()) cfg = sdd::synthetic_config_from_json(sdd::load_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (a.signal) cfg.signal = *a.signal;
  if (a.noise_sigma) cfg.noise_sigma = *a.noise_sigma;
  if (a.n_pos) cfg.n_pos = *a.n_pos;
  if (a.n_neg) cfg.n_neg = *a.n_neg;
  if (a.dev_pos) cfg.dev_pos = *a.dev_pos;
  if (a.dev_neg) cfg.dev_neg = *a.dev_neg;
  if (a.t_min) cfg.t_min = *a.t_min;
  if (a.t_max) cfg.t_max = *a.t_max;
  if (a.dim) cfg.dim = *a.dim;
  cfg.validate();
  const fs::path out(a.out);
  refuse_overwrite(out / "manifest.jsonl", a.force);
  if (a.force) fs::remove_all(out / "store");
  auto [corpus, store] = sdd::generate_synthetic(cfg, out / "store");
  sdd::write_manifest(out / "manifest.jsonl", corpus);
  auto tr = sdd::class_counts(corpus, sdd::Split::train);
  std::printf("wrote %zu sessions (train %zu+/%zu-) and %zu feature files to %s\n", corpus.size(), tr.n_pos, tr.n_neg,
              store.size(), out.string().c_str());
  return 0;
}

// ---- extract ----------------------------------------------------------------

struct ExtractArgs {
  std::string manifest, store, backend_config;
  std::vector<int> blocks;
};

void add_extract(CLI::App& app, ExtractArgs& a) {
  auto* c = app.add_subcommand("extract", "Cache pooled utterance features in a feature store");
  c->add_option("--manifest", a.manifest, "Corpus manifest (JSON lines)")->required();
  c->add_option("--store", a.store, "Feature store root (SDDKIT_STORE overrides)")->required();
  c->add_option("--backend-config", a.backend_config, "Backend config JSON")->required();
  c->add_option("--block", a.blocks, "Encoder block(s) of the first block-indexed backend")->delimiter(',');
}

int run_extract(const ExtractArgs& a) {
  auto corpus = sdd::load_manifest(a.manifest);
  const fs::path cfg_path(a.backend_config);
  auto file = sdd::backend_file_from_json(sdd::load_json_file(cfg_path), cfg_path.parent_path());
  sdd::FeatureStore store(store_override(a.store));

  std::vector<int> blocks = a.blocks;
  if (blocks.empty()) blocks.push_back(-1);
  for (int b : blocks) {
    auto specs = file.backends;
    if (b >= 0) {
      auto it = std::find_if(specs.begin(), specs.end(), [](const sdd::BackendSpec& s) {
        return s.kind == sdd::BackendKind::speech_frames || s.kind == sdd::BackendKind::synthetic;
      });
      if (it == specs.end()) throw sdd::ConfigError("--block given but no backend is block-indexed");
      it->block = b;
    }
    auto backend = sdd::make_backend(specs);
    auto report = sdd::materialize(store, corpus, *backend, file.options);
    std::printf("%s block %d: %zu written, %zu up to date, %zu flagged utterances\n", backend->tag().c_str(),
                backend->block(), report.written, report.skipped, report.flagged_utterances);
  }
  return 0;
}

// ---- plan -------------------------------------------------------------------

struct PlanArgs {
  std::string manifest, out, config;
  std::optional<std::int64_t> m_plus;
  std::optional<double> eps_low, eps_high;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  bool include_interviewer = false;
  bool force = false;
};

void add_plan(CLI::App& app, PlanArgs& a) {
  auto* c = app.add_subcommand("plan", "Write a sub-dialogue augmentation plan");
  c->add_option("--manifest", a.manifest, "Corpus manifest")->required();
  c->add_option("--out", a.out, "Plan file (JSON lines)")->required();
  c->add_option("--config", a.config, "JSON with augment parameters (or an experiment file)");
  c->add_option("--m-plus", a.m_plus, "Sub-dialogues per positive dialogue");
  c->add_option("--eps-low", a.eps_low, "Lower length fraction");
  c->add_option("--eps-high", a.eps_high, "Upper length fraction");
  c->add_option("--seed", a.seed, "Plan seed");
  c->add_option("--mode", a.mode, "Balance mode")->check(CLI::IsMember({"corrected", "literal"}));
  c->add_flag("--include-interviewer", a.include_interviewer, "Count interviewer turns as rows");
  c->add_flag("--force", a.force, "Overwrite an existing plan file");
}

int run_plan(const PlanArgs& a) {
  sdd::AugmentParams p;
  if (!a.config.empty()) {
    auto j = sdd::load_json_file(a.config);
    p = sdd::augment_params_from_json(j.contains("augment") ? j["augment"] : j);
  }
  if (a.m_plus) p.m_plus = *a.m_plus;
  if (a.eps_low) p.eps_low = *a.eps_low;
  if (a.eps_high) p.eps_high = *a.eps_high;
  if (a.seed) p.seed = *a.seed;
  if (a.mode) p.balance_mode = sdd::parse_balance_mode(*a.mode);
  if (a.include_interviewer) p.include_interviewer = true;
  p.validate();
  refuse_overwrite(a.out, a.force);
  auto corpus = sdd::load_manifest(a.manifest);
  auto plan = sdd::build_plan(corpus, p);
  sdd::write_plan(a.out, plan);
  std::size_t pos = 0;
  for (const auto& e : plan.entries) pos += e.label == 1;
  std::printf("M+ %lld  M- %lld  entries %zu (%zu positive, %zu negative)\n", static_cast<long long>(p.m_plus),
              static_cast<long long>(plan.m_minus), plan.entries.size(), pos, plan.entries.size() - pos);
  return 0;
}

// ---- train / sweep ------------------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> n_seeds;
  std::optional<std::int64_t> m_plus;
  std::optional<int> block;
  unsigned jobs = 0;
  bool force = false;
};

void add_experiment_options(CLI::App* c, ExperimentArgs& a) {
  c->add_option("--config", a.config, "Experiment config JSON")->required();
  c->add_option("--out", a.out, "Output directory (overrides config)");
  c->add_option("--seed", a.seeds, "Seed list (overrides config)")->delimiter(',');
  c->add_option("--n-seeds", a.n_seeds, "Use seeds 0..n-1");
  c->add_option("--m-plus", a.m_plus, "Sub-dialogues per positive dialogue");
  c->add_option("--block", a.block, "Encoder block of the features");
  c->add_option("--jobs", a.jobs, "Parallel training workers");
  c->add_flag("--force", a.force, "Overwrite existing results");
}

struct LoadedExperiment {
  sdd::ExperimentFile file;
  sdd::Corpus corpus;
};

LoadedExperiment load_experiment(const ExperimentArgs& a) {
  auto file = sdd::load_experiment(a.config);
  auto& e = file.experiment;
  if (!a.out.empty()) e.output = a.out;
  if (!a.seeds.empty()) e.seeds = a.seeds;
  if (a.n_seeds) e.seeds = sdd::default_seeds(*a.n_seeds);
  if (a.m_plus) e.augment.m_plus = *a.m_plus;
  if (a.block) e.features.block = *a.block;
  if (a.jobs) e.jobs = a.jobs;
  file.store = store_override(file.store);
  if (file.manifest.empty()) throw sdd::ConfigError("experiment config has no manifest");
  if (file.store.empty()) throw sdd::ConfigError("experiment config has no store");
  if (e.output.empty()) throw sdd::ConfigError("experiment config has no output directory");
  if (e.features.backend.empty()) throw sdd::ConfigError("experiment config has no features.backend");
  if (!fs::exists(file.manifest)) throw sdd::ConfigError("manifest " + file.manifest.string() + " does not exist");
  if (!fs::exists(file.store)) throw sdd::ConfigError("store " + file.store.string() + " does not exist");
  e.augment.validate();
  e.train.validate();
  auto corpus = sdd::load_manifest(file.manifest);
  return {std::move(file), std::move(corpus)};
}

int run_train(const ExperimentArgs& a) {
  auto [file, corpus] = load_experiment(a);
  auto& e = file.experiment;
  refuse_overwrite(e.output / "stats.json", a.force);
  sdd::FeatureStore store(file.store);
  auto r = sdd::seed_protocol(corpus, store, e);
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    std::printf("seed %llu  dev F1 %.3f\n", static_cast<unsigned long long>(r.seeds[i]), r.f1s[i]);
  print_stats(e.name, r.stats);
  return 0;
}

struct SweepArgs {
  ExperimentArgs exp;
  std::string axis = "block";
  std::vector<std::int64_t> values;
};

int run_sweep(const SweepArgs& a) {
  auto [file, corpus] = load_experiment(a.exp);
  auto& e = file.experiment;
  refuse_overwrite(e.output / "sweep.json", a.exp.force);
  sdd::FeatureStore store(file.store);
  sdd::SweepResult r;
  if (a.axis == "block") {
    std::vector<int> blocks(a.values.begin(), a.values.end());
    if (blocks.empty()) blocks = {2, 4, 6, 8, 10, 12};
    r = sdd::block_sweep(corpus, store, e, blocks);
  } else {
    auto values = a.values;
    if (values.empty()) values = {100, 200, 500, 1000, 1500};
    r = sdd::m_plus_sweep(corpus, store, e, values);
  }
  for (const auto& p : r.points) print_stats(a.axis + " " + sdd::report_detail::axis_label(p.value), p.stats);
  std::printf("best %s: %s\n", a.axis.c_str(), sdd::report_detail::axis_label(r.argmax()).c_str());
  return 0;
}

// ---- ensemble -----------------------------------------------------------------

struct EnsembleArgs {
  std::vector<std::string> members;
  std::string mode = "majority";
  std::string out;
  bool force = false;
};

int run_ensemble(const EnsembleArgs& a) {
  if (a.members.size() < 3 || a.members.size() % 2 == 0)
    throw UsageError("ensemble needs an odd number (>= 3) of member directories, got " +
                     std::to_string(a.members.size()));
  std::vector<sdd::SystemPredictions> systems;
  for (const auto& m : a.members) systems.push_back(sdd::load_system(m));
  auto r = sdd::majority_vote_systems(systems);
  print_stats("ensemble", r.stats);
  if (!a.out.empty()) {
    const fs::path out(a.out);
    refuse_overwrite(out / "stats.json", a.force);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < r.f1s.size(); ++i) seeds.push_back(i);
    for (std::size_t i = 0; i < r.fused.size(); ++i)
      sdd::write_file_atomic(out / sdd::seed_dir_name(i) / "dev_predictions.jsonl",
                             sdd::format_predictions(r.fused[i]));
    nlohmann::json j = {{"name", "ensemble"},
                        {"members", a.members},
                        {"mode", a.mode},
                        {"seeds", seeds},
                        {"f1", r.f1s},
                        {"stats", sdd::to_json(r.stats)}};
    sdd::write_file_atomic(out / "stats.json", j.dump(2) + "\n");
  }
  return 0;
}

// ---- report -------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::vector<std::string> names;
  std::string out;
  bool force = false;
};

sdd::SweepResult load_result(const fs::path& input) {
  fs::path path = input;
  if (fs::is_directory(path)) path = fs::exists(input / "sweep.json") ? input / "sweep.json" : input / "stats.json";
  auto j = sdd::load_json_file(path);
  if (j.contains("axis")) return sdd::sweep_from_json(j);
  // A single protocol run becomes a one-point block sweep.
  sdd::SweepResult s;
  s.name = j.value("name", path.parent_path().filename().string());
  s.axis = sdd::SweepAxis::block;
  double block = j.contains("features") ? j["features"].value("block", 0) : 0;
  s.points.push_back({block, sdd::seed_stats_from_json(j.at("stats")), j.value("f1", std::vector<double>{})});
  return s;
}

int run_report(const ReportArgs& a) {
  if (a.inputs.empty()) throw UsageError("report needs at least one input");
  std::vector<sdd::SweepResult> systems;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    auto s = load_result(a.inputs[i]);
    if (i < a.names.size()) s.name = a.names[i];
    systems.push_back(std::move(s));
  }
  const fs::path out(a.out);
  refuse_overwrite(out / "summary.json", a.force);
  sdd::write_report(out, systems);
  std::printf("wrote %s\n", (out / "summary.json").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sddkit: speech depression-detection experiment toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  ExtractArgs extract;
  PlanArgs plan;
  ExperimentArgs train;
  SweepArgs sweep;
  EnsembleArgs ensemble;
  ReportArgs report;

  add_synth(app, synth);
  add_extract(app, extract);
  add_plan(app, plan);
  auto* train_cmd = app.add_subcommand("train", "Run the multi-seed protocol for one experiment");
  add_experiment_options(train_cmd, train);
  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat the protocol over blocks or M+ values");
  add_experiment_options(sweep_cmd, sweep.exp);
  sweep_cmd->add_option("--axis", sweep.axis, "Sweep axis")->check(CLI::IsMember({"block", "m_plus"}));
  sweep_cmd->add_option("--values", sweep.values, "Axis values, strictly increasing")->delimiter(',');
  auto* ens_cmd = app.add_subcommand("ensemble", "Majority-vote trained systems, pairing seeds by index");
  ens_cmd->add_option("members", ensemble.members, "Seed-protocol output directories")->required();
  ens_cmd->add_option("--mode", ensemble.mode, "Fusion mode")->check(CLI::IsMember({"majority"}));
  ens_cmd->add_option("--out", ensemble.out, "Write fused predictions and stats here");
  ens_cmd->add_flag("--force", ensemble.force, "Overwrite existing results");
  auto* rep_cmd = app.add_subcommand("report", "Write summary.csv, summary.json and trend.svg");
  rep_cmd->add_option("inputs", report.inputs, "sweep.json / stats.json files or their directories")->required();
  rep_cmd->add_option("--name", report.names, "System names, in input order");
  rep_cmd->add_option("--out", report.out, "Output directory")->required();
  rep_cmd->add_flag("--force", report.force, "Overwrite an existing report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return run_synth(synth);
    if (cmd == "extract") return run_extract(extract);
    if (cmd == "plan") return run_plan(plan);
    if (cmd == "train") return run_train(train);
    if (cmd == "sweep") return run_sweep(sweep);
    if (cmd == "ensemble") return run_ensemble(ensemble);
    if (cmd == "report") return run_report(report);
    print_error("usage", "unknown command " + cmd);
    return kExitUsage;
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  } catch (const sdd::ConfigError& e) {
    print_error("config", e.what());
    return kExitUsage;
  } catch (const sdd::Error& e) {
    print_error("runtime", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return kExitRuntime;
  }
}

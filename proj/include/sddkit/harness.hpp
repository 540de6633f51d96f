#pragma once

// Evaluation protocol: multi-seed training, sweeps over encoder blocks and
// augmentation multiplicity, majority-vote ensembles, and reports.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/augment.hpp"
#include "sddkit/corpus.hpp"
#include "sddkit/feature_store.hpp"
#include "sddkit/metrics.hpp"
#include "sddkit/train.hpp"

namespace sdd {

inline std::vector<std::uint64_t> default_seeds(std::size_t n = 20) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

struct ExperimentConfig {
  std::string name = "system";
  FeatureSource features;
  AugmentParams augment;
  DetectorConfig detector;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = default_seeds();
  std::filesystem::path output;
  unsigned jobs = 1;
};

struct ProtocolResult {
  SeedStats stats;
  std::vector<std::uint64_t> seeds;
  std::vector<double> f1s;
  std::vector<std::filesystem::path> run_dirs;
};

inline std::string seed_dir_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seed_%03llu", static_cast<unsigned long long>(seed));
  return buf;
}

inline nlohmann::json to_json(const SeedStats& s) {
  return {{"f1_avg", s.f1_avg}, {"f1_max", s.f1_max}, {"f1_std", s.f1_std}, {"n_seeds", s.n_seeds}};
}

inline SeedStats seed_stats_from_json(const nlohmann::json& j) {
  return {j.at("f1_avg").get<double>(), j.at("f1_max").get<double>(), j.at("f1_std").get<double>(),
          j.at("n_seeds").get<std::size_t>()};
}

/// Feature width recorded in the store for a source, checking every train
/// and dev session is present.
inline std::uint32_t source_dim(const FeatureStore& store, const Corpus& corpus, const FeatureSource& src) {
  std::uint32_t dim = 0;
  for (const auto& d : corpus.dialogues()) {
    if (d.split == Split::test) continue;
    auto e = store.lookup({d.session_id, src.backend, src.block});
    if (!e)
      throw ValidationError("feature store lacks backend '" + src.backend + "' block " + std::to_string(src.block) +
                            " for session '" + d.session_id + "'");
    if (dim && e->cols != dim) throw ValidationError("inconsistent feature widths for backend '" + src.backend + "'");
    dim = e->cols;
  }
  if (dim == 0) throw ValidationError("corpus has no train/dev sessions");
  return dim;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; rethrows the
/// first failure after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Trains one run per seed (detector and train seeds both set to it) on a
/// single augmentation plan, persists every run under
/// `cfg.output/seed_NNN/`, and aggregates dev F1 into `stats.json`.
inline ProtocolResult seed_protocol(const Corpus& corpus, const FeatureStore& store, ExperimentConfig cfg) {
  if (cfg.seeds.empty()) throw ConfigError("no seeds configured");
  cfg.detector.input_dim = source_dim(store, corpus, cfg.features);
  const AugmentationPlan plan = build_plan(corpus, cfg.augment);

  ProtocolResult result;
  result.seeds = cfg.seeds;
  result.f1s.assign(cfg.seeds.size(), 0.0);
  result.run_dirs.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    DetectorConfig dc = cfg.detector;
    TrainConfig tc = cfg.train;
    dc.seed = seed;
    tc.seed = seed;
    try {
      TrainedRun run = train(store, plan, corpus, cfg.features, dc, tc);
      result.f1s[i] = run.dev_f1;
      if (!cfg.output.empty()) {
        result.run_dirs[i] = cfg.output / seed_dir_name(seed);
        write_run(result.run_dirs[i], run);
      }
    } catch (const std::exception& e) {
      throw Error("seed " + std::to_string(seed) + " failed: " + e.what());
    }
  });
  result.stats = seed_stats(result.f1s);
  if (!cfg.output.empty()) {
    nlohmann::json j = {{"name", cfg.name},
                        {"features", {{"backend", cfg.features.backend}, {"block", cfg.features.block}}},
                        {"augment", to_json(cfg.augment)},
                        {"seeds", cfg.seeds},
                        {"f1", result.f1s},
                        {"stats", to_json(result.stats)}};
    write_file_atomic(cfg.output / "stats.json", j.dump(2) + "\n");
  }
  return result;
}

enum class SweepAxis { block, m_plus };

inline std::string_view to_string(SweepAxis a) { return a == SweepAxis::block ? "block" : "m_plus"; }

struct SweepPoint {
  double value = 0.0;
  SeedStats stats;
  std::vector<double> f1s;
};

struct SweepResult {
  std::string name;
  SweepAxis axis = SweepAxis::block;
  std::vector<SweepPoint> points;

  /// Axis value with the highest F1-avg (first on ties).
  double argmax() const {
    if (points.empty()) throw ValidationError("empty sweep");
    auto it = std::max_element(points.begin(), points.end(),
                               [](const SweepPoint& a, const SweepPoint& b) { return a.stats.f1_avg < b.stats.f1_avg; });
    return it->value;
  }
};

inline nlohmann::json to_json(const SweepResult& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points) pts.push_back({{"value", p.value}, {"stats", to_json(p.stats)}, {"f1", p.f1s}});
  return {{"name", s.name}, {"axis", to_string(s.axis)}, {"points", pts}};
}

inline SweepResult sweep_from_json(const nlohmann::json& j) {
  SweepResult s;
  s.name = j.value("name", "system");
  const auto axis = j.at("axis").get<std::string>();
  if (axis == "block") s.axis = SweepAxis::block;
  else if (axis == "m_plus") s.axis = SweepAxis::m_plus;
  else throw ValidationError("unknown sweep axis '" + axis + "'");
  for (const auto& p : j.at("points"))
    s.points.push_back({p.at("value").get<double>(), seed_stats_from_json(p.at("stats")),
                        p.value("f1", std::vector<double>{})});
  return s;
}

namespace harness_detail {

template <typename T>
void require_increasing(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw ConfigError(std::string("no ") + what + " values to sweep");
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i - 1] < v[i])) throw ConfigError(std::string(what) + " values must be strictly increasing");
}

inline SweepResult run_sweep(const Corpus& corpus, const FeatureStore& store, const ExperimentConfig& base,
                             SweepAxis axis, const std::vector<std::int64_t>& values) {
  SweepResult result;
  result.name = base.name;
  result.axis = axis;
  for (auto v : values) {
    ExperimentConfig cfg = base;
    std::string sub;
    if (axis == SweepAxis::block) {
      cfg.features.block = static_cast<int>(v);
      sub = "block_" + std::to_string(v);
    } else {
      cfg.augment.m_plus = v;
      sub = "m_plus_" + std::to_string(v);
    }
    if (!base.output.empty()) cfg.output = base.output / sub;
    auto r = seed_protocol(corpus, store, cfg);
    result.points.push_back({static_cast<double>(v), r.stats, r.f1s});
  }
  if (!base.output.empty()) write_file_atomic(base.output / "sweep.json", to_json(result).dump(2) + "\n");
  return result;
}

}  // namespace harness_detail

/// Seed protocol at every listed encoder block. Fails up front, naming the
/// block, if the store lacks any block's features.
inline SweepResult block_sweep(const Corpus& corpus, const FeatureStore& store, const ExperimentConfig& base,
                               const std::vector<int>& blocks) {
  harness_detail::require_increasing(blocks, "block");
  for (int b : blocks) {
    FeatureSource src{base.features.backend, b};
    try {
      source_dim(store, corpus, src);
    } catch (const ValidationError& e) {
      throw ValidationError("block " + std::to_string(b) + " is not materialized: " + e.what());
    }
  }
  return harness_detail::run_sweep(corpus, store, base, SweepAxis::block,
                                   std::vector<std::int64_t>(blocks.begin(), blocks.end()));
}

inline SweepResult m_plus_sweep(const Corpus& corpus, const FeatureStore& store, const ExperimentConfig& base,
                                const std::vector<std::int64_t>& values) {
  harness_detail::require_increasing(values, "m_plus");
  source_dim(store, corpus, base.features);
  return harness_detail::run_sweep(corpus, store, base, SweepAxis::m_plus, values);
}

// ---- ensembles -------------------------------------------------------------

/// Dev predictions of one system: one vector per seed, sessions sorted by id.
struct SystemPredictions {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<SessionPrediction>> per_seed;
};

inline SystemPredictions load_system(const std::filesystem::path& dir) {
  SystemPredictions sys;
  auto stats_path = dir / "stats.json";
  if (!std::filesystem::exists(stats_path)) throw IoError("not a seed-protocol directory (no stats.json): " + dir.string());
  auto j = nlohmann::json::parse(read_file(stats_path));
  sys.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (auto s : sys.seeds) {
    auto preds = read_predictions(dir / seed_dir_name(s));
    std::sort(preds.begin(), preds.end(),
              [](const SessionPrediction& a, const SessionPrediction& b) { return a.session_id < b.session_id; });
    sys.per_seed.push_back(std::move(preds));
  }
  return sys;
}

struct EnsembleResult {
  SeedStats stats;
  std::vector<double> f1s;
  std::vector<std::vector<SessionPrediction>> fused;  // per seed index
};

/// Majority vote across systems, pairing members by seed index: seed slot i
/// of every member is fused, scored, and the per-slot F1s aggregated.
inline EnsembleResult majority_vote_systems(const std::vector<SystemPredictions>& members) {
  if (members.size() < 3 || members.size() % 2 == 0)
    throw ValidationError("an ensemble needs an odd number (>= 3) of members, got " + std::to_string(members.size()));
  const std::size_t n_seeds = members.front().per_seed.size();
  for (const auto& m : members)
    if (m.per_seed.size() != n_seeds) throw AlignmentError("ensemble members have different seed counts");

  EnsembleResult result;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const auto& ref = members.front().per_seed[s];
    std::vector<std::vector<Label>> votes;
    for (const auto& m : members) {
      const auto& preds = m.per_seed[s];
      if (preds.size() != ref.size()) throw AlignmentError("ensemble members cover different dev sessions");
      std::vector<Label> v;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].session_id != ref[i].session_id || preds[i].label != ref[i].label)
          throw AlignmentError("ensemble members disagree on dev session '" + ref[i].session_id + "'");
        v.push_back(preds[i].pred);
      }
      votes.push_back(std::move(v));
    }
    auto fused_labels = majority_vote(votes);
    std::vector<SessionPrediction> fused;
    std::vector<Label> refs;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      double score = 0.0;
      for (const auto& m : members) score += m.per_seed[s][i].score;
      fused.push_back({ref[i].session_id, ref[i].label, fused_labels[i], score / static_cast<double>(members.size())});
      refs.push_back(ref[i].label);
    }
    result.f1s.push_back(f1_score(fused_labels, refs).f1);
    result.fused.push_back(std::move(fused));
  }
  result.stats = seed_stats(result.f1s);
  return result;
}

// ---- reports ---------------------------------------------------------------

namespace report_detail {

inline std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string axis_label(double v) {
  return v == static_cast<double>(static_cast<long long>(v)) ? std::to_string(static_cast<long long>(v)) : fmt(v, "%g");
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace report_detail

/// CSV with columns axis,f1_avg,f1_max,f1_std,n_seeds.
inline std::string summary_csv(const SweepResult& s) {
  using report_detail::fmt;
  std::string out = "axis,f1_avg,f1_max,f1_std,n_seeds\n";
  for (const auto& p : s.points)
    out += report_detail::axis_label(p.value) + "," + fmt(p.stats.f1_avg, "%.6f") + "," + fmt(p.stats.f1_max, "%.6f") +
           "," + fmt(p.stats.f1_std, "%.6f") + "," + std::to_string(p.stats.n_seeds) + "\n";
  return out;
}

/// F1-avg against the sweep axis, one polyline per system.
inline std::string trend_svg(const std::vector<SweepResult>& systems) {
  using report_detail::fmt;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double W = 640, H = 400, left = 60, right = 170, top = 30, bottom = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : systems)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.value), xmax = std::max(xmax, p.value);
      ymin = std::min(ymin, p.stats.f1_avg), ymax = std::max(ymax, p.stats.f1_avg);
    }
  if (xmax == xmin) xmin -= 1, xmax += 1;
  ymin = std::max(0.0, ymin - 0.05), ymax = std::min(1.0, ymax + 0.05);
  if (ymax <= ymin) ymin = 0.0, ymax = 1.0;
  auto X = [&](double v) { return left + (v - xmin) / (xmax - xmin) * (W - left - right); };
  auto Y = [&](double v) { return H - bottom - (v - ymin) / (ymax - ymin) * (H - top - bottom); };

  const std::string axis_name = systems.empty() ? "block" : std::string(to_string(systems.front().axis));
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W, "%g") + "\" height=\"" +
                    fmt(H, "%g") + "\" viewBox=\"0 0 " + fmt(W, "%g") + " " + fmt(H, "%g") +
                    "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(H - bottom) + "\" x2=\"" + fmt(W - right) + "\" y2=\"" +
         fmt(H - bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(H - bottom) +
         "\" stroke=\"black\"/>\n";
  std::vector<double> ticks;
  for (const auto& s : systems)
    for (const auto& p : s.points)
      if (std::find(ticks.begin(), ticks.end(), p.value) == ticks.end()) ticks.push_back(p.value);
  for (double t : ticks)
    svg += "<text x=\"" + fmt(X(t)) + "\" y=\"" + fmt(H - bottom + 18) + "\" text-anchor=\"middle\">" +
           report_detail::axis_label(t) + "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymin + (ymax - ymin) * i / 4.0;
    svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(Y(v) + 4) + "\" text-anchor=\"end\">" + fmt(v, "%.2f") +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt((left + W - right) / 2) + "\" y=\"" + fmt(H - 12) + "\" text-anchor=\"middle\">" +
         axis_name + "</text>\n";
  svg += "<text x=\"15\" y=\"" + fmt((top + H - bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         fmt((top + H - bottom) / 2) + ")\">F1-avg</text>\n";
  for (std::size_t k = 0; k < systems.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (const auto& p : systems[k].points) pts += fmt(X(p.value)) + "," + fmt(Y(p.stats.f1_avg)) + " ";
    svg += "<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
           pts + "\"/>\n";
    for (const auto& p : systems[k].points)
      svg += "<circle class=\"point\" cx=\"" + fmt(X(p.value)) + "\" cy=\"" + fmt(Y(p.stats.f1_avg)) +
             "\" r=\"3.5\" fill=\"" + color + "\"/>\n";
    const double ly = top + 18.0 * static_cast<double>(k);
    svg += "<g class=\"legend\"><line x1=\"" + fmt(W - right + 15) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
           fmt(W - right + 35) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/><text x=\"" +
           fmt(W - right + 40) + "\" y=\"" + fmt(ly + 4) + "\">" + report_detail::xml_escape(systems[k].name) +
           "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

/// Writes summary.csv, summary.json and trend.svg. With several systems,
/// each gets `<name>/summary.csv` so the CSV schema stays fixed.
inline void write_report(const std::filesystem::path& out, const std::vector<SweepResult>& systems) {
  if (systems.empty()) throw ValidationError("nothing to report");
  for (const auto& s : systems)
    if (s.points.empty()) throw ValidationError("system '" + s.name + "' has no results");
  std::filesystem::create_directories(out);
  if (systems.size() == 1) {
    write_file_atomic(out / "summary.csv", summary_csv(systems.front()));
  } else {
    std::map<std::string, int> seen;
    for (const auto& s : systems) {
      auto dir = sanitize_path_component(s.name);
      if (int n = seen[dir]++; n > 0) dir += "_" + std::to_string(n + 1);
      write_file_atomic(out / dir / "summary.csv", summary_csv(s));
    }
  }
  nlohmann::json j = {{"systems", nlohmann::json::array()}};
  for (const auto& s : systems) j["systems"].push_back(to_json(s));
  write_file_atomic(out / "summary.json", j.dump(2) + "\n");
  write_file_atomic(out / "trend.svg", trend_svg(systems));
}

}  // namespace sdd

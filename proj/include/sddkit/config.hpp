#pragma once

// JSON configuration files for the command-line tool.
//
// Experiment file:
//   {
//     "name": "wavlm-pt",                      // system name in reports
//     "manifest": "corpus/manifest.jsonl",
//     "store": "corpus/store",
//     "features": {"backend": "wavlm-base-plus", "block": 8},
//     "augment":  {"m_plus": 500, "eps_low": 0.3, "eps_high": 1.0, "seed": 0,
//                  "balance_mode": "corrected", "include_interviewer": false},
//     "detector": {"model_dim": 128, "heads": 4, "blocks": 2, "ffn_dim": 256,
//                  "dropout": 0.1, "max_len": 4096, "positional_encoding": true},
//     "train":    {"learning_rate": 1e-4, "batch_size": 32, "max_epochs": 30,
//                  "patience": 5, "stop_on_perfect_dev": true},
//     "seeds": [0, 1, 2]  |  "n_seeds": 20,
//     "output": "runs/wavlm-pt"
//   }
// Relative paths are taken relative to the directory holding the file.
//
// Backend file (extraction):
//   {
//     "backends": [
//       {"name": "wavlm-base-plus", "kind": "speech_frames", "root": "exports/wavlm",
//        "block": 8, "depth": 12, "dim": 768},
//       {"name": "roberta-base-hyp", "kind": "text_frames", "root": "exports/roberta", "dim": 768}
//     ],
//     "include_interviewer": false,
//     "normalization": "none" | "l2"
//   }
// Several backends are fused by concatenation in the listed order.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/backend.hpp"
#include "sddkit/error.hpp"
#include "sddkit/feature_store.hpp"
#include "sddkit/fileio.hpp"
#include "sddkit/harness.hpp"
#include "sddkit/synthetic.hpp"

namespace sdd {

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file " + path.string() + " does not exist");
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct ExperimentFile {
  ExperimentConfig experiment;
  std::filesystem::path manifest;
  std::filesystem::path store;
};

inline ExperimentFile experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    ExperimentFile f;
    auto& e = f.experiment;
    e.name = j.value("name", e.name);
    if (j.contains("manifest")) f.manifest = resolve_path(base_dir, j["manifest"].get<std::string>());
    if (j.contains("store")) f.store = resolve_path(base_dir, j["store"].get<std::string>());
    if (j.contains("output")) e.output = resolve_path(base_dir, j["output"].get<std::string>());
    if (j.contains("features")) {
      e.features.backend = j["features"].at("backend").get<std::string>();
      e.features.block = j["features"].value("block", 0);
    }
    if (j.contains("augment")) e.augment = augment_params_from_json(j["augment"]);
    if (j.contains("detector")) e.detector = detector_config_from_json(j["detector"]);
    if (j.contains("train")) e.train = train_config_from_json(j["train"]);
    if (j.contains("seeds")) e.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    else if (j.contains("n_seeds")) e.seeds = default_seeds(j["n_seeds"].get<std::size_t>());
    e.jobs = j.value("jobs", e.jobs);
    return f;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid experiment config: ") + ex.what());
  }
}

inline nlohmann::json to_json(const ExperimentFile& f) {
  const auto& e = f.experiment;
  return {{"name", e.name},
          {"manifest", f.manifest.string()},
          {"store", f.store.string()},
          {"output", e.output.string()},
          {"features", {{"backend", e.features.backend}, {"block", e.features.block}}},
          {"augment", to_json(e.augment)},
          {"detector", to_json(e.detector)},
          {"train", to_json(e.train)},
          {"seeds", e.seeds},
          {"jobs", e.jobs}};
}

inline ExperimentFile load_experiment(const std::filesystem::path& path) {
  return experiment_from_json(load_json_file(path), path.parent_path());
}

struct BackendFile {
  std::vector<BackendSpec> backends;
  MaterializeOptions options;
};

inline BackendSpec backend_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  BackendSpec s;
  s.name = j.at("name").get<std::string>();
  s.kind = parse_backend_kind(j.at("kind").get<std::string>());
  if (j.contains("root")) s.root = resolve_path(base_dir, j["root"].get<std::string>());
  s.block = j.value("block", 0);
  s.depth = j.value("depth", s.kind == BackendKind::speech_frames ? 12 : 0);
  s.dim = j.value("dim", s.dim);
  return s;
}

inline BackendFile backend_file_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    BackendFile f;
    for (const auto& b : j.at("backends")) f.backends.push_back(backend_spec_from_json(b, base_dir));
    if (f.backends.empty()) throw ConfigError("backend config lists no backends");
    f.options.include_interviewer = j.value("include_interviewer", false);
    const auto norm = j.value("normalization", std::string("none"));
    if (norm == "none") f.options.normalization = FeatureNormalization::none;
    else if (norm == "l2") f.options.normalization = FeatureNormalization::l2;
    else throw ConfigError("unknown normalization '" + norm + "'");
    return f;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid backend config: ") + ex.what());
  }
}

/// Instantiates a single producer from its spec.
inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  switch (spec.kind) {
    case BackendKind::speech_frames: return std::make_unique<FrameDumpSpeechBackend>(spec);
    case BackendKind::text_frames: return std::make_unique<FrameDumpTextBackend>(spec);
    case BackendKind::hashed_text: return std::make_unique<HashedTextBackend>(spec);
    case BackendKind::synthetic: {
      auto path = spec.root / "synthetic.json";
      if (!std::filesystem::exists(path))
        throw ConfigError("synthetic backend root " + spec.root.string() + " has no synthetic.json");
      auto cfg = synthetic_config_from_json(load_json_file(path));
      return std::make_unique<SyntheticSpeechBackend>(cfg, spec.block);
    }
  }
  throw ConfigError("unsupported backend kind");
}

/// One backend, or a concatenation when several are listed.
inline std::unique_ptr<Backend> make_backend(const std::vector<BackendSpec>& specs) {
  if (specs.empty()) throw ConfigError("no backends configured");
  if (specs.size() == 1) return make_backend(specs.front());
  std::vector<std::unique_ptr<Backend>> members;
  for (const auto& s : specs) members.push_back(make_backend(s));
  return std::make_unique<FusedBackend>(std::move(members));
}

}  // namespace sdd

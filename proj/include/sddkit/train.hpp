#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/augment.hpp"
#include "sddkit/corpus.hpp"
#include "sddkit/detector.hpp"
#include "sddkit/feature_store.hpp"
#include "sddkit/metrics.hpp"

namespace sdd {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::uint32_t batch_size = 32;
  std::uint32_t max_epochs = 30;
  std::uint32_t patience = 5;  // epochs without a dev-F1 improvement before stopping
  bool stop_on_perfect_dev = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0 || max_epochs == 0 || patience == 0) throw ConfigError("batch_size, max_epochs and patience must be positive");
    if (patience >= max_epochs) throw ConfigError("patience must be smaller than max_epochs");
  }
};

/// Which cached features a run reads.
struct FeatureSource {
  std::string backend;
  int block = 0;
};

struct CurvePoint {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double dev_f1 = 0.0;
};

struct SessionPrediction {
  std::string session_id;
  Label label = 0;  // reference
  Label pred = 0;
  double score = 0.0;
};

struct TrainedRun {
  DetectorConfig detector_config;
  TrainConfig train_config;
  FeatureSource source;
  AugmentParams augment;
  DetectorParams<float> params;  // best-dev-F1 snapshot
  std::vector<CurvePoint> curve;
  std::vector<SessionPrediction> dev_predictions;
  std::uint32_t best_epoch = 0;
  double dev_f1 = 0.0;
};

/// Session features held in memory for one run.
class FeatureTable {
 public:
  void add(const std::string& session_id, const FloatMatrix& m) {
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(m.data.data(), m.rows,
                                                                                                  m.cols);
    table_[session_id] = view;
  }
  bool contains(const std::string& id) const { return table_.count(id) != 0; }
  const Mat<float>& at(const std::string& id) const {
    auto it = table_.find(id);
    if (it == table_.end()) throw ValidationError("no features for session '" + id + "'");
    return it->second;
  }

 private:
  std::map<std::string, Mat<float>> table_;
};

/// Loads train-plan and dev features, checking that the plan fits the store.
inline FeatureTable load_run_features(const FeatureStore& store, const AugmentationPlan& plan, const Corpus& corpus,
                                      const FeatureSource& source, std::uint32_t expected_dim) {
  FeatureTable table;
  auto load = [&](const std::string& id) {
    if (table.contains(id)) return;
    StoreKey key{id, source.backend, source.block};
    if (!store.contains(key))
      throw ValidationError("plan/store mismatch: no cached features for session '" + id + "' (backend '" +
                            source.backend + "', block " + std::to_string(source.block) + ")");
    FloatMatrix m = store.load(key);
    if (m.cols != expected_dim)
      throw ValidationError("session '" + id + "' has " + std::to_string(m.cols) + " feature columns, detector expects " +
                            std::to_string(expected_dim));
    table.add(id, m);
  };
  for (const auto& e : plan.entries) {
    load(e.session_id);
    const auto rows = table.at(e.session_id).rows();
    if (e.e >= static_cast<std::size_t>(rows))
      throw ValidationError("plan/store mismatch: entry " + std::to_string(e.s) + ".." + std::to_string(e.e) +
                            " exceeds the " + std::to_string(rows) + " rows of session '" + e.session_id + "'");
  }
  for (const auto* d : corpus.split(Split::dev)) load(d->session_id);
  return table;
}

inline std::vector<SessionPrediction> predict_sessions(const DetectorParams<float>& params,
                                                       const std::vector<const Dialogue*>& sessions,
                                                       const FeatureTable& features) {
  std::vector<SessionPrediction> out;
  out.reserve(sessions.size());
  for (const auto* d : sessions) {
    auto p = prediction_from_logits<float>(forward<float>(params, features.at(d->session_id)));
    out.push_back({d->session_id, d->label, p.label, p.score});
  }
  return out;
}

inline F1Result f1_of(const std::vector<SessionPrediction>& preds) {
  std::vector<Label> p, r;
  for (const auto& s : preds) {
    p.push_back(s.pred);
    r.push_back(s.label);
  }
  return f1_score(p, r);
}

/// Mean cross-entropy of a batch of plan entries without dropout.
inline double batch_loss(const DetectorParams<float>& params, std::span<const SubDialogueRef> batch,
                         const FeatureTable& features) {
  double total = 0.0;
  for (const auto& e : batch) {
    const auto& full = features.at(e.session_id);
    Mat<float> x = full.middleRows(static_cast<Eigen::Index>(e.s), static_cast<Eigen::Index>(e.length()));
    total += cross_entropy<float>(forward<float>(params, x), e.label);
  }
  return total / static_cast<double>(batch.size());
}

/// One seed of training on plan entries, with early stopping on dev F1.
/// Returns the best-dev-F1 parameters and their dev predictions.
inline TrainedRun train(const FeatureStore& store, const AugmentationPlan& plan, const Corpus& corpus,
                        const FeatureSource& source, const DetectorConfig& dcfg, const TrainConfig& tcfg) {
  dcfg.validate();
  tcfg.validate();
  if (plan.entries.empty()) throw ValidationError("augmentation plan is empty");
  auto dev = corpus.split(Split::dev);
  if (dev.empty()) throw ValidationError("dev split is empty");
  for (const auto& e : plan.entries)
    if (!corpus.find(e.session_id))
      throw ValidationError("plan references session '" + e.session_id + "' which is not in the corpus");
  FeatureTable features = load_run_features(store, plan, corpus, source, dcfg.input_dim);

  TrainedRun run;
  run.detector_config = dcfg;
  run.train_config = tcfg;
  run.source = source;
  run.augment = plan.params;

  DetectorParams<float> params = init_detector<float>(dcfg);
  DetectorParams<float> grads = zeros_like(params);
  AdamOptimizer<float> opt(params, tcfg.learning_rate);
  Rng order_rng(derive_seed(tcfg.seed, 0x6f72646572));
  Rng dropout_rng(derive_seed(tcfg.seed, 0x64726f70));
  ForwardCache<float> cache;

  std::vector<std::size_t> order(plan.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = -1.0;
  std::uint32_t since_best = 0;
  for (std::uint32_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);

    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tcfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + tcfg.batch_size);
      const float weight = 1.0f / static_cast<float>(b1 - b0);
      visit_tensors(grads, [](const std::string&, auto& t) { t.setZero(); });
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& e = plan.entries[order[i]];
        const auto& full = features.at(e.session_id);
        Mat<float> x = full.middleRows(static_cast<Eigen::Index>(e.s), static_cast<Eigen::Index>(e.length()));
        forward<float>(params, x, {}, &cache, dcfg.dropout > 0.0 ? &dropout_rng : nullptr);
        loss_sum += backward<float>(params, cache, e.label, grads, weight) / weight;
      }
      opt.step(params, grads);
    }

    auto preds = predict_sessions(params, dev, features);
    const double f1 = f1_of(preds).f1;
    run.curve.push_back({epoch, loss_sum / static_cast<double>(order.size()), f1});
    if (f1 > best) {
      best = f1;
      since_best = 0;
      run.params = params;
      run.dev_predictions = std::move(preds);
      run.best_epoch = epoch;
      run.dev_f1 = f1;
      if (tcfg.stop_on_perfect_dev && f1 >= 1.0) break;
    } else if (++since_best >= tcfg.patience) {
      break;
    }
  }
  return run;
}

// ---- run directory -------------------------------------------------------

inline nlohmann::json to_json(const DetectorConfig& c) {
  return {{"input_dim", c.input_dim}, {"model_dim", c.model_dim}, {"heads", c.heads},
          {"blocks", c.blocks},       {"ffn_dim", c.ffn_dim},     {"dropout", c.dropout},
          {"max_len", c.max_len},     {"positional_encoding", c.positional_encoding},
          {"seed", c.seed}};
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j, DetectorConfig c = {}) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.max_len = j.value("max_len", c.max_len);
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"patience", c.patience},
          {"stop_on_perfect_dev", c.stop_on_perfect_dev}, {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.stop_on_perfect_dev = j.value("stop_on_perfect_dev", c.stop_on_perfect_dev);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline nlohmann::json to_json(const AugmentParams& p) {
  return {{"m_plus", p.m_plus},
          {"eps_low", p.eps_low},
          {"eps_high", p.eps_high},
          {"seed", p.seed},
          {"balance_mode", to_string(p.balance_mode)},
          {"include_interviewer", p.include_interviewer}};
}

inline AugmentParams augment_params_from_json(const nlohmann::json& j, AugmentParams p = {}) {
  p.m_plus = j.value("m_plus", p.m_plus);
  p.eps_low = j.value("eps_low", p.eps_low);
  p.eps_high = j.value("eps_high", p.eps_high);
  p.seed = j.value("seed", p.seed);
  if (j.contains("balance_mode")) p.balance_mode = parse_balance_mode(j["balance_mode"].get<std::string>());
  p.include_interviewer = j.value("include_interviewer", p.include_interviewer);
  return p;
}

// params.bin:
//   "SDDP", u32 version (=1), u32 n, n bytes of detector-config JSON,
//   then every tensor in visit order as u32 rows, u32 cols, rows*cols f32 LE
//   (column-major).
namespace params_io {

inline constexpr std::uint32_t kVersion = 1;

inline std::string encode(const DetectorParams<float>& p) {
  std::string out = "SDDP";
  fmat::detail::put_u32(out, kVersion);
  const std::string cfg = to_json(p.config).dump();
  fmat::detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  visit_tensors(p, [&](const std::string&, const auto& t) {
    fmat::detail::put_u32(out, static_cast<std::uint32_t>(t.rows()));
    fmat::detail::put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) fmat::detail::put_u32(out, std::bit_cast<std::uint32_t>(t.data()[i]));
  });
  return out;
}

inline DetectorParams<float> decode(std::string_view bytes) {
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (at + n > bytes.size()) throw FormatError("truncated params file", bytes.size());
  };
  need(12);
  if (bytes.substr(0, 4) != "SDDP") throw FormatError("bad params magic", 0);
  if (fmat::detail::get_u32(bytes, 4) != kVersion) throw FormatError("unsupported params version", 4);
  const std::uint32_t n = fmat::detail::get_u32(bytes, 8);
  at = 12;
  need(n);
  DetectorConfig cfg;
  try {
    cfg = detector_config_from_json(nlohmann::json::parse(bytes.substr(at, n)));
  } catch (const nlohmann::json::exception&) {
    throw FormatError("bad params config block", at);
  }
  at += n;
  DetectorParams<float> p = shaped_params<float>(cfg);
  visit_tensors(p, [&](const std::string& name, auto& t) {
    need(8);
    const auto rows = fmat::detail::get_u32(bytes, at), cols = fmat::detail::get_u32(bytes, at + 4);
    if (rows != t.rows() || cols != t.cols()) throw FormatError("tensor " + name + " has the wrong shape", at);
    at += 8;
    need(4 * static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i, at += 4) t.data()[i] = std::bit_cast<float>(fmat::detail::get_u32(bytes, at));
  });
  if (at != bytes.size()) throw FormatError("trailing bytes in params file", at);
  return p;
}

}  // namespace params_io

inline std::string format_predictions(const std::vector<SessionPrediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += nlohmann::json{{"session_id", p.session_id}, {"label", p.label}, {"pred", p.pred}, {"score", p.score}}.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SessionPrediction> parse_predictions(std::string_view text) {
  std::vector<SessionPrediction> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("session_id").get<std::string>(), j.at("label").get<Label>(), j.at("pred").get<Label>(),
                     j.at("score").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad prediction line: ") + e.what(), line_no);
    }
  }
  return out;
}

inline std::string format_curve(const std::vector<CurvePoint>& curve) {
  std::string out = "epoch,train_loss,dev_f1\n";
  char buf[96];
  for (const auto& c : curve) {
    std::snprintf(buf, sizeof buf, "%u,%.9g,%.9g\n", c.epoch, c.train_loss, c.dev_f1);
    out += buf;
  }
  return out;
}

inline void write_run(const std::filesystem::path& dir, const TrainedRun& run) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "params.bin", params_io::encode(run.params));
  nlohmann::json cfg = {{"detector", to_json(run.detector_config)},
                        {"train", to_json(run.train_config)},
                        {"augment", to_json(run.augment)},
                        {"features", {{"backend", run.source.backend}, {"block", run.source.block}}},
                        {"seeds", {{"detector", run.detector_config.seed}, {"train", run.train_config.seed}}},
                        {"best_epoch", run.best_epoch},
                        {"dev_f1", run.dev_f1}};
  write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");
  write_file_atomic(dir / "dev_predictions.jsonl", format_predictions(run.dev_predictions));
  write_file_atomic(dir / "curve.csv", format_curve(run.curve));
}

inline std::vector<SessionPrediction> read_predictions(const std::filesystem::path& run_dir) {
  return parse_predictions(read_file(run_dir / "dev_predictions.jsonl"));
}

inline DetectorParams<float> read_params(const std::filesystem::path& run_dir) {
  return params_io::decode(read_file(run_dir / "params.bin"));
}

}  // namespace sdd

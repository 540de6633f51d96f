#pragma once

// Desk-scale stand-in for a restricted interview corpus.
//
// Sessions alternate interviewer prompts and participant answers. Every
// participant utterance of a positive session carries a constant mean
// shift of `signal` along a seed-derived unit direction; noise is i.i.d.
// N(0, noise_sigma^2) per coordinate. Optionally the signal varies with
// the encoder block (block_profile[k-1] scales it at block k), which
// mimics block-wise probing of a foundation model.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/backend.hpp"
#include "sddkit/corpus.hpp"
#include "sddkit/feature_store.hpp"
#include "sddkit/rng.hpp"

namespace sdd {

struct SyntheticConfig {
  std::size_t n_pos = 20;  // train
  std::size_t n_neg = 20;
  std::size_t dev_pos = 6;
  std::size_t dev_neg = 6;
  std::size_t t_min = 8;
  std::size_t t_max = 16;
  std::uint32_t dim = 32;
  double signal = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> block_profile;  // empty: no block dimension
  std::string name = "synthetic";

  int depth() const { return static_cast<int>(block_profile.size()); }

  std::vector<int> blocks() const {
    if (block_profile.empty()) return {0};
    std::vector<int> out;
    for (int k = 1; k <= depth(); ++k) out.push_back(k);
    return out;
  }

  double signal_at(int block) const {
    if (block_profile.empty() || block == 0) return signal;
    return signal * block_profile.at(static_cast<std::size_t>(block - 1));
  }

  void validate() const {
    if (t_min < 2 || t_max < t_min) throw ConfigError("synthetic t_range must satisfy 2 <= min <= max");
    if (!(signal >= 0.0)) throw ConfigError("synthetic signal must be >= 0");
    if (!(noise_sigma > 0.0)) throw ConfigError("synthetic noise_sigma must be > 0");
    if (dim == 0) throw ConfigError("synthetic dim must be positive");
    if (n_pos + n_neg == 0) throw ConfigError("synthetic corpus needs training sessions");
    for (double p : block_profile)
      if (!(p >= 0.0)) throw ConfigError("block_profile entries must be >= 0");
  }
};

inline nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"n_pos", c.n_pos},       {"n_neg", c.n_neg},   {"dev_pos", c.dev_pos},
          {"dev_neg", c.dev_neg},   {"t_min", c.t_min},   {"t_max", c.t_max},
          {"dim", c.dim},           {"signal", c.signal}, {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},         {"name", c.name},     {"block_profile", c.block_profile}};
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.n_pos = j.value("n_pos", c.n_pos);
  c.n_neg = j.value("n_neg", c.n_neg);
  c.dev_pos = j.value("dev_pos", c.dev_pos);
  c.dev_neg = j.value("dev_neg", c.dev_neg);
  c.t_min = j.value("t_min", c.t_min);
  c.t_max = j.value("t_max", c.t_max);
  if (j.contains("t_range")) {
    c.t_min = j["t_range"].at(0).get<std::size_t>();
    c.t_max = j["t_range"].at(1).get<std::size_t>();
  }
  c.dim = j.value("dim", c.dim);
  c.signal = j.value("signal", c.signal);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  c.name = j.value("name", c.name);
  c.block_profile = j.value("block_profile", c.block_profile);
  c.validate();
  return c;
}

inline std::vector<double> synthetic_direction(const SyntheticConfig& c) {
  Rng rng(derive_seed(c.seed, 0x7573'6967'6e61'6cULL));
  std::vector<double> u(c.dim);
  double n2 = 0.0;
  for (auto& x : u) {
    x = rng.normal();
    n2 += x * x;
  }
  for (auto& x : u) x /= std::sqrt(n2);
  return u;
}

/// The pooled vector of one participant utterance at one block.
inline std::vector<float> synthetic_vector(const SyntheticConfig& c, const std::vector<double>& direction,
                                           const std::string& session_id, Label label, std::size_t utt_index,
                                           int block) {
  Rng rng(derive_seed(c.seed, fnv1a64(session_id), (static_cast<std::uint64_t>(utt_index) << 16) ^ block));
  const double shift = label == 1 ? c.signal_at(block) : 0.0;
  std::vector<float> v(c.dim);
  for (std::size_t i = 0; i < c.dim; ++i)
    v[i] = static_cast<float>(c.noise_sigma * rng.normal() + shift * direction[i]);
  return v;
}

/// Speech backend defined at pooled granularity: each utterance yields a
/// single frame equal to the generator's vector.
class SyntheticSpeechBackend : public SpeechBackend {
 public:
  SyntheticSpeechBackend(SyntheticConfig config, int block)
      : SpeechBackend(make_spec(config, block)), config_(std::move(config)), direction_(synthetic_direction(config_)) {}

  FloatMatrix extract_block_states(const Dialogue& d, const Utterance& u) override {
    // Feature rows index modeled utterances; the generator keys on that row.
    std::size_t row = 0;
    for (const auto& x : d.utterances) {
      if (x.index == u.index) break;
      row += x.speaker == Speaker::participant;
    }
    auto v = synthetic_vector(config_, direction_, d.session_id, d.label, row, spec_.block);
    FloatMatrix m(1, config_.dim);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
  }

  const SyntheticConfig& config() const noexcept { return config_; }

 private:
  static BackendSpec make_spec(const SyntheticConfig& c, int block) {
    c.validate();
    BackendSpec s;
    s.name = c.name;
    s.kind = BackendKind::synthetic;
    s.block = block;
    s.depth = c.depth();
    s.dim = c.dim;
    return s;
  }

  SyntheticConfig config_;
  std::vector<double> direction_;
};

inline Corpus generate_synthetic_corpus(const SyntheticConfig& c) {
  c.validate();
  Rng rng(derive_seed(c.seed, 0x636f'7270'7573ULL));
  struct Slot {
    Split split;
    Label label;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < c.n_pos; ++i) slots.push_back({Split::train, 1});
  for (std::size_t i = 0; i < c.n_neg; ++i) slots.push_back({Split::train, 0});
  for (std::size_t i = 0; i < c.dev_pos; ++i) slots.push_back({Split::dev, 1});
  for (std::size_t i = 0; i < c.dev_neg; ++i) slots.push_back({Split::dev, 0});
  // Fisher-Yates within each split so labels are interleaved.
  auto shuffle = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = hi - lo; i > 1; --i) std::swap(slots[lo + i - 1], slots[lo + rng.index(i)]);
  };
  shuffle(0, c.n_pos + c.n_neg);
  shuffle(c.n_pos + c.n_neg, slots.size());

  std::vector<Dialogue> dialogues;
  std::size_t train_no = 0, dev_no = 0;
  for (const auto& slot : slots) {
    Dialogue d;
    char id[32];
    if (slot.split == Split::train)
      std::snprintf(id, sizeof id, "syn-train-%03zu", train_no++);
    else
      std::snprintf(id, sizeof id, "syn-dev-%03zu", dev_no++);
    d.session_id = id;
    d.label = slot.label;
    d.split = slot.split;
    const std::size_t t = c.t_min + rng.index(c.t_max - c.t_min + 1);
    double clock = 0.0;
    for (std::size_t k = 0; k < t; ++k) {
      for (Speaker who : {Speaker::interviewer, Speaker::participant}) {
        Utterance u;
        u.index = d.utterances.size();
        u.speaker = who;
        u.start_time = clock;
        u.end_time = clock + 1.0 + 4.0 * rng.uniform01();
        clock = u.end_time + 0.25;
        u.text = who == Speaker::interviewer ? "question " + std::to_string(k)
                                             : "answer " + std::to_string(rng.index(1000));
        d.utterances.push_back(std::move(u));
      }
    }
    dialogues.push_back(std::move(d));
  }
  return Corpus(std::move(dialogues));
}

/// Builds the corpus and fills `store_root` with features for every block
/// of the profile. Pure function of the config: equal configs give
/// byte-identical FMAT files.
inline std::pair<Corpus, FeatureStore> generate_synthetic(const SyntheticConfig& c,
                                                          const std::filesystem::path& store_root) {
  Corpus corpus = generate_synthetic_corpus(c);
  FeatureStore store(store_root);
  write_file_atomic(store_root / "synthetic.json", to_json(c).dump(2) + "\n");
  for (int block : c.blocks()) {
    SyntheticSpeechBackend backend(c, block);
    materialize(store, corpus, backend);
  }
  return {std::move(corpus), std::move(store)};
}

}  // namespace sdd

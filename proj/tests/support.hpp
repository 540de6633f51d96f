#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "sddkit/sddkit.hpp"

namespace sdd::testing {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sddkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

/// Dialogue with `participant_turns` participant utterances, each preceded
/// by an interviewer prompt.
inline Dialogue make_dialogue(const std::string& id, Label label, Split split, std::size_t participant_turns) {
  Dialogue d;
  d.session_id = id;
  d.label = label;
  d.split = split;
  double t = 0.0;
  for (std::size_t k = 0; k < participant_turns; ++k) {
    for (Speaker who : {Speaker::interviewer, Speaker::participant}) {
      Utterance u;
      u.index = d.utterances.size();
      u.speaker = who;
      u.start_time = t;
      u.end_time = t + 1.0;
      t += 1.5;
      u.text = who == Speaker::participant ? "reply " + std::to_string(k) : "prompt " + std::to_string(k);
      d.utterances.push_back(u);
    }
  }
  return d;
}

/// Corpus whose train/dev class counts match the given numbers; dialogue
/// lengths cycle through [t_min, t_max].
inline Corpus counts_corpus(std::size_t train_pos, std::size_t train_neg, std::size_t dev_pos = 0,
                            std::size_t dev_neg = 0, std::size_t t_min = 5, std::size_t t_max = 40) {
  std::vector<Dialogue> ds;
  std::size_t n = 0;
  auto add = [&](std::size_t count, Label label, Split split) {
    for (std::size_t i = 0; i < count; ++i, ++n) {
      const std::size_t t = t_min + (n * 7) % (t_max - t_min + 1);
      ds.push_back(make_dialogue(std::string(to_string(split)) + "-" + std::to_string(n), label, split, t));
    }
  };
  add(train_pos, 1, Split::train);
  add(train_neg, 0, Split::train);
  add(dev_pos, 1, Split::dev);
  add(dev_neg, 0, Split::dev);
  return Corpus(std::move(ds));
}

inline FloatMatrix random_matrix(std::uint32_t rows, std::uint32_t cols, Rng& rng, double scale = 1.0) {
  FloatMatrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(scale * rng.normal());
  return m;
}

}  // namespace sdd::testing

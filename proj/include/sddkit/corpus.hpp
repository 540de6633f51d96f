#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/error.hpp"
#include "sddkit/fileio.hpp"

namespace sdd {

enum class Speaker { participant, interviewer };
enum class Split { train, dev, test };

/// Binary session label: 0 = not depressed, 1 = depressed.
using Label = int;

inline std::string_view to_string(Speaker s) { return s == Speaker::participant ? "participant" : "interviewer"; }

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct Utterance {
  std::size_t index = 0;
  double start_time = 0.0;
  double end_time = 0.0;
  Speaker speaker = Speaker::participant;
  std::string text;
  std::optional<std::string> audio_ref;
};

struct Dialogue {
  std::string session_id;
  Label label = 0;
  Split split = Split::train;
  std::vector<Utterance> utterances;

  /// Utterances that become feature rows, in order. Interviewer turns are
  /// dropped unless `include_interviewer` is set.
  std::vector<const Utterance*> modeled_utterances(bool include_interviewer = false) const {
    std::vector<const Utterance*> out;
    for (const auto& u : utterances)
      if (include_interviewer || u.speaker == Speaker::participant) out.push_back(&u);
    return out;
  }

  std::size_t modeled_length(bool include_interviewer = false) const {
    if (include_interviewer) return utterances.size();
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.speaker == Speaker::participant;
    return n;
  }
};

struct ClassCounts {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Dialogue> dialogues) : dialogues_(std::move(dialogues)) { validate(); }

  const std::vector<Dialogue>& dialogues() const noexcept { return dialogues_; }
  std::size_t size() const noexcept { return dialogues_.size(); }
  bool empty() const noexcept { return dialogues_.empty(); }

  const Dialogue* find(std::string_view session_id) const {
    for (const auto& d : dialogues_)
      if (d.session_id == session_id) return &d;
    return nullptr;
  }

  const Dialogue& at(std::string_view session_id) const {
    if (const auto* d = find(session_id)) return *d;
    throw ValidationError("unknown session '" + std::string(session_id) + "'");
  }

  std::vector<const Dialogue*> split(Split s) const {
    std::vector<const Dialogue*> out;
    for (const auto& d : dialogues_)
      if (d.split == s) out.push_back(&d);
    return out;
  }

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& d : dialogues_) {
      if (d.session_id.empty()) throw ValidationError("empty session_id");
      if (!seen.insert(d.session_id).second)
        throw ValidationError("duplicate session_id '" + d.session_id + "'");
      if (d.label != 0 && d.label != 1)
        throw ValidationError("session '" + d.session_id + "': label must be 0 or 1");
      if (d.utterances.empty()) throw ValidationError("session '" + d.session_id + "' has no utterances");
      for (std::size_t i = 0; i < d.utterances.size(); ++i) {
        const auto& u = d.utterances[i];
        if (u.index != i)
          throw ValidationError("session '" + d.session_id + "': utterance indices not contiguous");
        if (!(u.end_time > u.start_time))
          throw ValidationError("session '" + d.session_id + "' utterance " + std::to_string(i) +
                                ": end must be after start");
      }
    }
  }

 private:
  std::vector<Dialogue> dialogues_;
};

inline ClassCounts class_counts(const Corpus& corpus, Split split) {
  if (corpus.empty()) throw ValidationError("corpus is empty");
  ClassCounts c;
  for (const auto* d : corpus.split(split)) (d->label == 1 ? c.n_pos : c.n_neg)++;
  if (c.n_pos + c.n_neg == 0) throw ValidationError("split '" + std::string(to_string(split)) + "' is empty");
  return c;
}

// Manifest: one JSON object per line.
//   {"session_id": str, "label": 0|1, "split": "train"|"dev"|"test",
//    "utterances": [{"start", "end", "speaker", "text", "audio"}, ...]}
// Unknown keys are ignored.

namespace manifest_detail {

template <typename T>
T required(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError("line " + std::to_string(line) + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace manifest_detail

inline Dialogue dialogue_from_json(const nlohmann::json& j, std::size_t line) {
  using manifest_detail::required;
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  Dialogue d;
  d.session_id = required<std::string>(j, "session_id", line);
  d.label = required<int>(j, "label", line);
  if (d.label != 0 && d.label != 1) throw ValidationError("line " + std::to_string(line) + ": label must be 0 or 1");
  auto split = required<std::string>(j, "split", line);
  try {
    d.split = parse_split(split);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  auto utts = required<nlohmann::json>(j, "utterances", line);
  if (!utts.is_array()) throw ValidationError("line " + std::to_string(line) + ": 'utterances' must be an array");
  for (const auto& uj : utts) {
    if (!uj.is_object()) throw ValidationError("line " + std::to_string(line) + ": utterance must be an object");
    Utterance u;
    u.index = d.utterances.size();
    u.start_time = required<double>(uj, "start", line);
    u.end_time = required<double>(uj, "end", line);
    auto speaker = required<std::string>(uj, "speaker", line);
    if (speaker == "participant") u.speaker = Speaker::participant;
    else if (speaker == "interviewer") u.speaker = Speaker::interviewer;
    else throw ValidationError("line " + std::to_string(line) + ": unknown speaker '" + speaker + "'");
    u.text = required<std::string>(uj, "text", line);
    auto audio = required<nlohmann::json>(uj, "audio", line);
    if (audio.is_string()) u.audio_ref = audio.get<std::string>();
    else if (!audio.is_null())
      throw ValidationError("line " + std::to_string(line) + ": 'audio' must be a string or null");
    d.utterances.push_back(std::move(u));
  }
  return d;
}

inline nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : d.utterances) {
    utts.push_back({{"start", u.start_time},
                    {"end", u.end_time},
                    {"speaker", to_string(u.speaker)},
                    {"text", u.text},
                    {"audio", u.audio_ref ? nlohmann::json(*u.audio_ref) : nlohmann::json(nullptr)}});
  }
  return {{"session_id", d.session_id}, {"label", d.label}, {"split", to_string(d.split)}, {"utterances", utts}};
}

inline Corpus parse_manifest(std::string_view text) {
  std::vector<Dialogue> dialogues;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    auto d = dialogue_from_json(j, line_no);
    if (!seen.insert(d.session_id).second)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate session_id '" + d.session_id + "'");
    dialogues.push_back(std::move(d));
  }
  return Corpus(std::move(dialogues));
}

inline Corpus load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

inline std::string format_manifest(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.dialogues()) {
    out += to_json(d).dump();
    out += '\n';
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, format_manifest(corpus));
}

}  // namespace sdd

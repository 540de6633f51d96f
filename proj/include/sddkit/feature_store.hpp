#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/backend.hpp"
#include "sddkit/corpus.hpp"
#include "sddkit/error.hpp"
#include "sddkit/fileio.hpp"
#include "sddkit/fmat.hpp"

namespace sdd {

/// Per-dialogue (T x D) features, one pooled row per modeled utterance.
struct DialogueFeatures {
  std::string session_id;
  FloatMatrix matrix;
};

struct StoreKey {
  std::string session_id;
  std::string backend;
  int block = 0;
  auto operator<=>(const StoreKey&) const = default;
};

struct StoreEntry {
  std::string file;  // relative to the store root
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t checksum = 0;
};

/// Directory of FMAT files plus `index.jsonl`, one line per entry:
///   {"session_id", "backend", "block", "file", "rows", "cols", "checksum"}
/// Files and the index are replaced atomically; readers never see partial
/// writes. Safe for concurrent use within one process.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    load_index();
  }

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path index_path() const { return root_ / "index.jsonl"; }

  std::optional<StoreEntry> lookup(const StoreKey& key) const {
    std::lock_guard lock(*mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const StoreKey& key) const { return lookup(key).has_value(); }

  std::size_t size() const {
    std::lock_guard lock(*mu_);
    return index_.size();
  }

  std::vector<StoreKey> keys() const {
    std::lock_guard lock(*mu_);
    std::vector<StoreKey> out;
    for (const auto& [k, _] : index_) out.push_back(k);
    return out;
  }

  /// True when the entry exists, decodes, and matches its recorded shape and checksum.
  bool is_valid(const StoreKey& key, std::optional<std::uint32_t> expected_rows = std::nullopt) const {
    auto e = lookup(key);
    if (!e) return false;
    if (expected_rows && e->rows != *expected_rows) return false;
    try {
      FloatMatrix m = read_fmat(root_ / e->file);
      return m.rows == e->rows && m.cols == e->cols && fmat::payload_crc32(m) == e->checksum;
    } catch (const Error&) {
      return false;
    }
  }

  FloatMatrix load(const StoreKey& key) const {
    auto e = lookup(key);
    if (!e)
      throw IoError("feature store has no entry for session '" + key.session_id + "', backend '" + key.backend +
                    "', block " + std::to_string(key.block));
    FloatMatrix m = read_fmat(root_ / e->file);
    if (m.rows != e->rows || m.cols != e->cols)
      throw FormatError(e->file + ": header does not match the store index", 8);
    if (fmat::payload_crc32(m) != e->checksum) throw FormatError(e->file + ": payload checksum mismatch", 16);
    return m;
  }

  void put(const StoreKey& key, const FloatMatrix& m) {
    StoreEntry e;
    e.file = relative_file(key);
    e.rows = m.rows;
    e.cols = m.cols;
    e.checksum = fmat::payload_crc32(m);
    write_fmat(root_ / e.file, m);
    std::lock_guard lock(*mu_);
    index_[key] = e;
    save_index_locked();
  }

  std::string relative_file(const StoreKey& key) const {
    return sanitize_path_component(key.backend) + "/block_" + std::to_string(key.block) + "/" + sanitize_path_component(key.session_id) + ".fmat";
  }

 private:
  void load_index() {
    auto path = index_path();
    if (!std::filesystem::exists(path)) return;
    std::string text = read_file(path);
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
      pos = nl == std::string::npos ? text.size() : nl + 1;
      ++line_no;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        StoreKey k{j.at("session_id").get<std::string>(), j.at("backend").get<std::string>(), j.at("block").get<int>()};
        StoreEntry e{j.at("file").get<std::string>(), j.at("rows").get<std::uint32_t>(),
                     j.at("cols").get<std::uint32_t>(), j.at("checksum").get<std::uint32_t>()};
        index_[k] = e;
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad store index entry: ") + ex.what(), line_no);
      }
    }
  }

  void save_index_locked() const {
    std::string out;
    for (const auto& [k, e] : index_) {
      out += nlohmann::json{{"session_id", k.session_id}, {"backend", k.backend}, {"block", k.block},
                            {"file", e.file},             {"rows", e.rows},       {"cols", e.cols},
                            {"checksum", e.checksum}}
                 .dump();
      out += '\n';
    }
    write_file_atomic(index_path(), out);
  }

  std::filesystem::path root_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::map<StoreKey, StoreEntry> index_;
};

enum class FeatureNormalization { none, l2 };

struct MaterializeOptions {
  bool include_interviewer = false;
  FeatureNormalization normalization = FeatureNormalization::none;
  std::vector<Split> splits{Split::train, Split::dev};
};

struct MaterializeReport {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t flagged_utterances = 0;
};

/// Extracts and caches one (T x D) matrix per session of the requested
/// splits. Valid existing entries are kept; missing or corrupt ones are
/// (re)computed. Interrupted runs resume where they stopped.
inline MaterializeReport materialize(FeatureStore& store, const Corpus& corpus, Backend& backend,
                                     const MaterializeOptions& opts = {}) {
  MaterializeReport report;
  for (const auto& d : corpus.dialogues()) {
    if (std::find(opts.splits.begin(), opts.splits.end(), d.split) == opts.splits.end()) continue;
    auto utts = d.modeled_utterances(opts.include_interviewer);
    if (utts.empty()) throw ValidationError("session '" + d.session_id + "' has no modeled utterances");
    StoreKey key{d.session_id, backend.tag(), backend.block()};
    if (store.is_valid(key, static_cast<std::uint32_t>(utts.size()))) {
      ++report.skipped;
      continue;
    }
    FloatMatrix m(static_cast<std::uint32_t>(utts.size()), backend.dim());
    for (std::size_t r = 0; r < utts.size(); ++r) {
      auto enc = backend.utterance_vector(d, *utts[r]);
      if (enc.values.size() != backend.dim())
        throw ValidationError("backend '" + backend.tag() + "' produced " + std::to_string(enc.values.size()) +
                              " values, expected " + std::to_string(backend.dim()));
      report.flagged_utterances += enc.flagged;
      if (opts.normalization == FeatureNormalization::l2) {
        double n2 = 0.0;
        for (float v : enc.values) n2 += double(v) * v;
        if (n2 > 0.0)
          for (auto& v : enc.values) v = static_cast<float>(v / std::sqrt(n2));
      }
      for (float v : enc.values)
        if (!std::isfinite(v)) throw ValidationError("non-finite feature in session '" + d.session_id + "'");
      std::copy(enc.values.begin(), enc.values.end(), m.row(r).begin());
    }
    store.put(key, m);
    ++report.written;
  }
  return report;
}

}  // namespace sdd

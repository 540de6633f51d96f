#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sddkit/corpus.hpp"
#include "sddkit/error.hpp"
#include "sddkit/fmat.hpp"
#include "sddkit/rng.hpp"

namespace sdd {

/// Where utterance representations come from.
///   speech_frames  frame-level hidden states exported per utterance
///   text_frames    token-level hidden states exported per transcript
///   hashed_text    deterministic text stand-in, seeded by token hashes
///   synthetic      generator of the synthetic corpus
enum class BackendKind { speech_frames, text_frames, hashed_text, synthetic };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::speech_frames: return "speech_frames";
    case BackendKind::text_frames: return "text_frames";
    case BackendKind::hashed_text: return "hashed_text";
    case BackendKind::synthetic: return "synthetic";
  }
  return "?";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "speech_frames") return BackendKind::speech_frames;
  if (s == "text_frames") return BackendKind::text_frames;
  if (s == "hashed_text") return BackendKind::hashed_text;
  if (s == "synthetic") return BackendKind::synthetic;
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

/// One representation producer. `block` is the 1-based index of the
/// encoder block whose output is used (block 1 is the first Transformer
/// block, not the convolutional front end); 0 means "not applicable".
struct BackendSpec {
  std::string name;
  BackendKind kind = BackendKind::synthetic;
  int block = 0;
  int depth = 12;
  std::uint32_t dim = 768;
  std::filesystem::path root;  // export directory (frames) or store root (synthetic)

  /// Backend name in feature-store keys; the block is keyed separately.
  std::string tag() const { return name; }

  void validate() const {
    if (name.empty()) throw ConfigError("backend name is empty");
    if (dim == 0) throw ConfigError("backend '" + name + "': dim must be positive");
    if (kind == BackendKind::speech_frames && (block < 1 || block > depth))
      throw ConfigError("backend '" + name + "': block " + std::to_string(block) + " outside 1.." +
                        std::to_string(depth));
    if (block < 0 || (block > depth && depth > 0))
      throw ConfigError("backend '" + name + "': block " + std::to_string(block) + " outside the declared depth " +
                        std::to_string(depth));
  }
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Temporal average over the rows of a (frames x D) matrix.
inline std::vector<float> pool_utterance(const FloatMatrix& m) {
  if (m.rows == 0 || m.cols == 0) throw ValidationError("cannot pool an empty matrix");
  std::vector<double> acc(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) acc[c] += row[c];
  }
  std::vector<float> out(m.cols);
  for (std::size_t c = 0; c < m.cols; ++c) out[c] = static_cast<float>(acc[c] / m.rows);
  return out;
}

/// Concatenation of per-utterance vectors in the given order.
inline std::vector<float> fuse_concat(std::span<const std::vector<float>> parts) {
  if (parts.empty()) throw AlignmentError("nothing to fuse");
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  std::vector<float> out;
  out.reserve(n);
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Column-wise concatenation of per-dialogue matrices (one row per utterance).
inline FloatMatrix fuse_concat(std::span<const FloatMatrix> parts) {
  if (parts.empty()) throw AlignmentError("nothing to fuse");
  std::uint32_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows != parts[0].rows)
      throw AlignmentError("fusion members disagree on utterance count (" + std::to_string(parts[0].rows) + " vs " +
                           std::to_string(p.rows) + ")");
    cols += p.cols;
  }
  FloatMatrix out(parts[0].rows, cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      auto src = p.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + c0);
      c0 += p.cols;
    }
  }
  return out;
}

struct EncodedUtterance {
  std::vector<float> values;
  bool flagged = false;  // produced from a placeholder (e.g. empty transcript)
};

class Backend {
 public:
  explicit Backend(BackendSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  virtual ~Backend() = default;

  const BackendSpec& spec() const noexcept { return spec_; }
  virtual std::uint32_t dim() const { return spec_.dim; }
  virtual std::string tag() const { return spec_.tag(); }
  virtual int block() const { return spec_.block; }

  /// One pooled vector per utterance.
  virtual EncodedUtterance utterance_vector(const Dialogue& d, const Utterance& u) = 0;

 protected:
  BackendSpec spec_;
};

class SpeechBackend : public Backend {
 public:
  using Backend::Backend;

  /// Hidden states after encoder block `spec().block` for one utterance (frames x D).
  virtual FloatMatrix extract_block_states(const Dialogue& d, const Utterance& u) = 0;

  EncodedUtterance utterance_vector(const Dialogue& d, const Utterance& u) override {
    return {pool_utterance(extract_block_states(d, u)), false};
  }
};

class TextBackend : public Backend {
 public:
  using Backend::Backend;

  /// Mean of final-block token representations of one transcript.
  virtual EncodedUtterance encode_text(std::string_view text) = 0;

  EncodedUtterance utterance_vector(const Dialogue&, const Utterance& u) override { return encode_text(u.text); }
};

inline bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

/// Reads frame-level hidden states exported by an external inference run:
///   <root>/block_<k>/<session_id>/<utterance index>.fmat   (frames x D)
class FrameDumpSpeechBackend : public SpeechBackend {
 public:
  explicit FrameDumpSpeechBackend(BackendSpec spec) : SpeechBackend(std::move(spec)) {
    if (spec_.kind != BackendKind::speech_frames) throw ConfigError("not a speech_frames backend");
  }

  std::filesystem::path path_for(const Dialogue& d, const Utterance& u) const {
    return spec_.root / ("block_" + std::to_string(spec_.block)) / d.session_id / (std::to_string(u.index) + ".fmat");
  }

  FloatMatrix extract_block_states(const Dialogue& d, const Utterance& u) override {
    auto path = path_for(d, u);
    if (!std::filesystem::exists(path)) throw IoError("missing hidden-state export " + path.string());
    FloatMatrix m = read_fmat(path);
    if (m.cols != spec_.dim)
      throw ValidationError(path.string() + ": expected " + std::to_string(spec_.dim) + " columns, found " +
                            std::to_string(m.cols));
    if (m.rows == 0) throw ValidationError(path.string() + ": no frames");
    return m;
  }
};

/// Reads token-level final-block states keyed by transcript content:
///   <root>/<fnv1a64(utf-8 text) as 16 hex digits>.fmat   (tokens x D)
/// A blank transcript resolves to the key of the empty string, which the
/// exporter fills with the encoding of a lone padding token.
class FrameDumpTextBackend : public TextBackend {
 public:
  explicit FrameDumpTextBackend(BackendSpec spec) : TextBackend(std::move(spec)) {
    if (spec_.kind != BackendKind::text_frames) throw ConfigError("not a text_frames backend");
  }

  std::filesystem::path path_for(std::string_view text) const {
    return spec_.root / (hex64(fnv1a64(is_blank(text) ? std::string_view{} : text)) + ".fmat");
  }

  EncodedUtterance encode_text(std::string_view text) override {
    auto path = path_for(text);
    if (!std::filesystem::exists(path)) throw IoError("missing text export " + path.string());
    FloatMatrix m = read_fmat(path);
    if (m.cols != spec_.dim)
      throw ValidationError(path.string() + ": expected " + std::to_string(spec_.dim) + " columns");
    return {pool_utterance(m), is_blank(text)};
  }
};

/// Deterministic text stand-in: whitespace tokens map to Gaussian vectors
/// seeded by their FNV-1a hash; the utterance vector is the token mean.
class HashedTextBackend : public TextBackend {
 public:
  explicit HashedTextBackend(BackendSpec spec) : TextBackend(std::move(spec)) {}

  EncodedUtterance encode_text(std::string_view text) override {
    std::vector<double> acc(spec_.dim, 0.0);
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto start = text.find_first_not_of(" \t\r\n", pos);
      if (start == std::string_view::npos) break;
      auto end = text.find_first_of(" \t\r\n", start);
      if (end == std::string_view::npos) end = text.size();
      add_token(text.substr(start, end - start), acc);
      ++n;
      pos = end;
    }
    bool flagged = false;
    if (n == 0) {
      add_token("<pad>", acc);
      n = 1;
      flagged = true;
    }
    std::vector<float> out(spec_.dim);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
    return {std::move(out), flagged};
  }

 private:
  void add_token(std::string_view tok, std::vector<double>& acc) const {
    Rng rng(derive_seed(fnv1a64(tok), spec_.dim));
    for (auto& a : acc) a += rng.normal();
  }
};

/// Concatenation of several backends, in the configured order.
class FusedBackend : public Backend {
 public:
  explicit FusedBackend(std::vector<std::unique_ptr<Backend>> members)
      : Backend(make_spec(members)), members_(std::move(members)) {}

  std::uint32_t dim() const override { return spec_.dim; }
  std::string tag() const override { return spec_.name; }
  int block() const override { return 0; }
  const std::vector<std::unique_ptr<Backend>>& members() const noexcept { return members_; }

  EncodedUtterance utterance_vector(const Dialogue& d, const Utterance& u) override {
    std::vector<std::vector<float>> parts;
    bool flagged = false;
    for (auto& m : members_) {
      auto e = m->utterance_vector(d, u);
      flagged = flagged || e.flagged;
      parts.push_back(std::move(e.values));
    }
    return {fuse_concat(std::span<const std::vector<float>>(parts)), flagged};
  }

 private:
  static BackendSpec make_spec(const std::vector<std::unique_ptr<Backend>>& members) {
    if (members.empty()) throw ConfigError("fusion needs at least one member");
    BackendSpec s;
    s.name = "cat{";
    s.dim = 0;
    s.depth = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i) s.name += ",";
      s.name += members[i]->tag();
      if (members[i]->block() > 0) s.name += "@" + std::to_string(members[i]->block());
      s.dim += members[i]->dim();
    }
    s.name += "}";
    return s;
  }

  std::vector<std::unique_ptr<Backend>> members_;
};

}  // namespace sdd

#pragma once

// Sub-dialogue shuffling.
//
// Every training dialogue is expanded into M sub-dialogues, each a
// contiguous span of its modeled utterances that inherits the session
// label. Positives get M+ spans each and negatives M- spans each, with M-
// chosen so that the two classes contribute about the same number of
// training samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sddkit/corpus.hpp"
#include "sddkit/error.hpp"
#include "sddkit/fileio.hpp"
#include "sddkit/rng.hpp"

namespace sdd {

/// corrected: M- = round(N+ * M+ / N-), balances class totals.
/// literal:   M- = round(N- * M+ / N+), the multiplier as usually printed,
///            which amplifies the majority class instead.
enum class BalanceMode { corrected, literal };

inline std::string_view to_string(BalanceMode m) { return m == BalanceMode::corrected ? "corrected" : "literal"; }

inline BalanceMode parse_balance_mode(std::string_view s) {
  if (s == "corrected") return BalanceMode::corrected;
  if (s == "literal") return BalanceMode::literal;
  throw ConfigError("unknown balance mode '" + std::string(s) + "'");
}

struct AugmentParams {
  std::int64_t m_plus = 500;
  double eps_low = 0.3;
  double eps_high = 1.0;
  std::uint64_t seed = 0;
  BalanceMode balance_mode = BalanceMode::corrected;
  bool include_interviewer = false;

  void validate() const {
    if (m_plus < 1) throw ConfigError("m_plus must be >= 1");
    if (!(0.0 < eps_low && eps_low < eps_high && eps_high <= 1.0))
      throw ConfigError("length fractions must satisfy 0 < eps_low < eps_high <= 1");
  }
};

struct SubDialogueRef {
  std::string session_id;
  std::size_t s = 0;  // first row, inclusive
  std::size_t e = 0;  // last row, inclusive
  Label label = 0;

  std::size_t length() const noexcept { return e - s + 1; }
  friend bool operator==(const SubDialogueRef&, const SubDialogueRef&) = default;
};

struct AugmentationPlan {
  AugmentParams params;
  std::int64_t m_minus = 0;
  std::vector<SubDialogueRef> entries;
};

namespace augment_detail {

/// num / den rounded to nearest, ties to even; exact in integers.
inline std::int64_t round_div_even(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  std::int64_t r2 = 2 * (num % den);
  if (r2 > den || (r2 == den && (q & 1))) ++q;
  return q;
}

}  // namespace augment_detail

inline std::int64_t negative_multiplier(const ClassCounts& counts, std::int64_t m_plus, BalanceMode mode) {
  if (counts.n_pos == 0 || counts.n_neg == 0)
    throw ValidationError("both classes need at least one training dialogue to balance (got N+=" +
                          std::to_string(counts.n_pos) + ", N-=" + std::to_string(counts.n_neg) + ")");
  if (m_plus < 1) throw ConfigError("m_plus must be >= 1");
  const auto pos = static_cast<std::int64_t>(counts.n_pos);
  const auto neg = static_cast<std::int64_t>(counts.n_neg);
  std::int64_t m = mode == BalanceMode::corrected ? augment_detail::round_div_even(pos * m_plus, neg)
                                                  : augment_detail::round_div_even(neg * m_plus, pos);
  return m < 1 ? 1 : m;
}

/// Inclusive span for length fraction `eps` and start variate u in [0, 1):
/// L = max(1, floor(eps * t)), s = floor(u * (t - L + 1)).
inline std::pair<std::size_t, std::size_t> subdialogue_span(std::size_t t, double eps, double u) {
  if (t == 0) throw ValidationError("cannot sample from an empty dialogue");
  auto len = static_cast<std::size_t>(std::floor(eps * static_cast<double>(t)));
  len = std::clamp<std::size_t>(len, 1, t);
  const std::size_t choices = t - len + 1;
  const std::size_t s = std::min(choices - 1, static_cast<std::size_t>(u * static_cast<double>(choices)));
  return {s, s + len - 1};
}

/// Draws one span of a length-t sequence. Consumes exactly two draws:
/// the length fraction, then the start variate.
inline std::pair<std::size_t, std::size_t> sample_subdialogue(std::size_t t, const AugmentParams& params, Rng& rng) {
  const double eps = rng.uniform(params.eps_low, params.eps_high);
  return subdialogue_span(t, eps, rng.uniform01());
}

inline AugmentationPlan build_plan(const Corpus& corpus, const AugmentParams& params) {
  params.validate();
  ClassCounts counts;
  for (const auto* d : corpus.split(Split::train)) (d->label == 1 ? counts.n_pos : counts.n_neg)++;
  if (counts.n_pos == 0 || counts.n_neg == 0)
    throw ValidationError("training split has an empty class (N+=" + std::to_string(counts.n_pos) +
                          ", N-=" + std::to_string(counts.n_neg) +
                          "); balanced augmentation is impossible, disable balancing or fix the split");

  AugmentationPlan plan;
  plan.params = params;
  plan.m_minus = negative_multiplier(counts, params.m_plus, params.balance_mode);
  plan.entries.reserve(counts.n_pos * params.m_plus + counts.n_neg * plan.m_minus);

  Rng rng(params.seed);
  for (const auto* d : corpus.split(Split::train)) {
    const std::size_t t = d->modeled_length(params.include_interviewer);
    if (t == 0) throw ValidationError("session '" + d->session_id + "' has no modeled utterances");
    const std::int64_t m = d->label == 1 ? params.m_plus : plan.m_minus;
    for (std::int64_t k = 0; k < m; ++k) {
      auto [s, e] = sample_subdialogue(t, params, rng);
      plan.entries.push_back({d->session_id, s, e, d->label});
    }
  }
  return plan;
}

// Plan file: JSON lines. The first line echoes the parameters,
//   {"plan": {"m_plus", "m_minus", "eps_low", "eps_high", "seed", "balance_mode", "include_interviewer"}}
// followed by one {"session_id", "s", "e", "label"} per entry.

inline nlohmann::json plan_header_json(const AugmentationPlan& plan) {
  const auto& p = plan.params;
  return {{"plan",
           {{"m_plus", p.m_plus},
            {"m_minus", plan.m_minus},
            {"eps_low", p.eps_low},
            {"eps_high", p.eps_high},
            {"seed", p.seed},
            {"balance_mode", to_string(p.balance_mode)},
            {"include_interviewer", p.include_interviewer}}}};
}

inline std::string format_plan(const AugmentationPlan& plan) {
  std::string out = plan_header_json(plan).dump();
  out += '\n';
  for (const auto& e : plan.entries) {
    out += nlohmann::json{{"session_id", e.session_id}, {"s", e.s}, {"e", e.e}, {"label", e.label}}.dump();
    out += '\n';
  }
  return out;
}

inline AugmentationPlan parse_plan(std::string_view text) {
  AugmentationPlan plan;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (!have_header) {
        const auto& h = j.at("plan");
        plan.params.m_plus = h.at("m_plus").get<std::int64_t>();
        plan.m_minus = h.at("m_minus").get<std::int64_t>();
        plan.params.eps_low = h.at("eps_low").get<double>();
        plan.params.eps_high = h.at("eps_high").get<double>();
        plan.params.seed = h.at("seed").get<std::uint64_t>();
        plan.params.balance_mode = parse_balance_mode(h.at("balance_mode").get<std::string>());
        plan.params.include_interviewer = h.value("include_interviewer", false);
        have_header = true;
        continue;
      }
      plan.entries.push_back({j.at("session_id").get<std::string>(), j.at("s").get<std::size_t>(),
                              j.at("e").get<std::size_t>(), j.at("label").get<Label>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad plan line: ") + e.what(), line_no);
    }
    if (plan.entries.back().s > plan.entries.back().e) throw ParseError("plan entry has s > e", line_no);
  }
  if (!have_header) throw ParseError("plan file has no header line", line_no);
  return plan;
}

inline void write_plan(const std::filesystem::path& path, const AugmentationPlan& plan) {
  write_file_atomic(path, format_plan(plan));
}

inline AugmentationPlan read_plan(const std::filesystem::path& path) { return parse_plan(read_file(path)); }

}  // namespace sdd

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sddkit/corpus.hpp"
#include "sddkit/error.hpp"

namespace sdd {

/// Positive class = depressed (label 1).
struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Precision, recall and F1 of the positive class; any 0/0 is taken as 0.
inline F1Result f1_score(std::span<const Label> preds, std::span<const Label> refs) {
  if (preds.size() != refs.size()) throw AlignmentError("prediction and reference counts differ");
  F1Result r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == 1, t = refs[i] == 1;
    if (p && t) ++r.tp;
    else if (p) ++r.fp;
    else if (t) ++r.fn;
    else ++r.tn;
  }
  r.precision = r.tp + r.fp ? double(r.tp) / double(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? double(r.tp) / double(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Session-keyed variant; both maps must cover the same sessions.
inline F1Result f1_score(const std::map<std::string, Label>& preds, const std::map<std::string, Label>& refs) {
  if (preds.size() != refs.size()) throw AlignmentError("prediction and reference session sets differ");
  std::vector<Label> p, r;
  for (const auto& [id, label] : refs) {
    auto it = preds.find(id);
    if (it == preds.end()) throw AlignmentError("no prediction for session '" + id + "'");
    p.push_back(it->second);
    r.push_back(label);
  }
  return f1_score(p, r);
}

/// F1 statistics across training seeds; std uses the n-1 denominator.
struct SeedStats {
  double f1_avg = 0.0;
  double f1_max = 0.0;
  double f1_std = 0.0;
  std::size_t n_seeds = 0;
};

inline SeedStats seed_stats(std::span<const double> f1s) {
  if (f1s.empty()) throw ValidationError("no seeds to aggregate");
  SeedStats s;
  s.n_seeds = f1s.size();
  s.f1_avg = std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
  s.f1_max = *std::max_element(f1s.begin(), f1s.end());
  if (f1s.size() > 1) {
    double ss = 0.0;
    for (double v : f1s) ss += (v - s.f1_avg) * (v - s.f1_avg);
    s.f1_std = std::sqrt(ss / static_cast<double>(f1s.size() - 1));
  }
  return s;
}

/// Per-item majority over an odd number of member label vectors.
inline std::vector<Label> majority_vote(const std::vector<std::vector<Label>>& members) {
  if (members.empty() || members.size() % 2 == 0)
    throw ValidationError("majority vote needs an odd number of members, got " + std::to_string(members.size()));
  const std::size_t n = members.front().size();
  for (const auto& m : members)
    if (m.size() != n) throw AlignmentError("ensemble members cover different numbers of sessions");
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = 0;
    for (const auto& m : members) pos += m[i] == 1;
    out[i] = 2 * pos > members.size() ? 1 : 0;
  }
  return out;
}

}  // namespace sdd

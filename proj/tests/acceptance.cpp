// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `sddkit_acceptance 4 6` runs a subset.
//
// Every threshold and workload size is pinned below.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sddkit/sddkit.hpp"

namespace fs = std::filesystem;
using namespace sdd;

namespace {

// ---- pinned tolerances and budgets -------------------------------------------

constexpr int kPlanCases = 1000;
constexpr double kPlanBudgetSec = 60;

constexpr int kCodecMatrices = 100;
constexpr double kCodecBudgetSec = 30;

constexpr double kGradRelTol = 1e-3;
constexpr double kGradStep = 1e-3;
constexpr double kPaddingTol = 1e-5;
constexpr std::size_t kParamMin = 250'000, kParamMax = 350'000;
constexpr double kDetectorBudgetSec = 60;

constexpr std::size_t kSeparableSeeds = 5;
constexpr double kSeparableMinF1 = 0.95;
constexpr std::size_t kNullSeeds = 10;
constexpr double kNullBand = 0.1;
constexpr double kLearningBudgetSec = 600;

constexpr std::size_t kStabilitySeeds = 10;
constexpr std::int64_t kMPlusLow = 1;    // desk-scale stand-in for M+ = 10
constexpr std::int64_t kMPlusHigh = 50;  // desk-scale stand-in for M+ = 500
constexpr double kStabilityBudgetSec = 900;

constexpr std::size_t kSweepSeeds = 5;
constexpr int kPeakBlock = 8;
constexpr double kSweepBudgetSec = 900;

constexpr int kVoteSessions = 2000;
constexpr double kVoteP = 0.8;
constexpr double kVoteExpected = 0.896;
constexpr double kVoteTol = 0.03;
constexpr double kVoteBudgetSec = 60;

constexpr int kMetricMaxExhaustive = 10;
constexpr int kMetricRandomCases = 1000;
constexpr double kMetricBudgetSec = 60;

constexpr double kDeterminismBudgetSec = 600;

// ---- helpers -------------------------------------------------------------------

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Scratch {
 public:
  explicit Scratch(const std::string& tag)
      : path_(fs::temp_directory_path() / ("sddkit-accept-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Dialogue toy_dialogue(const std::string& id, Label label, std::size_t turns) {
  Dialogue d;
  d.session_id = id;
  d.label = label;
  d.split = Split::train;
  for (std::size_t k = 0; k < turns; ++k) {
    Utterance u;
    u.index = k;
    u.start_time = 2.0 * k;
    u.end_time = 2.0 * k + 1.0;
    u.text = "x";
    d.utterances.push_back(u);
  }
  return d;
}

// Integer closest to a / b, ties to even, by scanning; the check value for M-.
std::int64_t nearest_quotient(std::int64_t a, std::int64_t b) {
  std::int64_t best = 0, best_err = -1;
  for (std::int64_t m = 0; m * b <= a + b; ++m) {
    const std::int64_t err = std::llabs(2 * a - 2 * b * m);
    if (best_err < 0 || err < best_err || (err == best_err && m % 2 == 0)) best = m, best_err = err;
  }
  return best;
}

// Brute-force positive-class F1 from a confusion matrix.
double f1_oracle(const std::vector<Label>& p, const std::vector<Label>& r) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    tp += p[i] == 1 && r[i] == 1;
    fp += p[i] == 1 && r[i] == 0;
    fn += p[i] == 0 && r[i] == 1;
  }
  return tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
}

// Synthetic corpus + store materialized under `root`.
struct SyntheticBench {
  SyntheticConfig cfg;
  Corpus corpus;
  std::unique_ptr<FeatureStore> store;

  SyntheticBench(const SyntheticConfig& c, const fs::path& root) : cfg(c) {
    auto [corp, st] = generate_synthetic(cfg, root);
    corpus = std::move(corp);
    store = std::make_unique<FeatureStore>(std::move(st));
  }
};

ExperimentConfig default_experiment(const SyntheticConfig& syn, std::int64_t m_plus, std::size_t n_seeds, int block) {
  ExperimentConfig e;
  e.name = syn.name;
  e.features = {syn.name, block};
  e.augment.m_plus = m_plus;
  e.seeds = default_seeds(n_seeds);
  e.jobs = 1;
  return e;
}

// ---- criteria --------------------------------------------------------------------

Outcome plan_invariants() {
  Rng rng(0xA11CE);
  int violations = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  for (int c = 0; c < kPlanCases; ++c) {
    const std::int64_t np = 1 + static_cast<std::int64_t>(rng.index(40));
    const std::int64_t nn = 1 + static_cast<std::int64_t>(rng.index(80));
    // M+ at least ceil(N-/(2 N+)) keeps exact balance above the M- >= 1 floor.
    const std::int64_t m_min = (nn + 2 * np - 1) / (2 * np);
    AugmentParams p;
    p.m_plus = m_min + static_cast<std::int64_t>(rng.index(60));
    p.eps_low = 0.02 + 0.9 * rng.uniform01();
    p.eps_high = std::min(1.0, p.eps_low + 0.01 + rng.uniform01());
    p.seed = rng.next();
    std::vector<Dialogue> ds;
    std::map<std::string, std::size_t> length;
    for (std::int64_t i = 0; i < np + nn; ++i) {
      const std::size_t t = 1 + rng.index(120);
      auto d = toy_dialogue("d" + std::to_string(i), i < np ? 1 : 0, t);
      length[d.session_id] = t;
      ds.push_back(std::move(d));
    }
    Corpus corpus(std::move(ds));
    auto plan = build_plan(corpus, p);

    const std::int64_t m_minus = std::max<std::int64_t>(1, nearest_quotient(np * p.m_plus, nn));
    if (plan.m_minus != m_minus) fail(fmt("case %d: M- %lld, expected %lld", c, (long long)plan.m_minus, (long long)m_minus));
    std::map<std::string, std::int64_t> per;
    std::int64_t pos = 0, neg = 0;
    for (const auto& e : plan.entries) {
      const auto t = length.at(e.session_id);
      const auto& d = corpus.at(e.session_id);
      const auto len = static_cast<std::int64_t>(e.e) - static_cast<std::int64_t>(e.s) + 1;
      const auto hi = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(p.eps_high * t)));
      const auto lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(p.eps_low * t)) - 1);
      if (!(e.s <= e.e && e.e < t)) fail(fmt("case %d: span %zu..%zu outside T=%zu", c, e.s, e.e, t));
      if (len > hi || len < lo) fail(fmt("case %d: length %lld outside [%lld, %lld]", c, (long long)len, (long long)lo, (long long)hi));
      if (e.label != d.label) fail(fmt("case %d: label not inherited", c));
      ++per[e.session_id];
      (e.label == 1 ? pos : neg) += 1;
    }
    for (const auto& d : corpus.dialogues())
      if (per[d.session_id] != (d.label == 1 ? p.m_plus : m_minus)) fail(fmt("case %d: wrong multiplicity", c));
    if (std::llabs(pos - neg) > nn / 2 + 1) fail(fmt("case %d: imbalance %lld > N-/2+1", c, (long long)std::llabs(pos - neg)));
  }

  const auto literal = negative_multiplier({30, 77}, 500, BalanceMode::literal);
  const bool literal_ok = literal == 1283 && nearest_quotient(77 * 500, 30) == 1283;
  return {violations == 0 && literal_ok,
          fmt("%d cases, %d violations%s; literal M-(30,77,500) = %lld", kPlanCases, violations,
              violations ? (" (first: " + first + ")").c_str() : "", (long long)literal)};
}

Outcome codec_round_trip() {
  Scratch dir("codec");
  Rng rng(0xC0DEC);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes = {{1, 1}, {1, 768}, {37, 1}, {1, 1}, {1, 32}, {500, 1}};
  while (shapes.size() < static_cast<std::size_t>(kCodecMatrices))
    shapes.push_back({static_cast<std::uint32_t>(1 + rng.index(200)), static_cast<std::uint32_t>(1 + rng.index(800))});
  int mismatches = 0, bad_truncations = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    FloatMatrix m(shapes[i].first, shapes[i].second);
    // Arbitrary bit patterns: NaN payloads, infinities, subnormals, -0.
    for (auto& v : m.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next()));
    const auto path = dir.path() / ("m" + std::to_string(i) + ".fmat");
    write_fmat(path, m);
    const auto back = read_fmat(path);
    if (!(back == m) || fmat::encode(back) != read_file(path)) ++mismatches;

    const auto size = fs::file_size(path);
    const auto cut = rng.index(size);
    fs::resize_file(path, cut);
    try {
      read_fmat(path);
      ++bad_truncations;
    } catch (const FormatError& e) {
      if (e.offset() != cut) ++bad_truncations;
    }
  }
  return {mismatches == 0 && bad_truncations == 0,
          fmt("%zu matrices, %d round-trip mismatches, %d truncations not rejected at the cut offset", shapes.size(),
              mismatches, bad_truncations)};
}

Outcome detector_numerics() {
  DetectorConfig tiny;
  tiny.input_dim = 8;
  tiny.model_dim = 8;
  tiny.heads = 2;
  tiny.ffn_dim = 16;
  tiny.dropout = 0.0;
  tiny.seed = 1;
  auto p = init_detector<double>(tiny);
  Rng rng(31);
  Mat<double> x(3, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  double worst = 0.0;
  for (int label : {0, 1}) {
    ForwardCache<double> cache;
    forward<double>(p, x, {}, &cache);
    auto g = zeros_like(p);
    backward<double>(p, cache, label, g);
    auto probe = p;
    visit_tensor_pairs(probe, g, [&](auto& t, const auto& gt) {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double orig = t.data()[i];
        t.data()[i] = orig + kGradStep;
        const double up = cross_entropy<double>(forward<double>(probe, x), label);
        t.data()[i] = orig - kGradStep;
        const double down = cross_entropy<double>(forward<double>(probe, x), label);
        t.data()[i] = orig;
        const double num = (up - down) / (2 * kGradStep), ana = gt.data()[i];
        worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
      }
    });
  }

  // Padding invariance on the full-size head.
  DetectorConfig full;
  full.input_dim = 32;
  full.seed = 2;
  auto q = init_detector<double>(full);
  Mat<double> seq(6, 32), padded(10, 32);
  for (Eigen::Index i = 0; i < padded.size(); ++i) padded.data()[i] = 10.0 * rng.normal();
  seq = padded.topRows(6);
  bool mask[10] = {false, false, false, false, false, false, true, true, true, true};
  const double pad_err = (forward<double>(q, seq) - forward<double>(q, padded, std::span<const bool>(mask, 10)))
                             .cwiseAbs()
                             .maxCoeff();

  const std::size_t count = parameter_count(init_detector<float>(DetectorConfig{}), false);
  const bool ok = worst <= kGradRelTol && pad_err <= kPaddingTol && count >= kParamMin && count <= kParamMax;
  return {ok, fmt("grad rel err %.2e (<= %.0e), padding diff %.2e (<= %.0e), params w/o projection %zu", worst,
                  kGradRelTol, pad_err, kPaddingTol, count)};
}

Outcome end_to_end_learning() {
  Scratch dir("learn");
  SyntheticConfig sep;
  sep.n_pos = sep.n_neg = 20;
  sep.dev_pos = sep.dev_neg = 6;
  sep.signal = 5.0;
  sep.noise_sigma = 1.0;
  sep.seed = 401;
  SyntheticBench a(sep, dir.path() / "separable");
  auto ra = seed_protocol(a.corpus, *a.store, default_experiment(sep, 20, kSeparableSeeds, 0));

  SyntheticConfig null = sep;
  null.signal = 0.0;
  null.seed = 402;
  SyntheticBench b(null, dir.path() / "null");
  auto rb = seed_protocol(b.corpus, *b.store, default_experiment(null, 20, kNullSeeds, 0));
  // Predicting every dev session positive.
  const double p = double(null.dev_pos) / double(null.dev_pos + null.dev_neg);
  const double baseline = 2 * p / (1 + p);

  const bool ok = ra.stats.f1_avg >= kSeparableMinF1 && std::abs(rb.stats.f1_avg - baseline) <= kNullBand;
  return {ok, fmt("separable F1-avg %.3f (>= %.2f, %zu seeds); null-signal F1-avg %.3f vs all-positive %.3f (band "
                  "+-%.1f, %zu seeds)",
                  ra.stats.f1_avg, kSeparableMinF1, kSeparableSeeds, rb.stats.f1_avg, baseline, kNullBand, kNullSeeds)};
}

Outcome augmentation_stability() {
  Scratch dir("stability");
  SyntheticConfig syn;
  syn.n_pos = syn.n_neg = 20;
  syn.dev_pos = syn.dev_neg = 10;
  syn.signal = 1.0;
  syn.seed = 501;
  SyntheticBench bench(syn, dir.path() / "store");
  auto base = default_experiment(syn, kMPlusLow, kStabilitySeeds, 0);
  base.output = dir.path() / "runs";
  auto sweep = m_plus_sweep(bench.corpus, *bench.store, base, {kMPlusLow, kMPlusHigh});
  const auto& lo = sweep.points[0].stats;
  const auto& hi = sweep.points[1].stats;
  return {hi.f1_std <= lo.f1_std,
          fmt("F1-std %.3f at M+=%lld vs %.3f at M+=%lld (F1-avg %.3f / %.3f, %zu seeds)", hi.f1_std,
              (long long)kMPlusHigh, lo.f1_std, (long long)kMPlusLow, hi.f1_avg, lo.f1_avg, kStabilitySeeds)};
}

Outcome block_sweep_recovery() {
  Scratch dir("sweep");
  SyntheticConfig syn;
  syn.n_pos = syn.n_neg = 20;
  syn.dev_pos = syn.dev_neg = 20;
  syn.signal = 1.0;
  syn.seed = 601;
  syn.name = "layered";
  for (int k = 1; k <= 12; ++k) syn.block_profile.push_back(std::exp(-0.5 * std::pow((k - kPeakBlock) / 1.5, 2)));
  SyntheticBench bench(syn, dir.path() / "store");
  auto base = default_experiment(syn, 10, kSweepSeeds, 2);
  base.output = dir.path() / "runs";
  auto sweep = block_sweep(bench.corpus, *bench.store, base, {2, 4, 6, 8, 10, 12});
  std::string curve;
  for (const auto& pt : sweep.points) curve += fmt(" %g:%.3f", pt.value, pt.stats.f1_avg);
  const double best = sweep.argmax();
  return {best == kPeakBlock, fmt("argmax block %g (want %d); F1-avg by block:%s", best, kPeakBlock, curve.c_str())};
}

Outcome ensemble_oracle() {
  int wrong = 0, cases = 0;
  for (int k : {3, 5})
    for (unsigned combo = 0; combo < (1u << k); ++combo) {
      std::vector<std::vector<Label>> members;
      int ones = 0;
      for (int m = 0; m < k; ++m) {
        members.push_back({static_cast<Label>((combo >> m) & 1)});
        ones += (combo >> m) & 1;
      }
      wrong += majority_vote(members)[0] != (2 * ones > k ? 1 : 0);
      ++cases;
    }

  Rng rng(0x7E5);
  std::vector<Label> truth(kVoteSessions);
  for (int i = 0; i < kVoteSessions; ++i) truth[i] = i % 2;
  std::vector<std::vector<Label>> members(3, std::vector<Label>(kVoteSessions));
  for (auto& m : members)
    for (int i = 0; i < kVoteSessions; ++i) m[i] = rng.bernoulli(kVoteP) ? truth[i] : 1 - truth[i];
  auto fused = majority_vote(members);
  int correct = 0;
  for (int i = 0; i < kVoteSessions; ++i) correct += fused[i] == truth[i];
  const double acc = double(correct) / kVoteSessions;
  const bool ok = wrong == 0 && std::abs(acc - kVoteExpected) <= kVoteTol;
  return {ok, fmt("%d/%d enumerated votes wrong; fused accuracy %.4f vs %.3f (+-%.2f) over %d sessions", wrong, cases,
                  acc, kVoteExpected, kVoteTol, kVoteSessions)};
}

Outcome metric_oracle() {
  long checked = 0, wrong = 0;
  for (int n = 1; n <= kMetricMaxExhaustive; ++n)
    for (unsigned pv = 0; pv < (1u << n); ++pv)
      for (unsigned rv = 0; rv < (1u << n); ++rv) {
        std::vector<Label> p(n), r(n);
        for (int i = 0; i < n; ++i) p[i] = (pv >> i) & 1, r[i] = (rv >> i) & 1;
        wrong += std::abs(f1_score(p, r).f1 - f1_oracle(p, r)) > 1e-12;
        ++checked;
      }
  Rng rng(0xF1);
  for (int c = 0; c < kMetricRandomCases; ++c) {
    const std::size_t n = 11 + rng.index(990);
    const double rate_p = rng.uniform01(), rate_r = rng.uniform01();
    std::vector<Label> p(n), r(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.bernoulli(rate_p), r[i] = rng.bernoulli(rate_r);
    wrong += std::abs(f1_score(p, r).f1 - f1_oracle(p, r)) > 1e-12;
    ++checked;
  }
  return {wrong == 0, fmt("%ld assignments checked, %ld mismatches", checked, wrong)};
}

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" SDDKIT_CLI "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  Scratch dir("determinism");
  std::vector<fs::path> reps = {dir.path() / "a", dir.path() / "b"};
  const std::string exp = R"({"name":"det","manifest":"syn/manifest.jsonl","store":"syn/store",
    "features":{"backend":"synthetic","block":0},"augment":{"m_plus":10,"seed":7},
    "train":{"max_epochs":6,"patience":3},"seeds":[0,1],"output":"runs"})";
  for (const auto& r : reps) {
    fs::create_directories(r);
    write_file_atomic(r / "exp.json", exp);
    if (run_cli(r, "synth --out syn --seed 9 --signal 1.5") != 0) return {false, "synth failed"};
    if (run_cli(r, "plan --manifest syn/manifest.jsonl --out plan.jsonl --m-plus 10 --seed 7") != 0)
      return {false, "plan failed"};
    if (run_cli(r, "train --config exp.json") != 0) return {false, "train failed"};
  }
  int compared = 0, differing = 0;
  auto same = [&](const fs::path& rel) {
    ++compared;
    if (read_file(reps[0] / rel) != read_file(reps[1] / rel)) ++differing;
  };
  same("plan.jsonl");
  same("syn/manifest.jsonl");
  for (const auto& e : fs::recursive_directory_iterator(reps[0] / "syn/store"))
    if (e.is_regular_file()) same(fs::relative(e.path(), reps[0]));
  for (const char* s : {"seed_000", "seed_001"}) {
    same(fs::path("runs") / s / "dev_predictions.jsonl");
    same(fs::path("runs") / s / "params.bin");
  }
  return {differing == 0, fmt("%d artifacts compared across two runs, %d differ", compared, differing)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_sec;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "augmentation plan invariants", kPlanBudgetSec, plan_invariants},
      {2, "FMAT codec round trip", kCodecBudgetSec, codec_round_trip},
      {3, "detector numerics", kDetectorBudgetSec, detector_numerics},
      {4, "end-to-end learning", kLearningBudgetSec, end_to_end_learning},
      {5, "augmentation stabilizes seeds", kStabilityBudgetSec, augmentation_stability},
      {6, "block sweep recovers peak", kSweepBudgetSec, block_sweep_recovery},
      {7, "ensemble oracle", kVoteBudgetSec, ensemble_oracle},
      {8, "metric oracle", kMetricBudgetSec, metric_oracle},
      {9, "CLI determinism", kDeterminismBudgetSec, cli_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = sec <= c.budget_sec;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] criterion %d (%s): %s; %.1fs of %.0fs budget%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), sec, c.budget_sec, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}

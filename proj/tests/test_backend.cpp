#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "support.hpp"

using namespace sdd;
using sdd::testing::make_dialogue;
using sdd::testing::random_matrix;
using sdd::testing::TempDir;

namespace {

BackendSpec speech_spec(const std::filesystem::path& root, int block, std::uint32_t dim = 768) {
  BackendSpec s;
  s.name = "wavlm-base-plus";
  s.kind = BackendKind::speech_frames;
  s.block = block;
  s.dim = dim;
  s.root = root;
  return s;
}

BackendSpec hashed_spec(std::uint32_t dim, const std::string& name = "hashed") {
  BackendSpec s;
  s.name = name;
  s.kind = BackendKind::hashed_text;
  s.depth = 0;
  s.dim = dim;
  return s;
}

// Writes frame dumps for every utterance of `d` at `block`.
void export_frames(const std::filesystem::path& root, const Dialogue& d, int block, std::uint32_t dim, Rng& rng) {
  for (const auto& u : d.utterances)
    write_fmat(root / ("block_" + std::to_string(block)) / d.session_id / (std::to_string(u.index) + ".fmat"),
               random_matrix(static_cast<std::uint32_t>(3 + rng.index(20)), dim, rng));
}

}  // namespace

TEST(Pooling, TwoRows) {
  FloatMatrix m(2, 2);
  m.data = {1, 2, 3, 4};
  EXPECT_EQ(pool_utterance(m), (std::vector<float>{2, 3}));
}

TEST(Pooling, SingleRowIsIdentity) {
  Rng rng(1);
  auto m = random_matrix(1, 9, rng);
  EXPECT_EQ(pool_utterance(m), m.data);
}

TEST(Pooling, SevenByFiveMatchesSummationOracle) {
  Rng rng(2);
  auto m = random_matrix(7, 5, rng);
  auto got = pool_utterance(m);
  for (std::size_t c = 0; c < 5; ++c) {
    long double s = 0;
    for (std::size_t r = 0; r < 7; ++r) s += m(r, c);
    EXPECT_NEAR(got[c], static_cast<double>(s / 7), 1e-6);
  }
}

TEST(Pooling, Linearity) {
  Rng rng(3);
  auto m = random_matrix(6, 4, rng);
  auto scaled = m;
  for (auto& v : scaled.data) v *= 2.5f;
  auto a = pool_utterance(m), b = pool_utterance(scaled);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(b[c], 2.5f * a[c], 1e-5);
}

TEST(Pooling, EmptyIsRejected) { EXPECT_THROW(pool_utterance(FloatMatrix(0, 3)), ValidationError); }

TEST(Fusion, SpeechPlusTextDims) {
  std::vector<std::vector<float>> parts{std::vector<float>(768, 1.0f), std::vector<float>(768, 2.0f)};
  EXPECT_EQ(fuse_concat(std::span<const std::vector<float>>(parts)).size(), 1536u);
}

TEST(Fusion, SingleInputIsIdentity) {
  std::vector<std::vector<float>> parts{{1.0f, -2.0f, 3.0f}};
  EXPECT_EQ(fuse_concat(std::span<const std::vector<float>>(parts)), parts[0]);
}

TEST(Fusion, OrderPermutesCoordinatesOnly) {
  Rng rng(4);
  std::vector<float> a(5), b(3);
  for (auto& v : a) v = static_cast<float>(rng.normal());
  for (auto& v : b) v = static_cast<float>(rng.normal());
  std::vector<std::vector<float>> ab{a, b}, ba{b, a};
  auto x = fuse_concat(std::span<const std::vector<float>>(ab));
  auto y = fuse_concat(std::span<const std::vector<float>>(ba));
  auto sx = x, sy = y;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());
  EXPECT_EQ(sx, sy);
  auto norm = [](const std::vector<float>& v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); };
  EXPECT_DOUBLE_EQ(norm(x), norm(y));
}

TEST(Fusion, DimensionAdditivity) {
  Rng rng(5);
  for (int k = 1; k <= 5; ++k) {
    std::vector<FloatMatrix> parts;
    std::uint32_t total = 0;
    for (int i = 0; i < k; ++i) {
      auto c = static_cast<std::uint32_t>(1 + rng.index(10));
      parts.push_back(random_matrix(4, c, rng));
      total += c;
    }
    EXPECT_EQ(fuse_concat(std::span<const FloatMatrix>(parts)).cols, total);
  }
}

TEST(Fusion, MisalignedRowsAreRejected) {
  std::vector<FloatMatrix> parts{FloatMatrix(3, 2), FloatMatrix(4, 2)};
  EXPECT_THROW(fuse_concat(std::span<const FloatMatrix>(parts)), AlignmentError);
}

TEST(BackendSpec, BlockOutsideDepthIsConfigError) {
  TempDir tmp("spec");
  EXPECT_THROW(FrameDumpSpeechBackend(speech_spec(tmp.path(), 13)), ConfigError);
  EXPECT_THROW(FrameDumpSpeechBackend(speech_spec(tmp.path(), 0)), ConfigError);
  EXPECT_NO_THROW(FrameDumpSpeechBackend(speech_spec(tmp.path(), 12)));
}

TEST(FrameDumpSpeech, PoolsExportedFramesTo768) {
  TempDir tmp("speech");
  Rng rng(6);
  auto d = make_dialogue("s1", 1, Split::train, 2);
  export_frames(tmp.path(), d, 8, 768, rng);
  FrameDumpSpeechBackend b(speech_spec(tmp.path(), 8));
  for (const auto& u : d.utterances) {
    auto frames = b.extract_block_states(d, u);
    EXPECT_EQ(frames.cols, 768u);
    EXPECT_EQ(b.utterance_vector(d, u).values, pool_utterance(frames));
  }
  FrameDumpSpeechBackend other_block(speech_spec(tmp.path(), 7));
  EXPECT_THROW(other_block.utterance_vector(d, d.utterances[0]), IoError);
}

TEST(FrameDumpText, KeyedByContentAndBlankIsFlagged) {
  TempDir tmp("text");
  Rng rng(7);
  BackendSpec s;
  s.name = "roberta-base-hyp";
  s.kind = BackendKind::text_frames;
  s.depth = 0;
  s.dim = 16;
  s.root = tmp.path();
  FrameDumpTextBackend b(s);
  write_fmat(b.path_for("i feel tired"), random_matrix(5, 16, rng));
  write_fmat(b.path_for(""), random_matrix(1, 16, rng));
  auto x = b.encode_text("i feel tired");
  EXPECT_FALSE(x.flagged);
  EXPECT_EQ(x.values, pool_utterance(read_fmat(b.path_for("i feel tired"))));
  auto blank = b.encode_text("   ");
  EXPECT_TRUE(blank.flagged);
  EXPECT_EQ(b.path_for("  "), b.path_for(""));
  EXPECT_THROW(b.encode_text("unseen"), IoError);
}

TEST(HashedText, DeterministicAndTextSensitive) {
  HashedTextBackend a(hashed_spec(24)), b(hashed_spec(24));
  EXPECT_EQ(a.encode_text("i am fine").values, b.encode_text("i am fine").values);
  // Hypothesis vs reference transcripts give different vectors.
  EXPECT_NE(a.encode_text("i am fine").values, a.encode_text("i am find").values);
  EXPECT_TRUE(a.encode_text("").flagged);
  EXPECT_EQ(a.encode_text("").values.size(), 24u);
}

TEST(FusedBackend, ConcatenatesMembersInOrder) {
  std::vector<std::unique_ptr<Backend>> members;
  members.push_back(std::make_unique<HashedTextBackend>(hashed_spec(4, "a")));
  members.push_back(std::make_unique<HashedTextBackend>(hashed_spec(6, "b")));
  FusedBackend f(std::move(members));
  EXPECT_EQ(f.dim(), 10u);
  EXPECT_EQ(f.tag(), "cat{a,b}");
  auto d = make_dialogue("s", 0, Split::train, 1);
  const auto& u = d.utterances[1];
  auto v = f.utterance_vector(d, u).values;
  HashedTextBackend a(hashed_spec(4, "a")), b(hashed_spec(6, "b"));
  auto va = a.utterance_vector(d, u).values, vb = b.utterance_vector(d, u).values;
  EXPECT_TRUE(std::equal(va.begin(), va.end(), v.begin()));
  EXPECT_TRUE(std::equal(vb.begin(), vb.end(), v.begin() + 4));
}

TEST(FeatureStore, PutLookupLoad) {
  TempDir tmp("store");
  Rng rng(8);
  auto m = random_matrix(5, 3, rng);
  StoreKey key{"s/1", "wavlm-base-plus", 8};
  {
    FeatureStore store(tmp.path());
    store.put(key, m);
    EXPECT_TRUE(store.is_valid(key, 5u));
    EXPECT_FALSE(store.is_valid(key, 6u));
  }
  FeatureStore reopened(tmp.path());
  ASSERT_TRUE(reopened.contains(key));
  EXPECT_TRUE(reopened.load(key) == m);
  EXPECT_FALSE(reopened.contains({"s/1", "wavlm-base-plus", 7}));
  EXPECT_THROW(reopened.load({"s/1", "hubert", 8}), IoError);
}

TEST(FeatureStore, CorruptPayloadFailsChecksum) {
  TempDir tmp("store");
  Rng rng(9);
  FeatureStore store(tmp.path());
  StoreKey key{"a", "x", 1};
  store.put(key, random_matrix(4, 4, rng));
  auto file = tmp.path() / store.lookup(key)->file;
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    f.put('\x7f');
  }
  EXPECT_FALSE(store.is_valid(key));
  EXPECT_THROW(store.load(key), FormatError);
}

namespace {

struct SyntheticFixture {
  TempDir tmp{"materialize"};
  SyntheticConfig cfg;
  Corpus corpus;
  SyntheticFixture() {
    cfg.n_pos = cfg.n_neg = 14;
    cfg.dev_pos = cfg.dev_neg = 6;
    cfg.seed = 21;
    corpus = generate_synthetic_corpus(cfg);
  }
};

}  // namespace

TEST(Materialize, FortySessionsOneFileEach) {
  SyntheticFixture fx;
  FeatureStore store(fx.tmp.path());
  SyntheticSpeechBackend backend(fx.cfg, 0);
  auto r = materialize(store, fx.corpus, backend);
  EXPECT_EQ(r.written, 40u);
  EXPECT_EQ(store.size(), 40u);
  for (const auto& d : fx.corpus.dialogues()) {
    auto m = store.load({d.session_id, backend.tag(), 0});
    EXPECT_EQ(m.rows, d.modeled_length());
    EXPECT_EQ(m.cols, fx.cfg.dim);
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.path() / "synthetic/block_0" / (d.session_id + ".fmat")));
  }
}

TEST(Materialize, RerunIsIdempotentAndRepairsCorruption) {
  SyntheticFixture fx;
  FeatureStore store(fx.tmp.path());
  SyntheticSpeechBackend backend(fx.cfg, 0);
  materialize(store, fx.corpus, backend);
  auto again = materialize(store, fx.corpus, backend);
  EXPECT_EQ(again.written, 0u);
  EXPECT_EQ(again.skipped, 40u);

  const StoreKey key{fx.corpus.dialogues()[3].session_id, backend.tag(), 0};
  const auto before = store.load(key);
  std::filesystem::resize_file(fx.tmp.path() / store.lookup(key)->file, 20);
  auto repaired = materialize(store, fx.corpus, backend);
  EXPECT_EQ(repaired.written, 1u);
  EXPECT_TRUE(store.load(key) == before);
}

TEST(Materialize, TwoRunsGiveIdenticalStores) {
  SyntheticFixture fx;
  TempDir other("materialize-b");
  FeatureStore a(fx.tmp.path()), b(other.path());
  SyntheticSpeechBackend backend(fx.cfg, 0);
  materialize(a, fx.corpus, backend);
  materialize(b, fx.corpus, backend);
  for (const auto& key : a.keys()) {
    EXPECT_EQ(read_file(fx.tmp.path() / a.lookup(key)->file), read_file(other.path() / b.lookup(key)->file));
  }
  EXPECT_EQ(read_file(a.index_path()), read_file(b.index_path()));
}

TEST(Materialize, SyntheticRowsEqualGeneratorVectors) {
  SyntheticFixture fx;
  FeatureStore store(fx.tmp.path());
  SyntheticSpeechBackend backend(fx.cfg, 0);
  materialize(store, fx.corpus, backend);
  const auto dir = synthetic_direction(fx.cfg);
  const auto& d = fx.corpus.dialogues().front();
  auto m = store.load({d.session_id, backend.tag(), 0});
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto v = synthetic_vector(fx.cfg, dir, d.session_id, d.label, r, 0);
    EXPECT_TRUE(std::equal(v.begin(), v.end(), m.row(r).begin()));
  }
}

TEST(Materialize, L2NormalizationGivesUnitRows) {
  SyntheticFixture fx;
  FeatureStore store(fx.tmp.path());
  SyntheticSpeechBackend backend(fx.cfg, 0);
  MaterializeOptions opts;
  opts.normalization = FeatureNormalization::l2;
  materialize(store, fx.corpus, backend, opts);
  auto m = store.load({fx.corpus.dialogues()[0].session_id, backend.tag(), 0});
  for (std::size_t r = 0; r < m.rows; ++r) {
    double n2 = 0;
    for (float v : m.row(r)) n2 += double(v) * v;
    EXPECT_NEAR(n2, 1.0, 1e-5);
  }
}

TEST(Materialize, InterviewerRowsWhenRequested) {
  SyntheticFixture fx;
  FeatureStore store(fx.tmp.path());
  HashedTextBackend backend(hashed_spec(8));
  MaterializeOptions opts;
  opts.include_interviewer = true;
  materialize(store, fx.corpus, backend, opts);
  const auto& d = fx.corpus.dialogues()[0];
  EXPECT_EQ(store.load({d.session_id, "hashed", 0}).rows, d.utterances.size());
}

TEST(Synthetic, GenerateWritesEveryProfileBlockByteIdentically) {
  TempDir a("gen-a"), b("gen-b");
  SyntheticConfig cfg;
  cfg.n_pos = cfg.n_neg = 3;
  cfg.dev_pos = cfg.dev_neg = 1;
  cfg.block_profile = {0.2, 1.0, 0.5};
  auto [ca, sa] = generate_synthetic(cfg, a.path());
  auto [cb, sb] = generate_synthetic(cfg, b.path());
  EXPECT_EQ(sa.size(), 8u * 3u);
  for (const auto& key : sa.keys())
    EXPECT_EQ(read_file(a.path() / sa.lookup(key)->file), read_file(b.path() / sb.lookup(key)->file));
}

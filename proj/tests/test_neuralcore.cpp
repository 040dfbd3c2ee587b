#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <fstream>

#include "lotcrs/errors.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/rng.hpp"
#include "lotcrs/text.hpp"

using namespace lotcrs;
using namespace lotcrs::neural;

namespace {

corpus::Conversation make_conv(std::vector<std::pair<corpus::Role, std::string>> turns) {
  corpus::Conversation c;
  c.id = "t";
  for (auto& [role, text] : turns) {
    corpus::Utterance u;
    u.role = role;
    u.tokens = tokenize_text(text);
    c.turns.push_back(std::move(u));
  }
  return c;
}

Model small_model(int d = 8, int n_words = 6, int items = 3, std::uint64_t seed = 3) {
  std::vector<corpus::Conversation> convs;
  corpus::Conversation c;
  c.id = "v";
  corpus::Utterance u;
  u.role = corpus::Role::kSeeker;
  for (int i = 0; i < n_words; ++i) u.tokens.push_back("w" + std::to_string(i));
  c.turns.push_back(u);
  convs.push_back(c);
  ModelDims dims;
  dims.d = d;
  dims.vocab = 5 + n_words;
  dims.items = items;
  dims.max_len = 24;
  dims.dec_max_len = 48;
  std::vector<std::string> ids;
  for (int i = 0; i < items; ++i) ids.push_back("i" + std::to_string(i));
  return make_model(dims, build_vocabulary(convs), std::move(ids), seed);
}

}  // namespace

TEST_CASE("vocabulary: specials occupy fixed dense ids exactly once") {
  auto m = small_model();
  CHECK(m.vocab.token_of(Vocabulary::kCls) == std::string(kClsToken));
  CHECK(m.vocab.token_of(Vocabulary::kSep) == std::string(kSepToken));
  CHECK(m.vocab.token_of(Vocabulary::kMask) == std::string(kMaskToken));
  CHECK(m.vocab.token_of(Vocabulary::kItem) == std::string(kItemToken));
  CHECK(m.vocab.token_of(Vocabulary::kUnk) == std::string(kUnkToken));
  for (int i = 0; i < m.vocab.size(); ++i) {
    CHECK(m.vocab.id_of(m.vocab.token_of(i)) == i);
  }
  CHECK(m.vocab.id_of("definitely-not-a-token") == Vocabulary::kUnk);
}

TEST_CASE("tokenize: empty conversation is [CLS] only") {
  auto m = small_model();
  corpus::Conversation empty;
  const auto ids = tokenize(empty, m.vocab, 16);
  CHECK(ids == std::vector<int>{Vocabulary::kCls});
}

TEST_CASE("tokenize: utterances joined with [SEP]") {
  auto m = small_model();
  auto conv = make_conv({{corpus::Role::kSeeker, "w0 w1"}, {corpus::Role::kRecommender, "w2"}});
  const auto ids = tokenize(conv, m.vocab, 16);
  const std::vector<int> expect = {Vocabulary::kCls, m.vocab.id_of("w0"), m.vocab.id_of("w1"),
                                   Vocabulary::kSep, m.vocab.id_of("w2"), Vocabulary::kSep};
  CHECK(ids == expect);
}

TEST_CASE("tokenize: left truncation keeps [CLS] and the suffix") {
  auto m = small_model();
  corpus::Conversation conv;
  corpus::Utterance u;
  u.role = corpus::Role::kSeeker;
  for (int i = 0; i < 100; ++i) u.tokens.push_back("w" + std::to_string(i % 6));
  conv.turns.push_back(u);
  const auto full = tokenize(conv, m.vocab, 200);
  const auto cut = tokenize(conv, m.vocab, 16);
  REQUIRE(cut.size() == 16);
  CHECK(cut.front() == Vocabulary::kCls);
  // suffix of the full body preserved
  const std::vector<int> tail(full.end() - 15, full.end());
  const std::vector<int> cut_tail(cut.begin() + 1, cut.end());
  CHECK(cut_tail == tail);
  CHECK_THROWS_AS(tokenize(conv, m.vocab, 1), ArgumentError);
}

TEST_CASE("encode: output shape and bitwise determinism") {
  auto m = small_model();
  const std::vector<int> ids = {0, 5, 6, 7, 1};
  const auto a = encode_context(m, ids);
  const auto b = encode_context(m, ids);
  CHECK(a.token_states.rows == 5);
  CHECK(a.token_states.cols == m.dims.d);
  CHECK(a.token_states.a == b.token_states.a);
  CHECK(a.cls == b.cls);
  for (int j = 0; j < m.dims.d; ++j) CHECK(a.cls[static_cast<std::size_t>(j)] == a.token_states(0, j));
}

TEST_CASE("encode: rejects out-of-vocabulary ids") {
  auto m = small_model();
  CHECK_THROWS_AS(encode_context(m, {0, 99}), ArgumentError);
}

TEST_CASE("encode: all-zero parameters leave only the position encoding") {
  auto m = small_model();
  for (const auto& f : param_fields()) (m.p.*(f.member)).zero();
  const std::vector<int> ids = {0, 5, 6};
  const auto enc = encode_context(m, ids);
  // Hand-evaluated forward: X = 0 + P; Q=K=V=0 so attention output is zero;
  // residual leaves exactly the position rows.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < m.dims.d; ++j) {
      CHECK(enc.token_states(i, j) == doctest::Approx(m.pos(i, j)).epsilon(1e-15));
    }
  }
}

TEST_CASE("encode: cls is sensitive to swapping two non-special tokens") {
  auto m = small_model();
  const auto a = encode_context(m, {0, 5, 6, 1});
  const auto b = encode_context(m, {0, 6, 5, 1});
  bool differs = false;
  for (int j = 0; j < m.dims.d; ++j) {
    if (a.cls[static_cast<std::size_t>(j)] != b.cls[static_cast<std::size_t>(j)]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("decode: causal mask blocks later-token influence") {
  auto m = small_model();
  Mat prompts(2, m.dims.d);
  Rng rng(5);
  for (double& v : prompts.a) v = rng.uniform(-1, 1);
  std::vector<int> ids = {5, 6, 7, 8};
  const Mat base = decode_logits(m, prompts, ids);
  std::vector<int> edited = ids;
  edited[3] = 9;  // edit the last token
  const Mat changed = decode_logits(m, prompts, edited);
  for (int j = 0; j < 3; ++j) {
    for (int v = 0; v < m.dims.vocab; ++v) {
      CHECK(base(j, v) == changed(j, v));
    }
  }
}

TEST_CASE("decode: empty prompt prefix is plain causal decoding") {
  auto m = small_model();
  const Mat logits = decode_logits(m, Mat(), {5, 6});
  CHECK(logits.rows == 2);
  CHECK(logits.cols == m.dims.vocab);
}

TEST_CASE("decode: length overflow is an argument error") {
  auto m = small_model();
  std::vector<int> ids(static_cast<std::size_t>(m.dims.dec_max_len) + 1, 5);
  CHECK_THROWS_AS(decode_logits(m, Mat(), ids), ArgumentError);
}

TEST_CASE("decode: two-token sequence matches hand-evaluated attention to 1e-12") {
  // d = 2 so the whole forward pass fits in a hand-worked evaluation.
  std::vector<corpus::Conversation> convs;
  corpus::Conversation c;
  c.id = "v";
  corpus::Utterance u;
  u.role = corpus::Role::kSeeker;
  u.tokens = {"a", "b"};
  c.turns.push_back(u);
  convs.push_back(c);
  ModelDims dims;
  dims.d = 2;
  dims.vocab = 7;
  dims.items = 1;
  dims.max_len = 8;
  dims.dec_max_len = 8;
  auto m = make_model(dims, build_vocabulary(convs), {"i0"}, 11);

  const std::vector<int> ids = {5, 6};
  const Mat logits = decode_logits(m, Mat(), ids);

  // Independent evaluation with explicit scalar formulas.
  auto emb = [&](int id, int j) { return m.p.tok_emb(id, j) + 0.0; };
  double x[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) x[i][j] = emb(ids[static_cast<std::size_t>(i)], j) + m.pos(i, j);
  }
  auto matvec = [&](const Mat& w, const double in[2], double out[2]) {
    out[0] = in[0] * w(0, 0) + in[1] * w(1, 0);
    out[1] = in[0] * w(0, 1) + in[1] * w(1, 1);
  };
  double q[2][2], k[2][2], v[2][2];
  for (int i = 0; i < 2; ++i) {
    matvec(m.p.dec_wq, x[i], q[i]);
    matvec(m.p.dec_wk, x[i], k[i]);
    matvec(m.p.dec_wv, x[i], v[i]);
  }
  const double scale = 1.0 / std::sqrt(2.0);
  // Row 0 attends to itself only; row 1 attends to 0 and 1.
  double z[2][2];
  z[0][0] = v[0][0];
  z[0][1] = v[0][1];
  const double s10 = scale * (q[1][0] * k[0][0] + q[1][1] * k[0][1]);
  const double s11 = scale * (q[1][0] * k[1][0] + q[1][1] * k[1][1]);
  const double mx = std::max(s10, s11);
  const double e10 = std::exp(s10 - mx), e11 = std::exp(s11 - mx);
  const double a10 = e10 / (e10 + e11), a11 = e11 / (e10 + e11);
  z[1][0] = a10 * v[0][0] + a11 * v[1][0];
  z[1][1] = a10 * v[0][1] + a11 * v[1][1];
  double out[2][2];
  for (int i = 0; i < 2; ++i) {
    double o[2];
    matvec(m.p.dec_wo, z[i], o);
    out[i][0] = x[i][0] + o[0];
    out[i][1] = x[i][1] + o[1];
  }
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < m.dims.vocab; ++t) {
      const double expect = out[i][0] * m.p.out_head(0, t) + out[i][1] * m.p.out_head(1, t);
      CHECK(logits(i, t) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("positions: sinusoidal table matches the closed form") {
  const Mat pos = sinusoidal_positions(6, 4);
  for (int p = 0; p < 6; ++p) {
    CHECK(pos(p, 0) == doctest::Approx(std::sin(p / 1.0)).epsilon(1e-15));
    CHECK(pos(p, 1) == doctest::Approx(std::cos(p / 1.0)).epsilon(1e-15));
    CHECK(pos(p, 2) == doctest::Approx(std::sin(p / std::pow(10000.0, 0.5))).epsilon(1e-15));
    CHECK(pos(p, 3) == doctest::Approx(std::cos(p / std::pow(10000.0, 0.5))).epsilon(1e-15));
  }
}

TEST_CASE("adam: deterministic update and finite-value guard") {
  auto m1 = small_model();
  auto m2 = small_model();
  auto g = make_grads(m1);
  Rng rng(9);
  for (const auto& f : param_fields()) {
    for (double& v : (g.*(f.member)).a) v = rng.uniform(-1, 1);
  }
  auto a1 = make_adam(m1);
  auto a2 = make_adam(m2);
  AdamConfig cfg;
  adam_step(m1, g, a1, cfg);
  adam_step(m2, g, a2, cfg);
  for (const auto& f : param_fields()) {
    CHECK((m1.p.*(f.member)).a == (m2.p.*(f.member)).a);
  }

  // A NaN gradient must be caught after the update.
  (g.enc_wq).a[0] = std::nan("");
  CHECK_THROWS_AS(adam_step(m1, g, a1, cfg), NumericError);
}

TEST_CASE("checkpoint: round-trip preserves everything bit-for-bit") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "lotcrs_ckpt_test";
  fs::create_directories(dir);
  const auto path = (dir / "m.ckpt").string();

  auto m = small_model();
  CheckpointData ckpt{m, "pretrained", "{\"seed\":42}"};
  save_checkpoint(ckpt, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.stage == "pretrained");
  CHECK(loaded.config_json == "{\"seed\":42}");
  CHECK(loaded.model.vocab.tokens == m.vocab.tokens);
  CHECK(loaded.model.item_ids == m.item_ids);
  for (const auto& f : param_fields()) {
    CHECK((loaded.model.p.*(f.member)).a == (m.p.*(f.member)).a);
  }
  CHECK(params_checksum(loaded.model) == params_checksum(m));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: corrupted file is rejected") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "lotcrs_ckpt_bad";
  fs::create_directories(dir);
  const auto path = (dir / "bad.ckpt").string();
  auto m = small_model();
  save_checkpoint({m, "pretrained", ""}, path);
  // Flip one payload byte.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char b;
    f.seekg(200);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x40);
    f.seekp(200);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  fs::remove_all(dir);
}

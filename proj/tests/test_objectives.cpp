#include <doctest.h>

#include <cmath>
#include <set>

#include "lotcrs/errors.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/objectives.hpp"
#include "lotcrs/rng.hpp"

using namespace lotcrs;
using namespace lotcrs::objectives;

namespace {

neural::Vocabulary tiny_vocab(int n_words) {
  std::vector<corpus::Conversation> convs;
  corpus::Conversation c;
  c.id = "v";
  corpus::Utterance u;
  u.role = corpus::Role::kSeeker;
  for (int i = 0; i < n_words; ++i) u.tokens.push_back("w" + std::to_string(i));
  c.turns.push_back(u);
  convs.push_back(c);
  return neural::build_vocabulary(convs);
}

neural::Model tiny_model(int d = 16, int n_words = 24, int items = 6,
                         std::uint64_t seed = 7) {
  auto vocab = tiny_vocab(n_words);
  neural::ModelDims dims;
  dims.d = d;
  dims.vocab = vocab.size();
  dims.items = items;
  dims.max_len = 32;
  dims.dec_max_len = 64;
  std::vector<std::string> ids;
  for (int i = 0; i < items; ++i) ids.push_back("i" + std::to_string(i));
  return neural::make_model(dims, std::move(vocab), std::move(ids), seed);
}

}  // namespace

TEST_CASE("masking: rate 1.0 masks all eligible positions") {
  Rng rng(1);
  std::vector<int> ids = {0, 5, 6, 7, 1};
  std::vector<int> eligible = {1, 2, 3};
  auto seq = mask_tokens(ids, eligible, 1.0, rng);
  CHECK(seq.masked_positions == eligible);
  for (int p : eligible) CHECK(seq.corrupted_ids[static_cast<std::size_t>(p)] == neural::Vocabulary::kMask);
  CHECK(seq.gold_tokens == std::vector<int>{5, 6, 7});
}

TEST_CASE("masking: seeded determinism and >=1 floor") {
  std::vector<int> ids = {0, 5, 6, 7, 8, 9, 1};
  std::vector<int> eligible = {1, 2, 3, 4, 5};
  Rng a(99), b(99);
  auto s1 = mask_tokens(ids, eligible, 0.2, a);
  auto s2 = mask_tokens(ids, eligible, 0.2, b);
  CHECK(s1.masked_positions == s2.masked_positions);
  CHECK(!s1.masked_positions.empty());

  Rng c(3);
  for (int t = 0; t < 50; ++t) {
    auto s = mask_tokens(ids, eligible, 0.01, c);
    CHECK(s.masked_positions.size() >= 1);
  }
}

TEST_CASE("masking: empty eligible set is an error") {
  Rng rng(1);
  std::vector<int> ids = {0, 5, 1};
  CHECK_THROWS_AS(mask_tokens(ids, {}, 0.5, rng), ArgumentError);
}

TEST_CASE("masking: empirical pre-floor rate over 10k trials") {
  Rng rng(12345);
  std::vector<int> eligible(30);
  for (int i = 0; i < 30; ++i) eligible[static_cast<std::size_t>(i)] = i;
  long masked = 0;
  long total = 0;
  for (int t = 0; t < 10000; ++t) {
    masked += static_cast<long>(bernoulli_positions(eligible, 0.15, rng).size());
    total += 30;
  }
  const double rate = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(rate >= 0.14);
  CHECK(rate <= 0.17);
}

TEST_CASE("dmp: uniform head over V=10 with 2 masks gives 2 ln 10") {
  auto m = tiny_model(8, 5, 2);  // 5 specials + 5 words = 10 tokens
  REQUIRE(m.dims.vocab == 10);
  for (const auto& f : neural::param_fields()) (m.p.*(f.member)).zero();
  MaskedBatch batch;
  MaskedSequence seq;
  seq.corrupted_ids = {0, neural::Vocabulary::kMask, neural::Vocabulary::kMask, 1};
  seq.masked_positions = {1, 2};
  seq.gold_tokens = {5, 6};
  batch.seqs.push_back(seq);
  const double loss = dmp_loss(m, batch, nullptr);
  CHECK(loss == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("dmp: matches brute-force softmax cross-entropy oracle") {
  auto m = tiny_model();
  auto batch = make_gradcheck_batch(LossKind::kDmp, m, 5);
  const double loss = dmp_loss(m, batch.masked, nullptr);

  double expect = 0.0;
  for (const auto& seq : batch.masked.seqs) {
    const auto enc = neural::encode_context(m, seq.corrupted_ids);
    for (std::size_t t = 0; t < seq.masked_positions.size(); ++t) {
      const auto logits =
          neural::project_logits(m, enc.token_states.row(seq.masked_positions[static_cast<std::size_t>(t)]));
      double z = 0.0;
      for (double v : logits) z += std::exp(v);
      expect -= std::log(std::exp(logits[static_cast<std::size_t>(seq.gold_tokens[t])]) / z);
    }
  }
  CHECK(loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("cca: hand-computed two-pair orthogonal case") {
  Mat h1(2, 2), h2(2, 2);
  h1(0, 0) = 1.0;
  h1(1, 1) = 1.0;
  h2(0, 0) = 1.0;
  h2(1, 1) = 1.0;
  const double loss = info_nce(h1, h2, 1.0, true, nullptr, nullptr);
  CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("cca: identical vectors give ln B") {
  const int B = 5;
  Mat h1(B, 3), h2(B, 3);
  for (int b = 0; b < B; ++b) {
    h1(b, 0) = 2.0;
    h2(b, 0) = 2.0;
  }
  const double loss = info_nce(h1, h2, 0.3, true, nullptr, nullptr);
  CHECK(loss == doctest::Approx(std::log(static_cast<double>(B))).epsilon(1e-12));
}

TEST_CASE("cca: invariant to common positive rescaling") {
  Rng rng(11);
  Mat h1(4, 6), h2(4, 6);
  for (double& v : h1.a) v = rng.uniform(-1, 1);
  for (double& v : h2.a) v = rng.uniform(-1, 1);
  const double base = info_nce(h1, h2, 0.2, true, nullptr, nullptr);
  Mat s1 = h1, s2 = h2;
  for (double& v : s1.a) v *= 37.5;
  for (double& v : s2.a) v *= 37.5;
  const double scaled = info_nce(s1, s2, 0.2, true, nullptr, nullptr);
  CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("cca: zero-norm vector is an error") {
  Mat h1(2, 2), h2(2, 2);
  h1(0, 0) = 1.0;
  h2(0, 0) = 1.0;
  h1(1, 0) = 1.0;
  CHECK_THROWS_AS(info_nce(h1, h2, 1.0, true, nullptr, nullptr), NumericError);
}

TEST_CASE("rec ce: hand case Pr=[0.5,0.5], y=[1,0]") {
  Mat probs(1, 2), labels(1, 2);
  probs(0, 0) = 0.5;
  probs(0, 1) = 0.5;
  labels(0, 0) = 1.0;
  CHECK(binary_ce(probs, labels, nullptr) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("rec ce: concentrated distribution is ~0 within clamp epsilon") {
  Mat probs(1, 2), labels(1, 2);
  probs(0, 0) = 1.0;
  probs(0, 1) = 0.0;
  labels(0, 0) = 1.0;
  CHECK(std::abs(binary_ce(probs, labels, nullptr)) < 1e-9);
}

TEST_CASE("rec ce: matches brute-force double sum on random 3x5 batches") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Mat probs(3, 5), labels(3, 5);
    for (int j = 0; j < 3; ++j) {
      double z = 0.0;
      for (int i = 0; i < 5; ++i) {
        probs(j, i) = 0.01 + rng.uniform();
        z += probs(j, i);
      }
      for (int i = 0; i < 5; ++i) probs(j, i) /= z;
      labels(j, static_cast<int>(rng.index(5))) = 1.0;
    }
    double expect = 0.0;
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 5; ++i) {
        expect -= labels(j, i) * std::log(probs(j, i)) +
                  (1.0 - labels(j, i)) * std::log(1.0 - probs(j, i));
      }
    }
    CHECK(binary_ce(probs, labels, nullptr) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("rec ce: probabilities outside [0,1] rejected") {
  Mat probs(1, 2), labels(1, 2);
  probs(0, 0) = 1.2;
  probs(0, 1) = -0.2;
  labels(0, 0) = 1.0;
  CHECK_THROWS_AS(binary_ce(probs, labels, nullptr), ArgumentError);
}

TEST_CASE("soft kl: teacher == student gives 0") {
  Mat soft(2, 3), probs(2, 3);
  for (int j = 0; j < 2; ++j) {
    soft(j, 0) = probs(j, 0) = 0.2;
    soft(j, 1) = probs(j, 1) = 0.3;
    soft(j, 2) = probs(j, 2) = 0.5;
  }
  CHECK(kl_soft_labels(soft, probs, nullptr) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("soft kl: hand case teacher [0.5,0.5] student [0.25,0.75]") {
  Mat soft(1, 2), probs(1, 2);
  soft(0, 0) = 0.5;
  soft(0, 1) = 0.5;
  probs(0, 0) = 0.25;
  probs(0, 1) = 0.75;
  const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(kl_soft_labels(soft, probs, nullptr) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("soft kl: non-negative on 1000 random distribution pairs") {
  Rng rng(123);
  for (int t = 0; t < 1000; ++t) {
    Mat soft(1, 6), probs(1, 6);
    double zs = 0.0, zp = 0.0;
    for (int i = 0; i < 6; ++i) {
      soft(0, i) = 0.001 + rng.uniform();
      probs(0, i) = 0.001 + rng.uniform();
      zs += soft(0, i);
      zp += probs(0, i);
    }
    for (int i = 0; i < 6; ++i) {
      soft(0, i) /= zs;
      probs(0, i) /= zp;
    }
    CHECK(kl_soft_labels(soft, probs, nullptr) >= -1e-12);
  }
}

TEST_CASE("joint loss: weights and reductions") {
  CHECK(joint_rec_loss(1.5, 9.0, 4.0, 0.0, 0.0) == doctest::Approx(1.5));
  CHECK(joint_rec_loss(1.0, 2.0, 3.0, 0.5, 0.1) == doctest::Approx(2.3));
  CHECK_THROWS_AS(joint_rec_loss(1.0, 1.0, 1.0, -0.1, 0.0), ArgumentError);
}

TEST_CASE("gen nll: uniform decoder gives len * ln V") {
  auto m = tiny_model(8, 5, 2);
  for (const auto& f : neural::param_fields()) (m.p.*(f.member)).zero();
  GenBatch batch;
  GenInstance inst;
  inst.ctx_ids = {0, 5, 1};
  inst.resp_ids = {6, 7};
  batch.instances.push_back(inst);
  const double loss = gen_nll_loss(m, batch, nullptr);
  CHECK(loss == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("gen nll: matches per-token CE oracle averaged over n") {
  auto m = tiny_model();
  auto batch = make_gradcheck_batch(LossKind::kGenNll, m, 19);
  for (auto& inst : batch.gen.instances) inst.retrieved = Mat();
  const double loss = gen_nll_loss(m, batch.gen, nullptr);

  double expect = 0.0;
  for (const auto& inst : batch.gen.instances) {
    const auto enc = neural::encode_context(m, inst.ctx_ids);
    std::vector<int> dec_ids = inst.ctx_ids;
    dec_ids.insert(dec_ids.end(), inst.resp_ids.begin(), inst.resp_ids.end());
    const Mat logits = neural::decode_logits(m, enc.token_states, dec_ids);
    for (std::size_t j = 0; j < inst.resp_ids.size(); ++j) {
      const int row = static_cast<int>(inst.ctx_ids.size() + j) - 1;
      std::vector<double> l(logits.row(row).begin(), logits.row(row).end());
      double z = 0.0;
      for (double v : l) z += std::exp(v);
      expect -= std::log(std::exp(l[static_cast<std::size_t>(inst.resp_ids[j])]) / z);
    }
  }
  expect /= static_cast<double>(batch.gen.instances.size());
  CHECK(loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("gen nll: empty response is an error") {
  auto m = tiny_model();
  GenBatch batch;
  GenInstance inst;
  inst.ctx_ids = {0, 5, 1};
  batch.instances.push_back(inst);
  CHECK_THROWS_AS(gen_nll_loss(m, batch, nullptr), ArgumentError);
}

TEST_CASE("pair sampling: exhaustive unique pairs at target_freq 2") {
  std::vector<corpus::Conversation> corpus_convs;
  for (int i = 0; i < 4; ++i) {
    for (int r = 0; r < 2; ++r) {
      corpus::Conversation c;
      c.id = "c" + std::to_string(i) + "-" + std::to_string(r);
      c.target_items = {"i" + std::to_string(i)};
      corpus_convs.push_back(c);
    }
  }
  Rng rng(5);
  auto pairs = sample_contrastive_pairs(corpus_convs, 4, rng);
  REQUIRE(pairs.size() == 4);
  std::set<std::string> targets;
  for (const auto& [a, b] : pairs) {
    CHECK(a != b);
    CHECK(corpus_convs[a].target_items == corpus_convs[b].target_items);
    targets.insert(corpus_convs[a].target_items.front());
  }
  CHECK(targets.size() == 4);
}

TEST_CASE("pair sampling: seeded determinism, distinct targets over 1000 batches") {
  std::vector<corpus::Conversation> corpus_convs;
  for (int i = 0; i < 10; ++i) {
    for (int r = 0; r < 3; ++r) {
      corpus::Conversation c;
      c.id = "c" + std::to_string(i) + "-" + std::to_string(r);
      c.target_items = {"i" + std::to_string(i)};
      corpus_convs.push_back(c);
    }
  }
  Rng a(8), b(8);
  CHECK(sample_contrastive_pairs(corpus_convs, 5, a) ==
        sample_contrastive_pairs(corpus_convs, 5, b));

  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    auto pairs = sample_contrastive_pairs(corpus_convs, 5, rng);
    std::set<std::string> targets;
    for (const auto& [x, y] : pairs) targets.insert(corpus_convs[x].target_items.front());
    CHECK(targets.size() == pairs.size());
  }
}

TEST_CASE("pair sampling: too few eligible items is an error") {
  std::vector<corpus::Conversation> corpus_convs(3);
  corpus_convs[0].target_items = {"a"};
  corpus_convs[1].target_items = {"a"};
  corpus_convs[2].target_items = {"b"};
  Rng rng(1);
  CHECK_THROWS_AS(sample_contrastive_pairs(corpus_convs, 2, rng), ValidationError);
}

TEST_CASE("grad check: quadratic probe is exact to 1e-9") {
  auto m = tiny_model();
  auto batch = make_gradcheck_batch(LossKind::kQuadraticProbe, m, 1);
  CHECK(grad_check(LossKind::kQuadraticProbe, m, batch, 1e-5, 100) < 1e-9);
}

TEST_CASE("grad check: every objective under 1e-4 relative error") {
  auto m = tiny_model();
  for (LossKind kind : {LossKind::kDmp, LossKind::kCca, LossKind::kRecCe, LossKind::kSoftKl,
                        LossKind::kJointRec, LossKind::kGenNll}) {
    auto batch = make_gradcheck_batch(kind, m, 31);
    const double err = grad_check(kind, m, batch, 1e-5, 200);
    INFO(loss_kind_name(kind));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("learning sanity: dmp and gen losses drop after one Adam step") {
  auto m = tiny_model();
  {
    auto batch = make_gradcheck_batch(LossKind::kDmp, m, 55);
    auto grads = neural::make_grads(m);
    const double before = dmp_loss(m, batch.masked, &grads);
    auto adam = neural::make_adam(m);
    neural::AdamConfig cfg;
    cfg.lr = 1e-2;
    neural::adam_step(m, grads, adam, cfg);
    CHECK(dmp_loss(m, batch.masked, nullptr) < before);
  }
  auto m2 = tiny_model(16, 24, 6, 8);
  {
    auto batch = make_gradcheck_batch(LossKind::kGenNll, m2, 56);
    auto grads = neural::make_grads(m2);
    const double before = gen_nll_loss(m2, batch.gen, &grads);
    auto adam = neural::make_adam(m2);
    neural::AdamConfig cfg;
    cfg.lr = 1e-2;
    neural::adam_step(m2, grads, adam, cfg);
    CHECK(gen_nll_loss(m2, batch.gen, nullptr) < before);
  }
}

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lotcrs/corpus.hpp"
#include "lotcrs/mat.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/rng.hpp"

namespace lotcrs::objectives {

// --- masking -----------------------------------------------------------------

struct MaskedSequence {
  std::vector<int> corrupted_ids;   // original ids with [MASK] substitutions
  std::vector<int> masked_positions;
  std::vector<int> gold_tokens;     // original ids at the masked positions
};

struct MaskedBatch {
  std::vector<MaskedSequence> seqs;
};

// Tokens eligible for masked prediction in a conversation: attribute tokens
// and the word tokens of mentioned item names.
std::set<std::string> item_attr_tokens(const corpus::Conversation& conv,
                                       const corpus::ItemCatalog& catalog);

// Positions in `ids` whose token belongs to `eligible_tokens` (specials never).
std::vector<int> eligible_positions(const std::vector<int>& ids,
                                    const neural::Vocabulary& vocab,
                                    const std::set<std::string>& eligible_tokens);

// The independent Bernoulli step of masking, before the >=1 floor.
std::vector<int> bernoulli_positions(const std::vector<int>& eligible, double mask_rate,
                                     Rng& rng);

// Masks each eligible position with probability mask_rate and forces at
// least one mask. Throws on an empty eligible set.
MaskedSequence mask_tokens(const std::vector<int>& ids, const std::vector<int>& eligible,
                           double mask_rate, Rng& rng);

// --- pure losses ---------------------------------------------------------------
// All operate on explicit inputs and also report gradients with respect to
// those inputs, so they can be unit-tested against hand computations.

struct ClampStats {
  long events = 0;
};

// -sum_j sum_i [ y ln p + (1-y) ln(1-p) ], probabilities clamped at 1e-12.
double binary_ce(const Mat& probs, const Mat& labels, Mat* dprobs,
                 ClampStats* clamps = nullptr);

// -sum_j sum_i y ln p (multi-hot softmax cross-entropy).
double softmax_ce(const Mat& probs, const Mat& labels, Mat* dprobs,
                  ClampStats* clamps = nullptr);

// sum_j KL(soft_j || probs_j) with 0 ln 0 = 0 and probs clamped at 1e-12.
double kl_soft_labels(const Mat& soft, const Mat& probs, Mat* dprobs,
                      ClampStats* clamps = nullptr);

// L_CE + lambda1 * L_SOFT + lambda2 * L_CCA. Negative weights are rejected.
double joint_rec_loss(double ce, double soft, double cca, double lambda1, double lambda2);

// InfoNCE over cosine similarities; mean over anchors. The positive pair sits
// in the denominator by default so the loss is non-negative.
double info_nce(const Mat& h1, const Mat& h2, double tau, bool include_positive,
                Mat* dh1, Mat* dh2);

// --- model-path losses ----------------------------------------------------------
// Value plus parameter gradients, composed from the neural-core primitives.

// Sum over masked tokens of -ln p(gold | corrupted sequence).
double dmp_loss(const neural::Model& m, const MaskedBatch& batch, neural::ParamSet* grads);

struct PairBatch {
  // Each entry holds the token ids of two conversations sharing a target item.
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  double tau = 0.1;
  bool include_positive = true;
};

// InfoNCE over the [CLS] representations of the paired conversations.
// Gradients are accumulated scaled by `scale`.
double cca_loss(const neural::Model& m, const PairBatch& batch, neural::ParamSet* grads,
                double scale = 1.0);

// --- recommendation path ---------------------------------------------------------

struct RecInstance {
  std::vector<int> ids;          // context token ids
  Mat retrieved;                 // k x d retrieved user representations (frozen)
  std::vector<int> gold_rows;    // item-embedding rows of the gold items
  std::vector<double> soft;      // teacher distribution over items (may be empty)
};

struct RecBatch {
  std::vector<RecInstance> instances;
  double gamma = 0.5;
  bool binary_ce_mode = true;  // literal Eq-6 style CE vs standard softmax CE
};

struct RecLossParts {
  double ce = 0.0;
  double soft_kl = 0.0;
  Mat probs;  // n x m preference probabilities
};

// ce_weight * CE + kl_weight * KL through encoder, user fusion and item
// embeddings. Instances lacking a soft row contribute no KL.
RecLossParts rec_loss(const neural::Model& m, const RecBatch& batch, double ce_weight,
                      double kl_weight, neural::ParamSet* grads,
                      ClampStats* clamps = nullptr);

// Preference distribution for one encoded-and-fused user representation.
std::vector<double> preference_probs(const neural::Model& m, std::span<const double> fused);

// --- generation path ---------------------------------------------------------------

struct GenInstance {
  std::vector<int> ctx_ids;   // encoder/decoder context tokens
  std::vector<int> resp_ids;  // supervised response tokens ([ITEM] applied)
  Mat retrieved;              // k x d retrieved response representations (frozen)
};

struct GenBatch {
  std::vector<GenInstance> instances;
  bool first_position_only = false;  // literal single-position prompt fusion
};

// -(1/n) sum_i sum_j ln p(w_ij | fused context prompts; w_<j), teacher forced.
double gen_nll_loss(const neural::Model& m, const GenBatch& batch, neural::ParamSet* grads);

// --- contrastive pair sampling -------------------------------------------------------

// B pairs of distinct conversations sharing a target item; the B target
// items are pairwise distinct. Items with fewer than two conversations are
// skipped with a warning; running out of eligible items throws.
std::vector<std::pair<std::size_t, std::size_t>> sample_contrastive_pairs(
    const std::vector<corpus::Conversation>& sim_corpus, std::size_t batch_size, Rng& rng);

// --- gradient checking -----------------------------------------------------------------

enum class LossKind { kQuadraticProbe, kDmp, kCca, kRecCe, kSoftKl, kJointRec, kGenNll };

const char* loss_kind_name(LossKind kind);

struct GradCheckBatch {
  MaskedBatch masked;
  PairBatch pairs;
  RecBatch rec;
  GenBatch gen;
  double lambda1 = 0.5;
  double lambda2 = 0.3;
};

GradCheckBatch make_gradcheck_batch(LossKind kind, const neural::Model& m,
                                    std::uint64_t seed);

// Max relative error between analytic gradients and central finite
// differences on >= n_coords sampled parameter coordinates.
double grad_check(LossKind kind, neural::Model& m, const GradCheckBatch& batch,
                  double epsilon, int n_coords = 200, std::uint64_t coord_seed = 1234);

}  // namespace lotcrs::objectives

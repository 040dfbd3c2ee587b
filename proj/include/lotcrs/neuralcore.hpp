#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lotcrs/corpus.hpp"
#include "lotcrs/mat.hpp"
#include "lotcrs/rng.hpp"

namespace lotcrs::neural {

struct Vocabulary {
  // Specials occupy fixed ids so freshly built vocabularies agree on them.
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kMask = 2;
  static constexpr int kItem = 3;
  static constexpr int kUnk = 4;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& tok) const;  // kUnk when unknown
  const std::string& token_of(int id) const;
};

Vocabulary build_vocabulary(const std::vector<std::span<const corpus::Conversation>>& corpora);
Vocabulary build_vocabulary(const std::vector<corpus::Conversation>& convs);

struct ModelDims {
  int d = 64;
  int vocab = 0;
  int items = 0;
  int max_len = 64;       // encoder input cap
  int dec_max_len = 224;  // prompt rows + token rows cap for the decoder
};

// Every trainable tensor. Doubles as the gradient container.
struct ParamSet {
  Mat tok_emb;                          // V x d, shared by encoder and decoder
  Mat enc_wq, enc_wk, enc_wv, enc_wo;   // d x d
  Mat dec_wq, dec_wk, dec_wv, dec_wo;   // d x d
  Mat out_head;                         // d x V, masked prediction + decoding
  Mat item_emb;                         // m x d
  Mat w1, w2;                           // d x d retrieval fusion
};

struct NamedParam {
  const char* name;
  Mat ParamSet::* member;
};

// Fixed enumeration order; checkpoints, Adam and the FD harness rely on it.
std::span<const NamedParam> param_fields();

struct Model {
  ModelDims dims;
  Vocabulary vocab;
  std::vector<std::string> item_ids;  // row i of item_emb belongs to item_ids[i]
  ParamSet p;
  Mat pos;  // sinusoidal position table, dec_max_len x d, not trained
};

Model make_model(const ModelDims& dims, Vocabulary vocab,
                 std::vector<std::string> item_ids, std::uint64_t init_seed,
                 double init_range = 0.1);

// Gradient container with the same shapes, zeroed.
ParamSet make_grads(const Model& m);
void zero_grads(ParamSet& g);

Mat sinusoidal_positions(int length, int d);

// [CLS] + utterance tokens, each utterance followed by [SEP]; truncated from
// the left (oldest tokens dropped, [CLS] kept) to max_len.
std::vector<int> tokenize(const corpus::Conversation& conv, const Vocabulary& vocab,
                          int max_len);

struct EncodedContext {
  Mat token_states;         // L x d
  std::vector<double> cls;  // copy of row 0
};

struct AttnCache {
  Mat x, q, k, v, attn, z, out;
};

EncodedContext encode_context(const Model& m, const std::vector<int>& ids);

// Forward with the intermediates needed for backprop.
AttnCache encode_forward(const Model& m, const std::vector<int>& ids);
void encode_backward(const Model& m, const std::vector<int>& ids, const AttnCache& c,
                     const Mat& d_out, ParamSet& grads);

struct DecCache {
  int n_prompt = 0;
  AttnCache attn;
};

DecCache decode_forward(const Model& m, const Mat& prompts, const std::vector<int>& ids);
// d_states covers all prompt+token rows. d_prompts may be null when the
// prompt prefix is constant.
void decode_backward(const Model& m, const std::vector<int>& ids, const DecCache& c,
                     const Mat& d_states, ParamSet& grads, Mat* d_prompts);

// Causal logits, one row per entry of `ids`: row j is produced from the
// decoder state at the combined position holding ids[j], so it sees the
// prompts and ids[0..j] only.
Mat decode_logits(const Model& m, const Mat& prompts, const std::vector<int>& ids);

// logits = states_row * out_head for one row.
std::vector<double> project_logits(const Model& m, std::span<const double> state);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamSet m, v;
  long t = 0;
};

AdamState make_adam(const Model& m);
void adam_step(Model& model, const ParamSet& grads, AdamState& st, const AdamConfig& cfg);

std::uint64_t params_checksum(const Model& m);

// --- checkpoint file -------------------------------------------------------
struct CheckpointData {
  Model model;
  std::string stage;        // pretrained | teacher | finetuned_rec | finetuned_gen
  std::string config_json;  // resolved TrainConfig the run used
};

void save_checkpoint(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

// --- finite-difference harness ---------------------------------------------
// Central differences on >= n_coords randomly sampled parameter coordinates;
// returns max |fd - analytic| / max(|fd|, |analytic|, 1e-8). The loss closure
// may evaluate in extended precision so the difference quotient keeps
// digits; the parameters being perturbed stay 64-bit.
double fd_max_rel_error(Model& m, const std::function<long double(const Model&)>& loss,
                        const ParamSet& analytic, double epsilon, int n_coords,
                        Rng& rng);

}  // namespace lotcrs::neural

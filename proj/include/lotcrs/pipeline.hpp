#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotcrs/corpus.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/objectives.hpp"
#include "lotcrs/retrieval.hpp"

namespace lotcrs::pipeline {

struct TrainConfig {
  std::uint64_t seed = 42;

  // architecture
  int d = 64;
  int max_len = 64;
  int dec_max_len = 224;
  double init_range = 0.1;

  // stage schedules
  int epochs_pretrain = 40;
  int epochs_teacher = 40;
  int epochs_rec = 30;
  int epochs_gen = 30;
  int batch_pretrain = 32;
  int batch_rec = 32;
  int batch_gen = 16;
  double lr_pretrain = 5e-5;
  double lr_teacher = 1e-3;
  double lr_rec = 1e-5;
  double lr_gen = 1e-4;

  // objectives
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double gamma = 0.5;
  int retrieval_k = 5;
  double mask_rate = 0.15;
  double tau = 0.1;
  bool cca_include_positive = true;
  bool rec_binary_ce = true;           // literal Eq-6 CE; switchable to softmax CE
  bool prompt_first_position_only = false;

  // data
  int tail_threshold = 4;
  int tfidf_k = 10;
  int target_freq = 4;

  // optimizer
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // inference
  int gen_max_new_tokens = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // rejects unknown keys
  std::uint64_t fingerprint() const;
};

struct MetricRow {
  int epoch;
  std::string name;
  double value;
};

using MetricLog = std::vector<MetricRow>;

// JSON Lines: {"epoch": int, "loss_name": str, "value": float}
void write_metrics(const MetricLog& log, const std::string& path);

struct StageResult {
  neural::CheckpointData ckpt;
  MetricLog metrics;
};

// DMP + CCA pre-training on the balanced simulated corpus. `extra_vocab`
// extends the vocabulary (typically with the real training split) so
// fine-tuning does not map everything to [UNK].
StageResult pretrain(const std::vector<corpus::Conversation>& sim_corpus,
                     const corpus::ItemCatalog& catalog, const TrainConfig& cfg,
                     const std::vector<corpus::Conversation>* extra_vocab = nullptr);

// Fresh model trained with plain softmax cross-entropy recommendation loss
// on the simulated conversations only; supplies the soft labels later.
StageResult train_teacher(const std::vector<corpus::Conversation>& sim_corpus,
                          const corpus::ItemCatalog& catalog, const TrainConfig& cfg);

// Retrieval-augmented recommendation fine-tuning with teacher label
// smoothness and the CCA regularizer (pairs drawn from the simulated data).
StageResult finetune_recommendation(const std::vector<corpus::Conversation>& real_train,
                                    const std::vector<corpus::Conversation>& sim_corpus,
                                    const retrieval::DenseIndex& sim_index,
                                    const neural::Model& teacher,
                                    const neural::CheckpointData& pretrained,
                                    const TrainConfig& cfg);

// Response-generation fine-tuning with retrieval-enhanced soft prompts and
// gold responses preprocessed by [ITEM] substitution.
StageResult finetune_generation(const std::vector<corpus::Conversation>& real_train,
                                const retrieval::DenseIndex& response_index,
                                const neural::CheckpointData& pretrained,
                                const corpus::ItemCatalog& catalog, const TrainConfig& cfg);

// Ranks all items for a fused user representation: preference descending,
// ties by item id. Returns at most k ids.
std::vector<std::string> rank_items(const neural::Model& model,
                                    std::span<const double> fused, int k);

// Top-k recommendation for a conversation context. `sim_index` may be null
// (or gamma zero) for the retrieval-free ranking.
std::vector<std::string> recommend(const corpus::Conversation& context,
                                   const neural::Model& model,
                                   const retrieval::DenseIndex* sim_index, int k_items,
                                   double gamma, int retrieval_k);

// Replaces the i-th [ITEM] occurrence with names[i mod names.size()].
std::string fill_item_slots(const std::string& template_text,
                            const std::vector<std::string>& names);

// Greedy template decoding followed by [ITEM] filling with the ranked
// recommendations. A degenerate empty decode returns "" (logged).
std::string generate_response(const corpus::Conversation& context,
                              const neural::Model& gen_model,
                              const retrieval::DenseIndex* response_index,
                              const std::vector<std::string>& ranked_items,
                              const corpus::ItemCatalog& catalog, const TrainConfig& cfg);

// Tokens of the gold response with item names collapsed to [ITEM].
std::vector<std::string> mask_item_names(const std::vector<std::string>& tokens,
                                         const corpus::ItemCatalog& catalog);

// Teacher preference rows for each instance context, in instance order.
std::vector<std::vector<double>> teacher_soft_labels(
    const neural::Model& teacher, const std::vector<corpus::Conversation>& contexts);

}  // namespace lotcrs::pipeline

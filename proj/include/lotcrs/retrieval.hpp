#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lotcrs/corpus.hpp"
#include "lotcrs/mat.hpp"
#include "lotcrs/neuralcore.hpp"

namespace lotcrs::retrieval {

enum class PayloadKind { kUserRepr, kResponseRepr };

// Immutable store of conversation representations. Keys are the [CLS]
// context representations; response-kind entries additionally carry the
// gold response tokens (item names already replaced by [ITEM]).
class DenseIndex {
public:
  DenseIndex(Mat vectors, std::vector<std::string> ids,
             std::vector<std::vector<int>> payloads, PayloadKind kind,
             std::uint64_t model_checksum);

  int size() const { return vectors_.rows; }
  int dim() const { return vectors_.cols; }
  PayloadKind payload_kind() const { return kind_; }
  std::uint64_t model_checksum() const { return checksum_; }

  std::span<const double> vector(int row) const { return vectors_.row(row); }
  std::span<const double> unit_vector(int row) const { return unit_.row(row); }
  const std::string& id(int row) const { return ids_[static_cast<std::size_t>(row)]; }
  const std::vector<int>& payload(int row) const { return payloads_[static_cast<std::size_t>(row)]; }

private:
  Mat vectors_;   // originals
  Mat unit_;      // row-normalized copies for cosine scans
  std::vector<std::string> ids_;
  std::vector<std::vector<int>> payloads_;
  PayloadKind kind_;
  std::uint64_t checksum_;
};

struct ScoredEntry {
  int row;
  std::string id;
  double score;
};

struct RetrievalResult {
  std::vector<ScoredEntry> entries;  // score descending, ties by row ascending
};

// One vector per conversation: the [CLS] representation of the conversation
// context (everything before the final recommender turn).
DenseIndex build_index(const std::vector<corpus::Conversation>& sim_corpus,
                       const neural::Model& model, PayloadKind kind,
                       const corpus::ItemCatalog& catalog);

// Exact exhaustive cosine scan. k > N returns all N entries.
RetrievalResult topk(const DenseIndex& index, std::span<const double> query, int k);

// Gathers the original vectors of a retrieval result into a k x d matrix.
Mat gather_vectors(const DenseIndex& index, const RetrievalResult& result);

// --- persistence ------------------------------------------------------------
void save_index(const DenseIndex& index, const std::string& path);
// When `expect` is given, refuses an index built from different parameters.
DenseIndex load_index(const std::string& path, const neural::Model* expect = nullptr);

// --- fusion operators --------------------------------------------------------

// fused = u + gamma * sum_j alpha_j u'_j, alpha = softmax_j(u^T W1 u'_j).
struct FuseUserResult {
  std::vector<double> fused;
  std::vector<double> alpha;
};

FuseUserResult fuse_user(std::span<const double> u, const Mat& retrieved, const Mat& w1,
                         double gamma);
// Accumulates into du and dw1. Retrieved vectors are frozen index entries,
// so they receive no gradient.
void fuse_user_backward(std::span<const double> u, const Mat& retrieved, const Mat& w1,
                        double gamma, const FuseUserResult& f,
                        std::span<const double> d_fused, std::span<double> du, Mat& dw1);

// Per token position p: fused_p = h_p + sum_j beta_pj r'_j with
// beta_p = softmax_j(h_p^T W2 r'_j). `first_position_only` restricts the
// fusion to row 0 and passes other rows through unchanged.
struct FusePromptResult {
  Mat fused;
  Mat beta;  // L x k (rows beyond 0 unused in first-position-only mode)
};

FusePromptResult fuse_prompt(const Mat& states, const Mat& retrieved, const Mat& w2,
                             bool first_position_only = false);
void fuse_prompt_backward(const Mat& states, const Mat& retrieved, const Mat& w2,
                          bool first_position_only, const FusePromptResult& f,
                          const Mat& d_fused, Mat& d_states, Mat& dw2);

}  // namespace lotcrs::retrieval

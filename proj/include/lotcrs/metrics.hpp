#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotcrs/corpus.hpp"
#include "lotcrs/pipeline.hpp"
#include "lotcrs/retrieval.hpp"

namespace lotcrs::metrics {

// Fraction of instances whose gold item appears in the top-k list (any gold
// counts as a hit when an instance has several).
double recall_at_k(const std::vector<std::vector<std::string>>& lists,
                   const std::vector<std::vector<std::string>>& golds, int k);

// |union of top-k lists| / n_items.
double coverage_at_k(const std::vector<std::vector<std::string>>& lists,
                     std::size_t n_items, int k);

// |union of tail items in top-k lists| / |tail set|; an empty tail set is an
// error (the denominator vanishes).
double tail_coverage_at_k(const std::vector<std::vector<std::string>>& lists,
                          const corpus::FrequencyTable& freq, int k);

// Distinct n-grams across the whole response corpus divided by the number of
// responses (values above 1 are expected for long diverse responses).
double distinct_n(const std::vector<std::vector<std::string>>& responses, int n);

struct EvalReport {
  std::map<std::string, double> values;
  int tail_threshold = 0;
  int n_instances = 0;

  nlohmann::json to_json() const;
  std::string render_table() const;
};

struct EvalInputs {
  const neural::Model* rec_model = nullptr;
  const retrieval::DenseIndex* user_index = nullptr;    // may be null
  const neural::Model* gen_model = nullptr;             // may be null: Dist-n reported as 0
  const retrieval::DenseIndex* response_index = nullptr;
};

// Runs recommendation at max(ks) on every test conversation, slices the
// lists per k, decodes responses and aggregates the full metric set
// {R@k, C@k, TC@k, Dist-2..4}.
EvalReport evaluate_model(const EvalInputs& inputs,
                          const std::vector<corpus::Conversation>& test_corpus,
                          const corpus::ItemCatalog& catalog,
                          const corpus::FrequencyTable& freq,
                          const std::vector<int>& ks, const pipeline::TrainConfig& cfg);

}  // namespace lotcrs::metrics

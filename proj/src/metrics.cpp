#include "lotcrs/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "lotcrs/errors.hpp"
#include "lotcrs/logging.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::metrics {

using corpus::Conversation;

namespace {

std::size_t cut(const std::vector<std::string>& list, int k) {
  return std::min<std::size_t>(static_cast<std::size_t>(k), list.size());
}

}  // namespace

double recall_at_k(const std::vector<std::vector<std::string>>& lists,
                   const std::vector<std::vector<std::string>>& golds, int k) {
  if (k <= 0) throw ArgumentError("recall_at_k: k must be positive");
  if (lists.empty()) throw ArgumentError("recall_at_k: empty instance set");
  if (lists.size() != golds.size()) throw ArgumentError("recall_at_k: list/gold size mismatch");
  double hits = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& list = lists[i];
    const std::size_t n = cut(list, k);
    bool hit = false;
    for (const auto& gold : golds[i]) {
      if (std::find(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n), gold) !=
          list.begin() + static_cast<std::ptrdiff_t>(n)) {
        hit = true;
        break;
      }
    }
    if (hit) hits += 1.0;
  }
  return hits / static_cast<double>(lists.size());
}

double coverage_at_k(const std::vector<std::vector<std::string>>& lists,
                     std::size_t n_items, int k) {
  if (k <= 0) throw ArgumentError("coverage_at_k: k must be positive");
  if (n_items == 0) throw ArgumentError("coverage_at_k: empty item set");
  std::set<std::string> seen;
  for (const auto& list : lists) {
    const std::size_t n = cut(list, k);
    seen.insert(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return static_cast<double>(seen.size()) / static_cast<double>(n_items);
}

double tail_coverage_at_k(const std::vector<std::vector<std::string>>& lists,
                          const corpus::FrequencyTable& freq, int k) {
  if (k <= 0) throw ArgumentError("tail_coverage_at_k: k must be positive");
  const auto tail = freq.tail_items();
  if (tail.empty()) {
    throw ValidationError("tail_coverage_at_k: empty tail set, metric undefined");
  }
  const std::set<std::string> tail_set(tail.begin(), tail.end());
  std::set<std::string> seen;
  for (const auto& list : lists) {
    const std::size_t n = cut(list, k);
    for (std::size_t i = 0; i < n; ++i) {
      if (tail_set.count(list[i]) > 0) seen.insert(list[i]);
    }
  }
  return static_cast<double>(seen.size()) / static_cast<double>(tail_set.size());
}

double distinct_n(const std::vector<std::vector<std::string>>& responses, int n) {
  if (n <= 0) throw ArgumentError("distinct_n: n must be positive");
  if (responses.empty()) throw ArgumentError("distinct_n: empty response set");
  std::set<std::vector<std::string>> grams;
  for (const auto& resp : responses) {
    if (resp.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= resp.size(); ++i) {
      grams.insert(std::vector<std::string>(
          resp.begin() + static_cast<std::ptrdiff_t>(i),
          resp.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(n))));
    }
  }
  return static_cast<double>(grams.size()) / static_cast<double>(responses.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  for (const auto& [key, value] : values) j[key] = value;
  j["tail_threshold"] = tail_threshold;
  j["n_instances"] = n_instances;
  return j;
}

std::string EvalReport::render_table() const {
  // Fixed presentation order mirroring the usual reporting layout.
  static const char* kOrder[] = {"R@1",   "R@10",  "R@50",  "C@10",   "C@50",
                                 "TC@10", "TC@50", "Dist-2", "Dist-3", "Dist-4"};
  std::ostringstream out;
  out << "Metric      Value\n";
  for (const char* key : kOrder) {
    auto it = values.find(key);
    if (it == values.end()) continue;
    out << key;
    for (std::size_t pad = std::string(key).size(); pad < 12; ++pad) out << ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", it->second);
    out << buf << "\n";
  }
  for (const auto& [key, value] : values) {
    if (std::find(std::begin(kOrder), std::end(kOrder), std::string(key)) != std::end(kOrder)) {
      continue;
    }
    out << key;
    for (std::size_t pad = key.size(); pad < 12; ++pad) out << ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    out << buf << "\n";
  }
  return out.str();
}

EvalReport evaluate_model(const EvalInputs& inputs,
                          const std::vector<Conversation>& test_corpus,
                          const corpus::ItemCatalog& catalog,
                          const corpus::FrequencyTable& freq,
                          const std::vector<int>& ks, const pipeline::TrainConfig& cfg) {
  if (inputs.rec_model == nullptr) throw ArgumentError("evaluate_model: missing recommendation model");
  if (ks.empty()) throw ArgumentError("evaluate_model: no k values");
  int max_k = 0;
  for (int k : ks) {
    if (k <= 0) throw ArgumentError("evaluate_model: k must be positive");
    max_k = std::max(max_k, k);
  }

  std::vector<std::vector<std::string>> lists, golds, responses;
  for (const auto& conv : test_corpus) {
    auto split = corpus::split_context(conv);
    if (!split || conv.target_items.empty()) {
      log::warn("evaluate_model: conversation '" + conv.id + "' has no gold target, skipped");
      continue;
    }
    auto ranked = pipeline::recommend(split->context, *inputs.rec_model, inputs.user_index,
                                      max_k, cfg.gamma, cfg.retrieval_k);
    golds.push_back(conv.target_items);
    if (inputs.gen_model != nullptr) {
      const std::size_t top = std::min<std::size_t>(3, ranked.size());
      const std::vector<std::string> top_items(ranked.begin(),
                                               ranked.begin() + static_cast<std::ptrdiff_t>(top));
      const std::string resp =
          pipeline::generate_response(split->context, *inputs.gen_model,
                                      inputs.response_index, top_items, catalog, cfg);
      responses.push_back(tokenize_text(resp));
    }
    lists.push_back(std::move(ranked));
  }
  if (lists.empty()) throw ArgumentError("evaluate_model: empty instance set");

  EvalReport report;
  report.tail_threshold = static_cast<int>(freq.tail_threshold);
  report.n_instances = static_cast<int>(lists.size());
  for (int k : ks) {
    report.values["R@" + std::to_string(k)] = recall_at_k(lists, golds, k);
    if (k > 1) {
      report.values["C@" + std::to_string(k)] = coverage_at_k(lists, catalog.size(), k);
      report.values["TC@" + std::to_string(k)] = tail_coverage_at_k(lists, freq, k);
    }
  }
  for (int n = 2; n <= 4; ++n) {
    report.values["Dist-" + std::to_string(n)] =
        responses.empty() ? 0.0 : distinct_n(responses, n);
  }
  return report;
}

}  // namespace lotcrs::metrics

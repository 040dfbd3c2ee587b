#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lotcrs/corpus.hpp"

namespace lotcrs::simulator {

// Top-k descriptive tokens for one item, ranked by tf-idf.
struct AttributeSet {
  std::string item_id;
  std::vector<std::pair<std::string, double>> ranked;  // (token, score), score desc

  std::vector<std::string> tokens() const;
  bool has(const std::string& token) const;
};

using AttributeMap = std::map<std::string, AttributeSet>;

// Ordered attribute path ending in a single identifiable target item.
struct ConversationThread {
  std::vector<std::string> attributes;
  std::string target_item;
  std::string target_name;
};

struct TemplateSet {
  std::vector<std::string> seeker_patterns;      // each contains exactly one [X]
  std::vector<std::string> recommender_patterns; // each contains exactly one [Y]
};

// Throws ValidationError unless every pattern has exactly one slot and each
// role has at least 4 patterns.
void validate_templates(const TemplateSet& templates);

TemplateSet default_templates();

// templates.jsonl: {"role": "seeker"|"recommender", "pattern": str}
TemplateSet load_templates(const std::string& path);

// tf-idf attribute extraction over description+reviews text. tf is the raw
// count in the item's own text, idf = ln(N / df) over the catalog. Tokens
// outside `lexicon` (when given) are dropped before ranking; ties broken
// lexicographically. Punctuation-only tokens are never attributes.
AttributeMap extract_attributes(const corpus::ItemCatalog& catalog, int k,
                                const std::optional<std::set<std::string>>& lexicon = std::nullopt);

// Starts from the target's most widely shared attribute, then appends the
// target's remaining attributes in seeded-random order until the accumulated
// set matches exactly one catalog item; falls back to the item name as a
// final pseudo-attribute when attributes alone cannot discriminate.
ConversationThread build_thread(const AttributeMap& attrs,
                                const corpus::ItemCatalog& catalog,
                                const std::string& target,
                                std::uint64_t rng_seed);

// Number of catalog items consistent with the given attribute sequence,
// where the item name counts as an honorary attribute of its own item.
std::size_t count_consistent_items(const AttributeMap& attrs,
                                   const corpus::ItemCatalog& catalog,
                                   const std::vector<std::string>& thread_attrs);

// Renders a thread into an alternating seeker/recommender dialog: one seeker
// turn per thread attribute, each followed by a recommender turn carrying the
// target item, the last of which is the recommendation.
corpus::Conversation render_conversation(const ConversationThread& thread,
                                         const TemplateSet& templates,
                                         std::uint64_t rng_seed);

// Balanced corpus: every item is the target of exactly `target_freq`
// conversations, ordered by item id then replica index.
std::vector<corpus::Conversation> simulate_balanced_corpus(
    const corpus::ItemCatalog& catalog, const AttributeMap& attrs,
    const TemplateSet& templates, int target_freq, std::uint64_t rng_seed);

}  // namespace lotcrs::simulator

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace lotcrs::corpus {

struct Item {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::string> reviews;
  std::vector<std::string> attributes;
};

class ItemCatalog {
public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<Item> items);

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const Item& at(const std::string& id) const;
  const Item& operator[](std::size_t i) const { return items_[i]; }

  // Row index of an id in insertion order; used for item-embedding rows.
  std::size_t row_of(const std::string& id) const;

private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Role { kSeeker, kRecommender };

const char* role_name(Role r);
Role role_from_name(const std::string& name);

struct Utterance {
  Role role = Role::kSeeker;
  std::vector<std::string> tokens;       // word tokens, lowercase
  std::vector<std::string> items;        // item ids mentioned
  std::vector<std::string> attributes;   // attribute tokens mentioned

  std::string text() const;  // tokens joined by spaces
};

enum class Origin { kReal, kSimulated };

struct Conversation {
  std::string id;
  std::vector<Utterance> turns;
  std::vector<std::string> target_items;
  Origin origin = Origin::kReal;
};

struct CorpusStats {
  std::int64_t n_dialogs = 0;
  std::int64_t n_utterances = 0;
  std::int64_t n_items = 0;
};

// Item mention counts over a conversation split, with the tail cutoff.
struct FrequencyTable {
  std::map<std::string, std::int64_t> counts;  // every catalog item present
  std::int64_t tail_threshold = 4;

  bool is_tail(const std::string& id) const;
  std::vector<std::string> tail_items() const;
};

// --- I/O -----------------------------------------------------------------
// Catalog files are JSON Lines:
//   {"id": str, "name": str, "description": str, "reviews": [str], "attributes": [str]?}
ItemCatalog load_catalog(const std::string& path);
void save_catalog(const ItemCatalog& catalog, const std::string& path);

// Conversation files are JSON Lines:
//   {"id": str, "turns": [{"role": "seeker"|"recommender", "text": str,
//    "items": [str], "attributes": [str]}], "target_items": [str],
//    "origin": "real"|"simulated"}
std::vector<Conversation> load_conversations(const std::string& path,
                                             const ItemCatalog& catalog);
void save_conversations(const std::vector<Conversation>& convs,
                        const std::string& path);

// Validation shared by the loader and by the simulator round-trip tests.
void validate_conversation(const Conversation& conv, const ItemCatalog& catalog);

CorpusStats compute_stats(const std::vector<Conversation>& convs,
                          const ItemCatalog& catalog);

// counts[i] = occurrences of item i across all utterances' item mentions
// in `convs` (the final recommendation turn lists its items, so
// recommendations are counted too). Items never mentioned get 0.
FrequencyTable frequency_table(const std::vector<Conversation>& convs,
                               const ItemCatalog& catalog,
                               std::int64_t tail_threshold);

// A training/evaluation instance: the context before the last recommender
// turn, and that turn as the gold response.
struct ContextSplit {
  Conversation context;  // same id/origin, turns before the gold response
  Utterance response;    // the last recommender turn
};

// nullopt when the conversation has no recommender turn.
std::optional<ContextSplit> split_context(const Conversation& conv);

}  // namespace lotcrs::corpus

#include "lotcrs/corpus.hpp"

#include <fstream>

#include <json.hpp>

#include "lotcrs/errors.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::corpus {

using nlohmann::json;

ItemCatalog::ItemCatalog(std::vector<Item> items) : items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    if (it.id.empty()) throw ValidationError("catalog item with empty id");
    if (it.name.empty()) throw ValidationError("catalog item '" + it.id + "' has empty name");
    if (!index_.emplace(it.id, i).second) {
      throw ValidationError("duplicate item id '" + it.id + "' in catalog");
    }
  }
}

const Item& ItemCatalog::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown item id '" + id + "'");
  return items_[it->second];
}

std::size_t ItemCatalog::row_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown item id '" + id + "'");
  return it->second;
}

const char* role_name(Role r) {
  return r == Role::kSeeker ? "seeker" : "recommender";
}

Role role_from_name(const std::string& name) {
  if (name == "seeker") return Role::kSeeker;
  if (name == "recommender") return Role::kRecommender;
  throw ParseError("unknown role '" + name + "'");
}

std::string Utterance::text() const { return join_tokens(tokens); }

bool FrequencyTable::is_tail(const std::string& id) const {
  auto it = counts.find(id);
  if (it == counts.end()) throw ValidationError("frequency table has no entry for '" + id + "'");
  return it->second < tail_threshold;
}

std::vector<std::string> FrequencyTable::tail_items() const {
  std::vector<std::string> out;
  for (const auto& [id, c] : counts) {
    if (c < tail_threshold) out.push_back(id);
  }
  return out;
}

namespace {

json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError(path + ":" + std::to_string(lineno) + ": malformed record");
  }
  return j;
}

std::vector<std::string> string_array(const json& j, const char* key,
                                      const std::string& where) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ParseError(where + ": field '" + std::string(key) + "' must be an array");
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError(where + ": field '" + std::string(key) + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

ItemCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog file '" + path + "'");
  std::vector<Item> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j = parse_line(line, path, lineno);
    if (!j.contains("id") || !j.at("id").is_string() || !j.contains("name") ||
        !j.at("name").is_string()) {
      throw ParseError(where + ": record must carry string 'id' and 'name'");
    }
    Item it;
    it.id = j.at("id").get<std::string>();
    it.name = j.at("name").get<std::string>();
    if (j.contains("description")) {
      if (!j.at("description").is_string()) throw ParseError(where + ": 'description' must be a string");
      it.description = j.at("description").get<std::string>();
    }
    it.reviews = string_array(j, "reviews", where);
    it.attributes = string_array(j, "attributes", where);
    items.push_back(std::move(it));
  }
  return ItemCatalog(std::move(items));
}

void save_catalog(const ItemCatalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write catalog file '" + path + "'");
  for (const auto& it : catalog.items()) {
    json j;
    j["id"] = it.id;
    j["name"] = it.name;
    j["description"] = it.description;
    j["reviews"] = it.reviews;
    j["attributes"] = it.attributes;
    out << j.dump() << "\n";
  }
}

void validate_conversation(const Conversation& conv, const ItemCatalog& catalog) {
  const std::string where = "conversation '" + conv.id + "'";
  Role expected = Role::kSeeker;
  for (std::size_t t = 0; t < conv.turns.size(); ++t) {
    const auto& u = conv.turns[t];
    if (u.role != expected) {
      throw ValidationError(where + ": turn " + std::to_string(t) +
                            " breaks seeker/recommender alternation");
    }
    expected = (expected == Role::kSeeker) ? Role::kRecommender : Role::kSeeker;
    if (u.tokens.empty()) {
      throw ValidationError(where + ": turn " + std::to_string(t) + " has empty text");
    }
    for (const auto& id : u.items) {
      if (!catalog.contains(id)) {
        throw ValidationError(where + ": unknown item '" + id + "' mentioned at turn " +
                              std::to_string(t));
      }
    }
  }
  for (const auto& id : conv.target_items) {
    if (!catalog.contains(id)) {
      throw ValidationError(where + ": unknown target item '" + id + "'");
    }
  }
}

std::vector<Conversation> load_conversations(const std::string& path,
                                             const ItemCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open conversations file '" + path + "'");
  std::vector<Conversation> convs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j = parse_line(line, path, lineno);
    Conversation conv;
    if (!j.contains("id") || !j.at("id").is_string()) {
      throw ParseError(where + ": record must carry string 'id'");
    }
    conv.id = j.at("id").get<std::string>();
    const std::string origin = j.value("origin", std::string("real"));
    if (origin == "real") {
      conv.origin = Origin::kReal;
    } else if (origin == "simulated") {
      conv.origin = Origin::kSimulated;
    } else {
      throw ParseError(where + ": origin must be 'real' or 'simulated'");
    }
    conv.target_items = string_array(j, "target_items", where);
    if (!j.contains("turns") || !j.at("turns").is_array()) {
      throw ParseError(where + ": record must carry 'turns' array");
    }
    for (const auto& tj : j.at("turns")) {
      if (!tj.is_object() || !tj.contains("role") || !tj.contains("text")) {
        throw ParseError(where + ": each turn needs 'role' and 'text'");
      }
      Utterance u;
      u.role = role_from_name(tj.at("role").get<std::string>());
      u.tokens = tokenize_text(tj.at("text").get<std::string>());
      u.items = string_array(tj, "items", where);
      u.attributes = string_array(tj, "attributes", where);
      conv.turns.push_back(std::move(u));
    }
    validate_conversation(conv, catalog);
    convs.push_back(std::move(conv));
  }
  return convs;
}

void save_conversations(const std::vector<Conversation>& convs,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write conversations file '" + path + "'");
  for (const auto& conv : convs) {
    json turns = json::array();
    for (const auto& u : conv.turns) {
      json t;
      t["role"] = role_name(u.role);
      t["text"] = u.text();
      t["items"] = u.items;
      t["attributes"] = u.attributes;
      turns.push_back(std::move(t));
    }
    json j;
    j["id"] = conv.id;
    j["turns"] = std::move(turns);
    j["target_items"] = conv.target_items;
    j["origin"] = conv.origin == Origin::kReal ? "real" : "simulated";
    out << j.dump() << "\n";
  }
}

CorpusStats compute_stats(const std::vector<Conversation>& convs,
                          const ItemCatalog& catalog) {
  CorpusStats s;
  s.n_dialogs = static_cast<std::int64_t>(convs.size());
  for (const auto& c : convs) s.n_utterances += static_cast<std::int64_t>(c.turns.size());
  s.n_items = static_cast<std::int64_t>(catalog.size());
  return s;
}

std::optional<ContextSplit> split_context(const Conversation& conv) {
  for (std::size_t t = conv.turns.size(); t > 0; --t) {
    if (conv.turns[t - 1].role == Role::kRecommender) {
      ContextSplit split;
      split.context.id = conv.id;
      split.context.origin = conv.origin;
      split.context.target_items = conv.target_items;
      split.context.turns.assign(conv.turns.begin(),
                                 conv.turns.begin() + static_cast<std::ptrdiff_t>(t - 1));
      split.response = conv.turns[t - 1];
      return split;
    }
  }
  return std::nullopt;
}

FrequencyTable frequency_table(const std::vector<Conversation>& convs,
                               const ItemCatalog& catalog,
                               std::int64_t tail_threshold) {
  if (tail_threshold <= 0) throw ArgumentError("tail_threshold must be positive");
  FrequencyTable table;
  table.tail_threshold = tail_threshold;
  for (const auto& it : catalog.items()) table.counts[it.id] = 0;
  for (const auto& conv : convs) {
    for (const auto& u : conv.turns) {
      for (const auto& id : u.items) {
        auto at = table.counts.find(id);
        if (at == table.counts.end()) {
          throw ValidationError("conversation '" + conv.id + "' mentions item '" + id +
                                "' not in catalog");
        }
        ++at->second;
      }
    }
  }
  return table;
}

}  // namespace lotcrs::corpus

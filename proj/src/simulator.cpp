#include "lotcrs/simulator.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "lotcrs/errors.hpp"
#include "lotcrs/logging.hpp"
#include "lotcrs/rng.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::simulator {

using corpus::Conversation;
using corpus::ItemCatalog;
using corpus::Origin;
using corpus::Role;
using corpus::Utterance;

std::vector<std::string> AttributeSet::tokens() const {
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& [t, s] : ranked) out.push_back(t);
  return out;
}

bool AttributeSet::has(const std::string& token) const {
  for (const auto& [t, s] : ranked) {
    if (t == token) return true;
  }
  return false;
}

void validate_templates(const TemplateSet& templates) {
  auto check = [](const std::vector<std::string>& patterns, const std::string& slot,
                  const char* role) {
    if (patterns.size() < 4) {
      throw ValidationError(std::string("template set needs at least 4 ") + role +
                            " patterns, got " + std::to_string(patterns.size()));
    }
    for (const auto& p : patterns) {
      std::size_t first = p.find(slot);
      if (first == std::string::npos || p.find(slot, first + 1) != std::string::npos) {
        throw ValidationError(std::string(role) + " pattern '" + p +
                              "' must contain exactly one " + slot + " slot");
      }
    }
  };
  check(templates.seeker_patterns, "[X]", "seeker");
  check(templates.recommender_patterns, "[Y]", "recommender");
}

TemplateSet default_templates() {
  TemplateSet t;
  t.seeker_patterns = {
      "Can you recommend me a movie about [X]?",
      "I am looking for a movie about [X].",
      "Do you know any film about [X]?",
      "I would like to watch something about [X].",
      "Any suggestions for a movie about [X]?",
  };
  t.recommender_patterns = {
      "I recommend the movie [Y].",
      "You should watch [Y].",
      "How about [Y]?",
      "I think you would enjoy [Y].",
      "Maybe [Y] fits your taste.",
  };
  return t;
}

TemplateSet load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open templates file '" + path + "'");
  TemplateSet t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("role") || !j.contains("pattern")) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": template record needs 'role' and 'pattern'");
    }
    const std::string role = j.at("role").get<std::string>();
    const std::string pattern = j.at("pattern").get<std::string>();
    if (role == "seeker") {
      t.seeker_patterns.push_back(pattern);
    } else if (role == "recommender") {
      t.recommender_patterns.push_back(pattern);
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown role '" + role + "'");
    }
  }
  validate_templates(t);
  return t;
}

namespace {

bool is_word_token(const std::string& tok) {
  if (is_special_token(tok)) return false;
  for (unsigned char c : tok) {
    if (std::isalnum(c)) return true;
  }
  return false;
}

std::string item_text(const corpus::Item& item) {
  std::string text = item.description;
  for (const auto& r : item.reviews) {
    text += " ";
    text += r;
  }
  return text;
}

}  // namespace

AttributeMap extract_attributes(const ItemCatalog& catalog, int k,
                                const std::optional<std::set<std::string>>& lexicon) {
  if (k <= 0) throw ArgumentError("extract_attributes: k must be positive");
  const std::size_t n = catalog.size();

  // Per-item term frequencies and catalog-wide document frequencies.
  std::vector<std::map<std::string, int>> tf(n);
  std::map<std::string, int> df;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = catalog[i];
    const auto toks = tokenize_text(item_text(item));
    bool any = false;
    for (const auto& t : toks) {
      if (!is_word_token(t)) continue;
      if (lexicon && lexicon->count(t) == 0) continue;
      any = true;
      ++tf[i][t];
    }
    if (!any) {
      throw ValidationError("item '" + item.id + "' has no usable attribute text");
    }
    for (const auto& [t, c] : tf[i]) ++df[t];
  }

  AttributeMap out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = catalog[i];
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(tf[i].size());
    for (const auto& [t, c] : tf[i]) {
      const double idf = std::log(static_cast<double>(n) / static_cast<double>(df[t]));
      scored.emplace_back(t, static_cast<double>(c) * idf);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    out.emplace(item.id, AttributeSet{item.id, std::move(scored)});
  }
  return out;
}

namespace {

bool consistent_with(const AttributeSet& attrs, const std::string& name,
                     const std::vector<std::string>& thread_attrs) {
  for (const auto& a : thread_attrs) {
    if (!attrs.has(a) && a != name) return false;
  }
  return true;
}

}  // namespace

std::size_t count_consistent_items(const AttributeMap& attrs, const ItemCatalog& catalog,
                                   const std::vector<std::string>& thread_attrs) {
  std::size_t n = 0;
  for (const auto& item : catalog.items()) {
    auto it = attrs.find(item.id);
    if (it == attrs.end()) continue;
    if (consistent_with(it->second, item.name, thread_attrs)) ++n;
  }
  return n;
}

ConversationThread build_thread(const AttributeMap& attrs, const ItemCatalog& catalog,
                                const std::string& target, std::uint64_t rng_seed) {
  auto it = attrs.find(target);
  if (it == attrs.end()) {
    throw ValidationError("build_thread: no attribute set for item '" + target + "'");
  }
  const AttributeSet& target_attrs = it->second;
  if (target_attrs.ranked.empty()) {
    throw ValidationError("build_thread: item '" + target + "' has no attributes");
  }
  const std::string& target_name = catalog.at(target).name;

  // Document frequency of each attribute token over the attribute map.
  auto attr_df = [&](const std::string& token) {
    std::size_t c = 0;
    for (const auto& [id, as] : attrs) {
      if (as.has(token)) ++c;
    }
    return c;
  };

  // Common starting attribute: highest df, ties lexicographically smallest.
  std::string start;
  std::size_t best_df = 0;
  for (const auto& tok : target_attrs.tokens()) {
    const std::size_t d = attr_df(tok);
    if (d > best_df || (d == best_df && (start.empty() || tok < start))) {
      best_df = d;
      start = tok;
    }
  }

  ConversationThread thread;
  thread.target_item = target;
  thread.target_name = target_name;
  thread.attributes.push_back(start);

  std::vector<std::string> remaining;
  for (const auto& tok : target_attrs.tokens()) {
    if (tok != start) remaining.push_back(tok);
  }
  Rng rng(rng_seed);
  rng.shuffle(remaining);

  std::size_t i = 0;
  while (count_consistent_items(attrs, catalog, thread.attributes) > 1) {
    if (i < remaining.size()) {
      thread.attributes.push_back(remaining[i++]);
    } else {
      // Attributes exhausted; the name must discriminate.
      thread.attributes.push_back(target_name);
      if (count_consistent_items(attrs, catalog, thread.attributes) != 1) {
        throw ValidationError("build_thread: items with identical attributes and name '" +
                              target_name + "' cannot be told apart");
      }
      break;
    }
  }
  return thread;
}

namespace {

std::string fill_slot(const std::string& pattern, const std::string& slot,
                      const std::string& value) {
  std::string out = pattern;
  const std::size_t pos = out.find(slot);
  out.replace(pos, slot.size(), value);
  return out;
}

}  // namespace

Conversation render_conversation(const ConversationThread& thread,
                                 const TemplateSet& templates, std::uint64_t rng_seed) {
  validate_templates(templates);
  if (thread.attributes.empty() || thread.target_item.empty()) {
    throw ValidationError("render_conversation: empty thread");
  }
  Rng rng(rng_seed);
  Conversation conv;
  conv.id = "sim-" + thread.target_item;
  conv.origin = Origin::kSimulated;
  conv.target_items = {thread.target_item};

  for (std::size_t t = 0; t < thread.attributes.size(); ++t) {
    const std::string& attr = thread.attributes[t];

    Utterance seeker;
    seeker.role = Role::kSeeker;
    const auto& sp = templates.seeker_patterns[rng.index(templates.seeker_patterns.size())];
    seeker.tokens = tokenize_text(fill_slot(sp, "[X]", attr));
    seeker.attributes = {attr};
    conv.turns.push_back(std::move(seeker));

    Utterance rec;
    rec.role = Role::kRecommender;
    const auto& rp =
        templates.recommender_patterns[rng.index(templates.recommender_patterns.size())];
    rec.tokens = tokenize_text(fill_slot(rp, "[Y]", thread.target_name));
    rec.items = {thread.target_item};
    conv.turns.push_back(std::move(rec));
  }
  return conv;
}

std::vector<Conversation> simulate_balanced_corpus(const ItemCatalog& catalog,
                                                   const AttributeMap& attrs,
                                                   const TemplateSet& templates,
                                                   int target_freq, std::uint64_t rng_seed) {
  if (target_freq <= 0) throw ArgumentError("simulate_balanced_corpus: target_freq must be positive");
  validate_templates(templates);

  std::vector<std::string> ids;
  ids.reserve(catalog.size());
  for (const auto& item : catalog.items()) {
    if (attrs.find(item.id) == attrs.end()) {
      throw ValidationError("simulate_balanced_corpus: no attribute set for item '" +
                            item.id + "'");
    }
    ids.push_back(item.id);
  }
  std::sort(ids.begin(), ids.end());

  std::vector<Conversation> out;
  out.reserve(ids.size() * static_cast<std::size_t>(target_freq));
  for (const auto& id : ids) {
    for (int replica = 0; replica < target_freq; ++replica) {
      const std::uint64_t key =
          fnv1a64(id, fnv1a64(&replica, sizeof(replica)));
      auto thread = build_thread(attrs, catalog, id, derive_seed(rng_seed, "sim.thread", key));
      auto conv = render_conversation(thread, templates, derive_seed(rng_seed, "sim.render", key));
      conv.id = "sim-" + id + "-" + std::to_string(replica);
      out.push_back(std::move(conv));
    }
  }
  return out;
}

}  // namespace lotcrs::simulator

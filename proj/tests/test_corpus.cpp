#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "lotcrs/corpus.hpp"
#include "lotcrs/errors.hpp"
#include "lotcrs/text.hpp"

using namespace lotcrs;
using namespace lotcrs::corpus;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path dir;
  TempDir() {
    dir = fs::temp_directory_path() / ("lotcrs_corpus_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string file(const std::string& name) const { return (dir / name).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

}  // namespace

TEST_CASE("tokenizer: lowercase, punctuation splits, specials atomic") {
  CHECK(tokenize_text("I recommend Pretty Woman (1990).") ==
        std::vector<std::string>{"i", "recommend", "pretty", "woman", "(", "1990", ")", "."});
  CHECK(tokenize_text("about [ITEM], right?") ==
        std::vector<std::string>{"about", "[ITEM]", ",", "right", "?"});
  CHECK(tokenize_text("[item] [Mask] [CLS]") ==
        std::vector<std::string>{"[ITEM]", "[MASK]", "[CLS]"});
  CHECK(tokenize_text("  ") == std::vector<std::string>{});
  CHECK(join_tokens({"a", "b", "."}) == "a b .");
}

TEST_CASE("tokenizer: span replacement prefers the longest name") {
  const std::vector<std::string> tokens = {"i", "like", "pretty", "woman", "(", "1990", ")"};
  const std::vector<std::vector<std::string>> needles = {
      {"pretty", "woman"}, {"pretty", "woman", "(", "1990", ")"}};
  CHECK(replace_token_spans(tokens, needles, "[ITEM]") ==
        std::vector<std::string>{"i", "like", "[ITEM]"});
}

TEST_CASE("load_catalog: two well-formed records") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"),
             R"({"id":"m1","name":"Alpha","description":"a film","reviews":["fun"]})"
             "\n"
             R"({"id":"m2","name":"Beta","description":"b film","reviews":[],"attributes":["space"]})"
             "\n");
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  CHECK(catalog.size() == 2);
  CHECK(catalog.at("m2").attributes == std::vector<std::string>{"space"});
}

TEST_CASE("load_catalog: duplicate id is a validation error") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"),
             R"({"id":"m1","name":"Alpha"})" "\n" R"({"id":"m1","name":"Beta"})" "\n");
  CHECK_THROWS_WITH_AS(load_catalog(tmp.file("cat.jsonl")),
                       doctest::Contains("duplicate item id 'm1'"), ValidationError);
}

TEST_CASE("load_catalog: malformed record names the line") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"), R"({"id":"m1","name":"Alpha"})" "\n" "{not json\n");
  CHECK_THROWS_WITH_AS(load_catalog(tmp.file("cat.jsonl")), doctest::Contains(":2:"),
                       ParseError);
}

TEST_CASE("load_catalog: 1783-item file reports n_items 1783") {
  TempDir tmp;
  std::string body;
  for (int i = 0; i < 1783; ++i) {
    body += R"({"id":"m)" + std::to_string(i) + R"(","name":"Movie )" + std::to_string(i) +
            R"("})" "\n";
  }
  write_file(tmp.file("cat.jsonl"), body);
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  const auto stats = compute_stats({}, catalog);
  CHECK(stats.n_items == 1783);
}

TEST_CASE("load_conversations: two-turn dialog") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"), R"({"id":"m1","name":"Alpha"})" "\n");
  write_file(tmp.file("conv.jsonl"),
             R"({"id":"c1","turns":[{"role":"seeker","text":"hi there","items":[],"attributes":[]},)"
             R"({"role":"recommender","text":"watch Alpha","items":["m1"],"attributes":[]}],)"
             R"("target_items":["m1"],"origin":"real"})" "\n");
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  const auto convs = load_conversations(tmp.file("conv.jsonl"), catalog);
  REQUIRE(convs.size() == 1);
  CHECK(convs[0].turns.size() == 2);
  CHECK(convs[0].turns[0].role == Role::kSeeker);
  CHECK(convs[0].target_items == std::vector<std::string>{"m1"});
}

TEST_CASE("load_conversations: unknown item id is named in the error") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"), R"({"id":"m1","name":"Alpha"})" "\n");
  write_file(tmp.file("conv.jsonl"),
             R"({"id":"c1","turns":[{"role":"seeker","text":"hi","items":["mX"],"attributes":[]}],)"
             R"("target_items":[],"origin":"real"})" "\n");
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  CHECK_THROWS_WITH_AS(load_conversations(tmp.file("conv.jsonl"), catalog),
                       doctest::Contains("'mX'"), ValidationError);
}

TEST_CASE("load_conversations: non-alternating roles rejected") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"), R"({"id":"m1","name":"Alpha"})" "\n");
  write_file(tmp.file("conv.jsonl"),
             R"({"id":"c1","turns":[{"role":"seeker","text":"a","items":[],"attributes":[]},)"
             R"({"role":"seeker","text":"b","items":[],"attributes":[]}],)"
             R"("target_items":[],"origin":"real"})" "\n");
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  CHECK_THROWS_WITH_AS(load_conversations(tmp.file("conv.jsonl"), catalog),
                       doctest::Contains("alternation"), ValidationError);
}

TEST_CASE("load_conversations: ReDial-scale export yields the expected stats") {
  TempDir tmp;
  // 51,699 items; 10,006 dialogs; 182,150 utterances (2,042 dialogs of 19
  // turns, 7,964 of 18).
  {
    std::ofstream out(tmp.file("cat.jsonl"), std::ios::binary);
    for (int i = 0; i < 51699; ++i) {
      out << R"({"id":"m)" << i << R"(","name":"M)" << i << R"("})" << "\n";
    }
  }
  {
    std::ofstream out(tmp.file("conv.jsonl"), std::ios::binary);
    for (int c = 0; c < 10006; ++c) {
      const int turns = c < 2042 ? 19 : 18;
      out << R"({"id":"c)" << c << R"(","turns":[)";
      for (int t = 0; t < turns; ++t) {
        if (t > 0) out << ",";
        out << R"({"role":")" << (t % 2 == 0 ? "seeker" : "recommender")
            << R"(","text":"a","items":[],"attributes":[]})";
      }
      out << R"(],"target_items":["m)" << (c % 51699) << R"("],"origin":"real"})" << "\n";
    }
  }
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));
  const auto convs = load_conversations(tmp.file("conv.jsonl"), catalog);
  const auto stats = compute_stats(convs, catalog);
  CHECK(stats.n_dialogs == 10006);
  CHECK(stats.n_utterances == 182150);
  CHECK(stats.n_items == 51699);
}

TEST_CASE("round-trip: write then load is structurally equal") {
  TempDir tmp;
  write_file(tmp.file("cat.jsonl"),
             R"({"id":"m1","name":"Alpha Beta"})" "\n" R"({"id":"m2","name":"Gamma"})" "\n");
  const auto catalog = load_catalog(tmp.file("cat.jsonl"));

  Conversation conv;
  conv.id = "c1";
  conv.origin = Origin::kSimulated;
  conv.target_items = {"m1"};
  Utterance s;
  s.role = Role::kSeeker;
  s.tokens = tokenize_text("Do you like fun, spacey movies?");
  s.attributes = {"fun"};
  Utterance r;
  r.role = Role::kRecommender;
  r.tokens = tokenize_text("I recommend Alpha Beta.");
  r.items = {"m1"};
  conv.turns = {s, r};

  save_conversations({conv}, tmp.file("out.jsonl"));
  const auto loaded = load_conversations(tmp.file("out.jsonl"), catalog);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].id == conv.id);
  CHECK(loaded[0].origin == Origin::kSimulated);
  CHECK(loaded[0].target_items == conv.target_items);
  REQUIRE(loaded[0].turns.size() == 2);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(loaded[0].turns[t].role == conv.turns[t].role);
    CHECK(loaded[0].turns[t].tokens == conv.turns[t].tokens);
    CHECK(loaded[0].turns[t].items == conv.turns[t].items);
    CHECK(loaded[0].turns[t].attributes == conv.turns[t].attributes);
  }
}

namespace {

Conversation conv_with_items(const std::string& id, const std::vector<std::string>& items) {
  Conversation c;
  c.id = id;
  Utterance s;
  s.role = Role::kSeeker;
  s.tokens = {"hi"};
  Utterance r;
  r.role = Role::kRecommender;
  r.tokens = {"ok"};
  r.items = items;
  c.turns = {s, r};
  c.target_items = items;
  return c;
}

ItemCatalog abc_catalog() {
  std::vector<Item> items;
  for (const char* id : {"a", "b", "c"}) items.push_back({id, std::string("N") + id, "", {}, {}});
  return ItemCatalog(std::move(items));
}

}  // namespace

TEST_CASE("frequency_table: hand-counted tail set") {
  const auto catalog = abc_catalog();
  std::vector<Conversation> convs;
  convs.push_back(conv_with_items("c1", {"a", "a"}));
  for (int i = 0; i < 5; ++i) convs.push_back(conv_with_items("b" + std::to_string(i), {"b"}));
  const auto table = frequency_table(convs, catalog, 4);
  CHECK(table.counts.at("a") == 2);
  CHECK(table.counts.at("b") == 5);
  CHECK(table.counts.at("c") == 0);
  CHECK(table.tail_items() == std::vector<std::string>{"a", "c"});
}

TEST_CASE("frequency_table: empty conversation set leaves everything tail") {
  const auto catalog = abc_catalog();
  const auto table = frequency_table({}, catalog, 4);
  for (const auto& [id, n] : table.counts) CHECK(n == 0);
  CHECK(table.tail_items().size() == 3);
}

TEST_CASE("frequency_table: threshold 1 tails exactly the zero-count items") {
  const auto catalog = abc_catalog();
  const auto table = frequency_table({conv_with_items("c1", {"a"})}, catalog, 1);
  CHECK(table.tail_items() == std::vector<std::string>{"b", "c"});
}

TEST_CASE("frequency_table: counts sum to total mentions; tail monotone in threshold") {
  const auto catalog = abc_catalog();
  std::vector<Conversation> convs;
  convs.push_back(conv_with_items("c1", {"a", "b", "b"}));
  convs.push_back(conv_with_items("c2", {"c", "b"}));
  long total_mentions = 0;
  for (const auto& c : convs) {
    for (const auto& u : c.turns) total_mentions += static_cast<long>(u.items.size());
  }
  std::size_t prev_tail = 0;
  for (int threshold = 1; threshold <= 6; ++threshold) {
    const auto table = frequency_table(convs, catalog, threshold);
    long sum = 0;
    for (const auto& [id, n] : table.counts) sum += n;
    CHECK(sum == total_mentions);
    CHECK(table.tail_items().size() >= prev_tail);
    prev_tail = table.tail_items().size();
  }
}

TEST_CASE("frequency_table: non-positive threshold rejected") {
  CHECK_THROWS_AS(frequency_table({}, abc_catalog(), 0), ArgumentError);
}

TEST_CASE("split_context: strips the final recommender turn") {
  auto conv = conv_with_items("c1", {"a"});
  const auto split = split_context(conv);
  REQUIRE(split.has_value());
  CHECK(split->context.turns.size() == 1);
  CHECK(split->response.items == std::vector<std::string>{"a"});

  Conversation seeker_only;
  seeker_only.id = "s";
  Utterance u;
  u.role = Role::kSeeker;
  u.tokens = {"hi"};
  seeker_only.turns = {u};
  CHECK(!split_context(seeker_only).has_value());
}

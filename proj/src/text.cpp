#include "lotcrs/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace lotcrs {

namespace {

constexpr std::array<const char*, 5> kSpecials = {
    kClsToken, kSepToken, kMaskToken, kItemToken, kUnkToken};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

// If text[i] starts a bracketed special (case-insensitive), returns its
// canonical form and advances `i` past it.
bool match_special(const std::string& text, std::size_t& i, std::string& out) {
  if (text[i] != '[') return false;
  const std::size_t close = text.find(']', i);
  if (close == std::string::npos) return false;
  std::string inner = text.substr(i + 1, close - i - 1);
  std::transform(inner.begin(), inner.end(), inner.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  const std::string candidate = "[" + inner + "]";
  for (const char* sp : kSpecials) {
    if (candidate == sp) {
      out = sp;
      i = close + 1;
      return true;
    }
  }
  return false;
}

}  // namespace

bool is_special_token(const std::string& tok) {
  return std::find(kSpecials.begin(), kSpecials.end(), tok) != kSpecials.end();
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::string special;
    if (c == '[' && match_special(text, i, special)) {
      tokens.push_back(special);
      continue;
    }
    if (is_word_char(c)) {
      std::string word;
      while (i < text.size() && is_word_char(static_cast<unsigned char>(text[i]))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      tokens.push_back(std::move(word));
      continue;
    }
    // Any other character is a one-character punctuation token.
    tokens.push_back(std::string(1, static_cast<char>(c)));
    ++i;
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> replace_token_spans(
    const std::vector<std::string>& tokens,
    const std::vector<std::vector<std::string>>& needles,
    const std::string& replacement) {
  // Longest needle wins at each position.
  std::vector<const std::vector<std::string>*> ordered;
  ordered.reserve(needles.size());
  for (const auto& n : needles) {
    if (!n.empty()) ordered.push_back(&n);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->size() > b->size(); });

  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::vector<std::string>* hit = nullptr;
    for (const auto* n : ordered) {
      if (i + n->size() > tokens.size()) continue;
      if (std::equal(n->begin(), n->end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        hit = n;
        break;
      }
    }
    if (hit != nullptr) {
      out.push_back(replacement);
      i += hit->size();
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace lotcrs

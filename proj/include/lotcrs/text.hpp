#pragma once

#include <string>
#include <vector>

namespace lotcrs {

// Special tokens. Kept uppercase even though ordinary text is lowercased,
// so they can never collide with corpus words.
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kItemToken = "[ITEM]";
inline constexpr const char* kUnkToken = "[UNK]";

bool is_special_token(const std::string& tok);

// Word tokenizer used everywhere text enters the system: lowercase, split
// on whitespace, every punctuation character becomes its own token, and
// bracketed specials ([CLS], [SEP], [MASK], [ITEM], [UNK], case-insensitive)
// pass through atomically in canonical uppercase form.
std::vector<std::string> tokenize_text(const std::string& text);

// Inverse presentation form: tokens joined by single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

// Replaces every occurrence of the token sequences in `needles` (longest
// first) with `replacement`. Used for item-name -> [ITEM] substitution.
std::vector<std::string> replace_token_spans(
    const std::vector<std::string>& tokens,
    const std::vector<std::vector<std::string>>& needles,
    const std::string& replacement);

}  // namespace lotcrs

#pragma once

// Unicode helpers used by corpus preprocessing. Code point classification is
// delegated to ICU.

#include <string>
#include <string_view>
#include <vector>

namespace shibboleth::text {

// Decodes UTF-8; throws DataError on malformed input.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view cps);
std::string encode_utf8(char32_t cp);

// Unicode general categories Pc, Pd, Ps, Pe, Pi, Pf, Po, plus the fullwidth
// forms of ASCII punctuation and symbols (U+FF01..U+FF0F, U+FF1A..U+FF20,
// U+FF3B..U+FF40, U+FF5B..U+FF65).
bool is_punctuation(char32_t cp);

// Unicode White_Space property.
bool is_whitespace(char32_t cp);

// Simple lowercase mapping, applied only to code points of the Latin script.
char32_t lower_latin(char32_t cp);

// Strips punctuation and lowercases Latin letters. Whitespace is kept.
std::u32string normalize(std::u32string_view cps);

// Splits on runs of Unicode whitespace; no empty pieces.
std::vector<std::u32string> split_whitespace(std::u32string_view cps);

bool ends_with(std::string_view s, std::string_view suffix);

} // namespace shibboleth::text

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cxreval {

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool is_word_char(char c) noexcept {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

/// Collapses whitespace runs to one space, removes spaces before , . ; : ! ?
/// and trims the ends.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        bool punct = c == ',' || c == '.' || c == ';' || c == ':' || c == '!' || c == '?';
        if (pending_space && !out.empty() && !punct) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

enum class TokenKind { Word, Comma, Punct };

struct Token {
    std::string norm;  // lowercased
    std::size_t begin = 0;
    std::size_t end = 0;
    TokenKind kind = TokenKind::Word;
    // De-identification placeholder such as "XXXX"; never matches a phrase.
    bool opaque = false;

    bool is_word() const noexcept { return kind == TokenKind::Word; }
};

/// Word tokens are maximal alphanumeric runs; a '.' between digits stays
/// inside the number. Hyphens, slashes and other symbols separate words and
/// are dropped, except ',' (kept as Comma) and other punctuation (Punct).
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (is_word_char(c)) {
            std::size_t start = i;
            while (i < text.size()) {
                if (is_word_char(text[i])) {
                    ++i;
                } else if (text[i] == '.' && i + 1 < text.size() && i > start &&
                           std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                           std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
                    ++i;
                } else {
                    break;
                }
            }
            Token t;
            t.begin = start;
            t.end = i;
            auto raw = text.substr(start, i - start);
            t.norm = to_lower(raw);
            t.opaque = raw.size() >= 2 && std::all_of(raw.begin(), raw.end(),
                                                      [](char ch) { return ch == 'X'; });
            tokens.push_back(std::move(t));
        } else if (c == ',') {
            tokens.push_back({",", i, i + 1, TokenKind::Comma, false});
            ++i;
        } else if (c == '.' || c == ';' || c == ':' || c == '!' || c == '?' || c == '(' ||
                   c == ')') {
            tokens.push_back({std::string(1, c), i, i + 1, TokenKind::Punct, false});
            ++i;
        } else {
            ++i;
        }
    }
    return tokens;
}

/// Lowercased word sequence of a phrase, e.g. "Chest-tube" -> {"chest", "tube"}.
inline std::vector<std::string> phrase_words(std::string_view phrase) {
    std::vector<std::string> words;
    for (auto& t : tokenize(phrase))
        if (t.is_word()) words.push_back(std::move(t.norm));
    return words;
}

/// Whole-word, case-insensitive search for `phrase` in `text`.
inline bool contains_phrase(std::string_view text, std::string_view phrase) {
    auto needle = phrase_words(phrase);
    if (needle.empty()) return false;
    auto tokens = tokenize(text);
    for (std::size_t i = 0; i + needle.size() <= tokens.size(); ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < needle.size() && ok; ++k)
            ok = tokens[i + k].is_word() && tokens[i + k].norm == needle[k];
        if (ok) return true;
    }
    return false;
}

} // namespace cxreval

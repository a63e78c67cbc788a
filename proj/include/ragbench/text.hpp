#pragma once

// Text primitives shared by every stage: UTF-8 validation, normalization and
// the whitespace tokenizer that defines all token budgets in the project.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ragbench/error.hpp"

namespace ragbench {

class Utf8Error : public DataError {
public:
    explicit Utf8Error(std::size_t offset)
        : DataError("invalid UTF-8 at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Byte offset of the first invalid UTF-8 sequence, or npos when `bytes` is valid.
/// Rejects overlong encodings, surrogates and code points above U+10FFFF.
inline std::size_t find_invalid_utf8(std::string_view bytes) noexcept {
    const auto* s = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    std::size_t i = 0;
    while (i < n) {
        const unsigned char c = s[i];
        if (c < 0x80) {
            ++i;
            continue;
        }
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return i;
        }
        if (i + len > n) return i;
        for (std::size_t k = 1; k < len; ++k) {
            if ((s[i + k] & 0xC0) != 0x80) return i;
            cp = (cp << 6) | (s[i + k] & 0x3F);
        }
        const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                              (len == 4 && cp < 0x10000);
        if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
        i += len;
    }
    return std::string_view::npos;
}

constexpr bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Validate UTF-8, strip leading BOMs, convert CRLF to LF and drop trailing
/// whitespace on every line. Everything else is preserved byte for byte.
inline std::string normalize(std::string_view raw) {
    if (const auto bad = find_invalid_utf8(raw); bad != std::string_view::npos) {
        throw Utf8Error(bad);
    }
    constexpr std::string_view bom = "\xEF\xBB\xBF";
    while (raw.starts_with(bom)) raw.remove_prefix(bom.size());

    std::string out;
    out.reserve(raw.size());
    std::size_t line_start = 0;
    auto flush_line = [&](std::size_t end) {
        std::size_t e = end;
        while (e > line_start && is_space(raw[e - 1])) --e;
        out.append(raw.substr(line_start, e - line_start));
    };
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\n') {
            flush_line(i);
            out.push_back('\n');
            line_start = i + 1;
        }
    }
    flush_line(raw.size());
    return out;
}

/// Half-open byte range of one token inside its source text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// A token is a maximal run of non-whitespace bytes.
inline std::vector<TokenSpan> tokenize(std::string_view text) {
    std::vector<TokenSpan> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i == text.size()) break;
        const std::size_t b = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        tokens.push_back({b, i});
    }
    return tokens;
}

inline std::size_t count_tokens(std::string_view text) noexcept {
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
        if (is_space(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

inline std::vector<std::string_view> split_tokens(std::string_view text) {
    std::vector<std::string_view> out;
    for (const auto& t : tokenize(text)) out.push_back(text.substr(t.begin, t.end - t.begin));
    return out;
}

/// Tokens joined by single spaces.
inline std::string collapse_whitespace(std::string_view text) {
    std::string out;
    for (const auto tok : split_tokens(text)) {
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    }
    return out;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

constexpr bool is_ascii_punct(char c) noexcept {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

/// Lowercased token with surrounding ASCII punctuation removed; may be empty.
inline std::string term_of(std::string_view token) {
    while (!token.empty() && is_ascii_punct(token.front())) token.remove_prefix(1);
    while (!token.empty() && is_ascii_punct(token.back())) token.remove_suffix(1);
    return ascii_lower(token);
}

}  // namespace ragbench

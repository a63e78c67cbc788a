#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "ragbench/corpus.hpp"
#include "ragbench/error.hpp"
#include "ragbench/text.hpp"

namespace ragbench {

enum class SplitStrategy { recursive_fixed, markdown_header };

inline std::string to_string(SplitStrategy s) {
    return s == SplitStrategy::markdown_header ? "markdown_header" : "recursive_fixed";
}

inline SplitStrategy parse_split_strategy(std::string_view s) {
    if (s == "recursive_fixed") return SplitStrategy::recursive_fixed;
    if (s == "markdown_header") return SplitStrategy::markdown_header;
    throw UsageError("unknown split strategy '" + std::string(s) + "'");
}

struct SplitterParams {
    std::size_t chunk_size = 500;
    std::size_t overlap = 50;
    SplitStrategy strategy = SplitStrategy::recursive_fixed;

    void validate() const {
        if (chunk_size < 1) throw UsageError("chunk_size must be >= 1");
        if (overlap >= chunk_size) throw UsageError("overlap must be < chunk_size");
    }
    friend bool operator==(const SplitterParams&, const SplitterParams&) = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;  ///< body only, a byte-exact slice of the document
    std::size_t token_count = 0;
    std::vector<std::string> header_path;
    std::size_t span_start = 0;  ///< token index in the document token stream
    std::size_t span_end = 0;

    /// Text used for embedding and prompting: the header chain, when present,
    /// is injected as a first line `H1 > H2 > ...`.
    std::string retrieval_text() const {
        if (header_path.empty()) return text;
        std::string out;
        for (std::size_t i = 0; i < header_path.size(); ++i) {
            if (i) out += " > ";
            out += header_path[i];
        }
        out += '\n';
        out += text;
        return out;
    }

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

namespace detail {

inline std::string chunk_id_for(const std::string& doc_id, std::size_t ordinal) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "#%04zu", ordinal);
    return doc_id + buf;
}

inline bool is_paragraph_break(std::string_view body, const std::vector<TokenSpan>& toks,
                               std::size_t boundary) {
    const auto gap = body.substr(toks[boundary - 1].end, toks[boundary].begin - toks[boundary - 1].end);
    return std::count(gap.begin(), gap.end(), '\n') >= 2;
}

inline bool is_sentence_end(std::string_view body, const TokenSpan& tok) {
    auto t = body.substr(tok.begin, tok.end - tok.begin);
    while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == ')' || t.back() == ']')) {
        t.remove_suffix(1);
    }
    return !t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?');
}

/// Pick the window end for a window starting at `start`. The ideal end is
/// start + chunk_size; it moves back to a paragraph break, else a sentence
/// break, within chunk_size/10 tokens. Every token gap is a word boundary, so
/// the fallback is the ideal end itself.
inline std::size_t snap_window_end(std::string_view body, const std::vector<TokenSpan>& toks,
                                   std::size_t start, const SplitterParams& p) {
    const std::size_t ideal = start + p.chunk_size;
    const std::size_t slack = p.chunk_size / 10;
    // The next window starts at end - overlap and must advance.
    const std::size_t lowest = std::max(ideal - std::min(slack, ideal), start + p.overlap + 1);
    if (lowest > ideal) return ideal;
    for (std::size_t e = ideal; e >= lowest; --e) {
        if (is_paragraph_break(body, toks, e)) return e;
        if (e == lowest) break;
    }
    for (std::size_t e = ideal; e >= lowest; --e) {
        if (is_sentence_end(body, toks[e - 1])) return e;
        if (e == lowest) break;
    }
    return ideal;
}

inline Chunk make_chunk(const Document& doc, const std::vector<TokenSpan>& toks, std::size_t lo,
                        std::size_t hi, const std::vector<std::string>& header_path, std::size_t ordinal) {
    Chunk c;
    c.chunk_id = chunk_id_for(doc.doc_id, ordinal);
    c.doc_id = doc.doc_id;
    c.text = doc.body.substr(toks[lo].begin, toks[hi - 1].end - toks[lo].begin);
    c.token_count = hi - lo;
    c.header_path = header_path;
    c.span_start = lo;
    c.span_end = hi;
    return c;
}

/// Sliding windows over tokens [lo, hi) of the document.
inline void window_split(const Document& doc, const std::vector<TokenSpan>& toks, std::size_t lo,
                         std::size_t hi, const SplitterParams& p,
                         const std::vector<std::string>& header_path, std::vector<Chunk>& out) {
    std::size_t start = lo;
    while (start < hi) {
        if (hi - start <= p.chunk_size) {
            out.push_back(make_chunk(doc, toks, start, hi, header_path, out.size()));
            return;
        }
        const std::size_t end = snap_window_end(doc.body, toks, start, p);
        out.push_back(make_chunk(doc, toks, start, end, header_path, out.size()));
        start = end - p.overlap;
    }
}

struct AtxHeading {
    int level = 0;
    std::string title;
};

/// Parses one line as an ATX heading (`#`..`######`, up to three spaces of
/// indentation, optional closing `#` run). Returns level 0 when not a heading.
inline AtxHeading parse_atx_heading(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && i < 3 && line[i] == ' ') ++i;
    std::size_t hashes = 0;
    while (i + hashes < line.size() && line[i + hashes] == '#') ++hashes;
    if (hashes == 0 || hashes > 6) return {};
    i += hashes;
    if (i < line.size() && line[i] != ' ' && line[i] != '\t') return {};
    std::string_view rest = line.substr(i);
    while (!rest.empty() && is_space(rest.front())) rest.remove_prefix(1);
    while (!rest.empty() && is_space(rest.back())) rest.remove_suffix(1);
    // Closing sequence: a run of '#' that is the whole title or follows a space.
    std::size_t k = rest.size();
    while (k > 0 && rest[k - 1] == '#') --k;
    if (k < rest.size() && (k == 0 || rest[k - 1] == ' ' || rest[k - 1] == '\t')) {
        rest = rest.substr(0, k);
        while (!rest.empty() && is_space(rest.back())) rest.remove_suffix(1);
    }
    return {static_cast<int>(hashes), std::string(rest)};
}

}  // namespace detail

/// Fixed-size windows with `overlap` shared tokens between neighbours.
inline std::vector<Chunk> recursive_split(const Document& doc, const SplitterParams& params) {
    params.validate();
    if (params.strategy != SplitStrategy::recursive_fixed) {
        throw UsageError("recursive_split requires strategy recursive_fixed");
    }
    const auto toks = tokenize(doc.body);
    std::vector<Chunk> out;
    detail::window_split(doc, toks, 0, toks.size(), params, {}, out);
    return out;
}

/// One chunk per markdown section body, tagged with the enclosing heading
/// chain. Heading lines themselves are not part of any chunk body; sections
/// without body tokens yield nothing; oversized sections are windowed with
/// the same size/overlap. Plain documents fall back to recursive_split.
inline std::vector<Chunk> header_split(const Document& doc, const SplitterParams& params,
                                       std::vector<std::string>* warnings = nullptr) {
    params.validate();
    if (params.strategy != SplitStrategy::markdown_header) {
        throw UsageError("header_split requires strategy markdown_header");
    }
    if (doc.format != DocFormat::markdown) {
        if (warnings) {
            warnings->push_back("document " + doc.doc_id +
                                " is not markdown; header split fell back to recursive split");
        }
        auto fixed = params;
        fixed.strategy = SplitStrategy::recursive_fixed;
        return recursive_split(doc, fixed);
    }

    const std::string_view body = doc.body;
    const auto toks = tokenize(body);
    auto first_token_at = [&](std::size_t byte) {
        return static_cast<std::size_t>(
            std::lower_bound(toks.begin(), toks.end(), byte,
                             [](const TokenSpan& t, std::size_t b) { return t.begin < b; }) -
            toks.begin());
    };

    struct Open {
        int level;
        std::string title;
    };
    std::vector<Open> stack;
    std::vector<std::string> current_path;
    std::vector<Chunk> out;
    std::size_t section_begin = 0;  // byte offset where the current section body starts

    auto close_section = [&](std::size_t section_end) {
        const std::size_t lo = first_token_at(section_begin);
        const std::size_t hi = first_token_at(section_end);
        if (hi > lo) detail::window_split(doc, toks, lo, hi, params, current_path, out);
    };

    std::size_t line_begin = 0;
    while (line_begin <= body.size()) {
        std::size_t line_end = body.find('\n', line_begin);
        if (line_end == std::string_view::npos) line_end = body.size();
        const auto heading = detail::parse_atx_heading(body.substr(line_begin, line_end - line_begin));
        if (heading.level > 0) {
            close_section(line_begin);
            while (!stack.empty() && stack.back().level >= heading.level) stack.pop_back();
            stack.push_back({heading.level, heading.title});
            current_path.clear();
            for (const auto& h : stack) current_path.push_back(h.title);
            section_begin = line_end;
        }
        if (line_end == body.size()) break;
        line_begin = line_end + 1;
    }
    close_section(body.size());
    return out;
}

inline std::vector<Chunk> split_document(const Document& doc, const SplitterParams& params,
                                         std::vector<std::string>* warnings = nullptr) {
    return params.strategy == SplitStrategy::markdown_header ? header_split(doc, params, warnings)
                                                             : recursive_split(doc, params);
}

inline std::vector<Chunk> split_corpus(const Corpus& corpus, const SplitterParams& params,
                                       std::vector<std::string>* warnings = nullptr) {
    std::vector<Chunk> all;
    for (const auto& doc : corpus.documents) {
        auto chunks = split_document(doc, params, warnings);
        std::move(chunks.begin(), chunks.end(), std::back_inserter(all));
    }
    return all;
}

/// Chunk bodies of one document stitched back together by span, skipping
/// tokens already emitted by an overlapping predecessor. Whitespace-normalized.
inline std::string reconstruct_bodies(const std::vector<Chunk>& chunks) {
    std::string out;
    std::size_t emitted_until = 0;
    bool any = false;
    for (const auto& c : chunks) {
        const auto words = split_tokens(c.text);
        std::size_t skip = 0;
        if (any && c.span_start < emitted_until) skip = std::min(emitted_until - c.span_start, words.size());
        for (std::size_t i = skip; i < words.size(); ++i) {
            if (!out.empty()) out.push_back(' ');
            out.append(words[i]);
        }
        emitted_until = std::max(emitted_until, c.span_end);
        any = true;
    }
    return out;
}

}  // namespace ragbench

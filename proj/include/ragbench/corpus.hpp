#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ragbench/error.hpp"
#include "ragbench/hash.hpp"
#include "ragbench/text.hpp"

namespace ragbench {

enum class DocFormat { plain, markdown };

inline std::string to_string(DocFormat f) { return f == DocFormat::markdown ? "markdown" : "plain"; }

inline DocFormat parse_doc_format(std::string_view s) {
    if (s == "plain") return DocFormat::plain;
    if (s == "markdown") return DocFormat::markdown;
    throw UsageError("unknown document format '" + std::string(s) + "'");
}

struct Document {
    std::string doc_id;
    std::string source_path;
    std::string body;  ///< normalized UTF-8, LF line endings
    DocFormat format = DocFormat::plain;

    friend bool operator==(const Document&, const Document&) = default;
};

/// Documents sorted by doc_id, plus the ingest log (`SKIP <path> <reason>`
/// lines) and non-fatal warnings.
struct Corpus {
    std::vector<Document> documents;
    std::vector<std::string> ingest_log;
    std::vector<std::string> warnings;

    const Document* find(std::string_view doc_id) const {
        auto it = std::lower_bound(documents.begin(), documents.end(), doc_id,
                                   [](const Document& d, std::string_view id) { return d.doc_id < id; });
        return (it != documents.end() && it->doc_id == doc_id) ? &*it : nullptr;
    }

    /// Hash over ids and bodies; changes whenever any document content changes.
    std::string fingerprint() const {
        Sha256 h;
        for (const auto& d : documents) {
            h.update(d.doc_id).update(std::string_view("\0", 1));
            h.update(to_string(d.format)).update(std::string_view("\0", 1));
            h.update(d.body).update(std::string_view("\0", 1));
        }
        return h.hex();
    }

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

namespace detail {

inline std::optional<DocFormat> format_for_extension(const std::filesystem::path& p) {
    const auto ext = ascii_lower(p.extension().string());
    if (ext == ".md") return DocFormat::markdown;
    if (ext == ".txt") return DocFormat::plain;
    return std::nullopt;
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Load every `.txt`/`.md` file directly inside `dir`. `format_hint`, when
/// set, overrides the extension-derived format for all files.
inline Corpus ingest_dir(const std::filesystem::path& dir,
                         std::optional<DocFormat> format_hint = std::nullopt) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw DataError("cannot read corpus directory " + dir.string());

    std::vector<fs::path> files;
    fs::directory_iterator it(dir, ec);
    if (ec) throw DataError("cannot read corpus directory " + dir.string() + ": " + ec.message());
    for (const auto& entry : it) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    Corpus corpus;
    std::set<std::string> used_ids;
    for (const auto& path : files) {
        const auto fmt = detail::format_for_extension(path);
        if (!fmt) {
            corpus.ingest_log.push_back("SKIP " + path.string() + " unsupported extension");
            continue;
        }
        std::string body;
        try {
            body = normalize(detail::read_file_bytes(path));
        } catch (const Utf8Error& e) {
            corpus.ingest_log.push_back("SKIP " + path.string() + " " + e.what());
            continue;
        } catch (const DataError& e) {
            corpus.ingest_log.push_back("SKIP " + path.string() + " " + e.what());
            continue;
        }

        // Filenames are visited in sorted order, so collision suffixes are stable.
        const std::string stem = ascii_lower(path.stem().string());
        std::string id = stem;
        for (int n = 2; used_ids.contains(id); ++n) id = stem + "-" + std::to_string(n);
        used_ids.insert(id);

        corpus.documents.push_back(
            Document{id, path.string(), std::move(body), format_hint.value_or(*fmt)});
    }
    std::sort(corpus.documents.begin(), corpus.documents.end(),
              [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    if (corpus.documents.empty()) corpus.warnings.push_back("empty corpus");
    return corpus;
}

}  // namespace ragbench

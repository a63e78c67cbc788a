#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragbench/binary_io.hpp"
#include "ragbench/error.hpp"
#include "ragbench/hash.hpp"
#include "ragbench/http.hpp"
#include "ragbench/text.hpp"

namespace ragbench {

enum class EmbedProvider { remote, stub };

/// Wire dialects for embedding endpoints. `native` is the internal shape
/// `{"model","input":[...]}` -> `{"vectors":[[...]]}`; the others adapt it.
enum class EmbedDialect { native, openai, ollama, hf };

inline EmbedProvider parse_embed_provider(std::string_view s) {
    if (s == "remote") return EmbedProvider::remote;
    if (s == "stub") return EmbedProvider::stub;
    throw UsageError("unknown embedding provider '" + std::string(s) + "'");
}
inline std::string to_string(EmbedProvider p) { return p == EmbedProvider::stub ? "stub" : "remote"; }

inline EmbedDialect parse_embed_dialect(std::string_view s) {
    if (s == "native") return EmbedDialect::native;
    if (s == "openai") return EmbedDialect::openai;
    if (s == "ollama") return EmbedDialect::ollama;
    if (s == "hf") return EmbedDialect::hf;
    throw UsageError("unknown embedding dialect '" + std::string(s) + "'");
}
inline std::string to_string(EmbedDialect d) {
    switch (d) {
        case EmbedDialect::openai: return "openai";
        case EmbedDialect::ollama: return "ollama";
        case EmbedDialect::hf: return "hf";
        default: return "native";
    }
}

struct EmbedderSpec {
    EmbedProvider provider = EmbedProvider::stub;
    std::string model_name;
    std::string endpoint_url;
    EmbedDialect dialect = EmbedDialect::native;
    /// Stub: required, >= 2. Remote: 0 means "take it from the first response".
    std::uint32_t dimension = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (provider == EmbedProvider::remote) {
            if (endpoint_url.empty()) throw UsageError("remote embedder needs an endpoint_url");
            if (dimension == 1) throw UsageError("embedding dimension must be >= 2");
        } else if (dimension < 2) {
            throw UsageError("embedding dimension must be >= 2");
        }
    }

    /// Name under which vectors are cached. Stub vectors never share a cache
    /// namespace with a real model of the same name.
    std::string cache_identity() const {
        if (provider == EmbedProvider::remote) return model_name;
        return "stub/" + std::to_string(seed) + "/" + std::to_string(dimension) + "/" + model_name;
    }
};

struct EmbeddingVector {
    std::vector<float> values;
    std::string key;
    bool degenerate = false;  ///< raw vector was zero and was replaced by e0

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline std::string embedding_key(std::string_view identity, std::string_view text) {
    return Sha256{}.update(identity).update(std::string_view("\0", 1)).update(text).hex();
}

/// L2-normalize in double precision. A zero vector becomes the first basis vector.
inline EmbeddingVector unit_normalize(const std::vector<double>& raw) {
    EmbeddingVector v;
    double sq = 0.0;
    for (double x : raw) sq += x * x;
    v.values.assign(raw.size(), 0.0f);
    if (sq == 0.0 || !std::isfinite(sq)) {
        if (!v.values.empty()) v.values[0] = 1.0f;
        v.degenerate = true;
        return v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < raw.size(); ++i) v.values[i] = static_cast<float>(raw[i] * inv);
    return v;
}

/// Offline embedder: feature-hashed bag of terms. Each term (lowercased, outer
/// punctuation stripped) lands in bucket (h >> 1) % dimension with sign +1
/// for even h and -1 for odd h.
inline EmbeddingVector stub_embed(std::uint64_t seed, std::uint32_t dimension, std::string_view text) {
    if (dimension < 2) throw UsageError("embedding dimension must be >= 2");
    std::vector<double> acc(dimension, 0.0);
    for (const auto tok : split_tokens(text)) {
        const auto term = term_of(tok);
        if (term.empty()) continue;
        const auto h = seeded_hash64(seed, term);
        acc[(h >> 1) % dimension] += (h & 1) ? -1.0 : 1.0;
    }
    auto v = unit_normalize(acc);
    v.key = embedding_key("stub/" + std::to_string(seed) + "/" + std::to_string(dimension), text);
    return v;
}

/// Content-addressed, write-through vector cache persisted in the `RGEMB1`
/// format. One file holds one dimension, so callers keep one file per model.
class EmbeddingCache {
public:
    static constexpr std::string_view magic = "RGEMB1";

    EmbeddingCache() = default;

    /// Opens `path`, loading it when it exists.
    explicit EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            auto decoded = binio::decode_records(magic, binio::read_file(path_));
            dimension_ = decoded.dimension;
            for (auto& r : decoded.records) entries_.emplace(std::move(r.key), std::move(r.values));
        }
    }

    std::uint32_t dimension() const {
        std::lock_guard lock(mu_);
        return dimension_;
    }
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

    std::optional<std::vector<float>> get(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    /// Insert and, when backed by a file, rewrite it.
    void put_all(const std::vector<binio::Record>& records) {
        std::lock_guard lock(mu_);
        for (const auto& r : records) {
            if (dimension_ == 0) dimension_ = static_cast<std::uint32_t>(r.values.size());
            if (r.values.size() != dimension_) throw DataError("embedding cache dimension mismatch");
            entries_[r.key] = r.values;
        }
        if (!path_.empty()) flush_locked();
    }

    void save(const std::filesystem::path& path) const {
        std::lock_guard lock(mu_);
        binio::write_file_atomic(path, encode_locked());
    }

private:
    std::string encode_locked() const {
        std::vector<binio::Record> records;
        records.reserve(entries_.size());
        for (const auto& [k, v] : entries_) records.push_back({k, v});
        return binio::encode_records(magic, dimension_, records);
    }
    void flush_locked() {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        binio::write_file_atomic(path_, encode_locked());
    }

    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::uint32_t dimension_ = 0;
    std::map<std::string, std::vector<float>> entries_;  // ordered: deterministic file bytes
};

namespace detail {

inline json embedding_request(const EmbedderSpec& spec, const std::vector<std::string>& texts) {
    switch (spec.dialect) {
        case EmbedDialect::hf: return json{{"inputs", texts}};
        default: return json{{"model", spec.model_name}, {"input", texts}};
    }
}

inline std::vector<std::vector<double>> parse_embedding_response(EmbedDialect dialect, const json& body,
                                                                 std::size_t expected) {
    std::vector<std::vector<double>> out;
    try {
        switch (dialect) {
            case EmbedDialect::native: out = body.at("vectors").get<std::vector<std::vector<double>>>(); break;
            case EmbedDialect::ollama: out = body.at("embeddings").get<std::vector<std::vector<double>>>(); break;
            case EmbedDialect::hf: out = body.get<std::vector<std::vector<double>>>(); break;
            case EmbedDialect::openai: {
                const auto& data = body.at("data");
                out.resize(data.size());
                for (std::size_t i = 0; i < data.size(); ++i) {
                    const auto idx = data[i].value("index", i);
                    if (idx >= out.size()) throw DataError("embedding index out of range");
                    out[idx] = data[i].at("embedding").get<std::vector<double>>();
                }
                break;
            }
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what(), 200);
    }
    if (out.size() != expected) {
        throw ProviderError("embedding response has " + std::to_string(out.size()) + " vectors, expected " +
                                std::to_string(expected),
                            200);
    }
    return out;
}

}  // namespace detail

/// Embeds texts through the configured provider, consulting and filling the
/// cache. Remote batches run with at most `max_in_flight` requests at once.
class Embedder {
public:
    explicit Embedder(EmbedderSpec spec, std::shared_ptr<EmbeddingCache> cache = nullptr,
                      std::shared_ptr<HttpTransport> transport = nullptr, RetryPolicy retry = {})
        : spec_(std::move(spec)), cache_(std::move(cache)), transport_(std::move(transport)), retry_(retry) {
        spec_.validate();
        if (spec_.provider == EmbedProvider::remote && !transport_) {
            transport_ = std::make_shared<HttplibTransport>();
        }
        dimension_ = spec_.dimension;
        if (cache_ && cache_->dimension() != 0) {
            if (dimension_ != 0 && cache_->dimension() != dimension_) {
                throw DataError("embedding cache dimension " + std::to_string(cache_->dimension()) +
                                " does not match embedder dimension " + std::to_string(dimension_));
            }
            dimension_ = cache_->dimension();
        }
    }

    const EmbedderSpec& spec() const { return spec_; }
    std::uint32_t dimension() const { return dimension_; }

    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) {
        if (texts.empty()) throw UsageError("embed_batch needs at least one text");
        const auto identity = spec_.cache_identity();

        std::vector<std::string> keys(texts.size());
        std::unordered_map<std::string, EmbeddingVector> resolved;
        std::vector<std::string> missing_texts;
        std::vector<std::string> missing_keys;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            keys[i] = embedding_key(identity, texts[i]);
            if (resolved.contains(keys[i])) continue;
            if (cache_) {
                if (auto hit = cache_->get(keys[i])) {
                    EmbeddingVector v{std::move(*hit), keys[i], false};
                    v.degenerate = is_basis0(v.values);
                    resolved.emplace(keys[i], std::move(v));
                    continue;
                }
            }
            resolved.emplace(keys[i], EmbeddingVector{});
            missing_texts.push_back(texts[i]);
            missing_keys.push_back(keys[i]);
        }

        if (!missing_texts.empty()) {
            auto fresh = spec_.provider == EmbedProvider::stub ? embed_stub(missing_texts)
                                                               : embed_remote(missing_texts);
            std::vector<binio::Record> records;
            for (std::size_t i = 0; i < fresh.size(); ++i) {
                fresh[i].key = missing_keys[i];
                records.push_back({missing_keys[i], fresh[i].values});
                resolved[missing_keys[i]] = std::move(fresh[i]);
            }
            if (cache_) cache_->put_all(records);
        }

        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& k : keys) out.push_back(resolved.at(k));
        return out;
    }

    EmbeddingVector embed(const std::string& text) { return embed_batch({text}).front(); }

private:
    static bool is_basis0(const std::vector<float>& v) {
        if (v.empty() || v[0] != 1.0f) return false;
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] != 0.0f) return false;
        }
        return true;
    }

    std::vector<EmbeddingVector> embed_stub(const std::vector<std::string>& texts) const {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(stub_embed(spec_.seed, spec_.dimension, t));
        return out;
    }

    std::vector<EmbeddingVector> embed_remote(const std::vector<std::string>& texts) {
        std::vector<std::vector<std::string>> batches;
        for (std::size_t i = 0; i < texts.size(); i += batch_size) {
            batches.emplace_back(texts.begin() + i, texts.begin() + std::min(texts.size(), i + batch_size));
        }
        std::vector<std::vector<std::vector<double>>> raw(batches.size());
        for (std::size_t wave = 0; wave < batches.size(); wave += max_in_flight) {
            std::vector<std::future<std::vector<std::vector<double>>>> inflight;
            for (std::size_t b = wave; b < std::min(batches.size(), wave + max_in_flight); ++b) {
                inflight.push_back(std::async(std::launch::async, [this, &batches, b] {
                    const auto reply = post_json(*transport_, spec_.endpoint_url,
                                                 detail::embedding_request(spec_, batches[b]), retry_);
                    return detail::parse_embedding_response(spec_.dialect, reply, batches[b].size());
                }));
            }
            for (std::size_t j = 0; j < inflight.size(); ++j) raw[wave + j] = inflight[j].get();
        }

        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& batch : raw) {
            for (const auto& vec : batch) {
                if (dimension_ == 0) {
                    if (vec.size() < 2) throw ProviderError("embedding dimension must be >= 2", 200);
                    dimension_ = static_cast<std::uint32_t>(vec.size());
                }
                if (vec.size() != dimension_) {
                    throw DataError("embedding dimension mismatch: got " + std::to_string(vec.size()) +
                                    ", expected " + std::to_string(dimension_));
                }
                out.push_back(unit_normalize(vec));
            }
        }
        return out;
    }

    EmbedderSpec spec_;
    std::shared_ptr<EmbeddingCache> cache_;
    std::shared_ptr<HttpTransport> transport_;
    RetryPolicy retry_;
    std::uint32_t dimension_ = 0;
};

}  // namespace ragbench

#pragma once

// Exact flat index. Stored vectors are unit-normalized, so similarity is the
// plain dot product (accumulated in double); no per-query norm is computed.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragbench/binary_io.hpp"
#include "ragbench/error.hpp"

namespace ragbench {

template <std::floating_point T>
struct IndexEntry {
    std::string chunk_id;
    std::vector<T> vector;
};

struct SearchHit {
    std::string chunk_id;
    double similarity = 0.0;
    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Ranking order for hits: similarity descending, then chunk_id ascending.
inline bool ranks_before(double sim_a, const std::string& id_a, double sim_b, const std::string& id_b) {
    if (sim_a != sim_b) return sim_a > sim_b;
    return id_a < id_b;
}

template <std::floating_point T>
double dot(std::span<const T> a, std::span<const T> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

template <std::floating_point T>
class FlatIndex {
public:
    static constexpr std::string_view magic = "RGIDX1";

    FlatIndex() = default;

    /// Entries keep their given order. Throws on empty input, ragged
    /// dimensions or duplicate ids.
    static FlatIndex build(const std::vector<IndexEntry<T>>& entries) {
        if (entries.empty()) throw DataError("cannot build an index from zero entries");
        FlatIndex idx;
        idx.dimension_ = entries.front().vector.size();
        if (idx.dimension_ == 0) throw DataError("index dimension must be positive");
        std::unordered_set<std::string> seen;
        idx.ids_.reserve(entries.size());
        idx.data_.reserve(entries.size() * idx.dimension_);
        for (const auto& e : entries) {
            if (e.vector.size() != idx.dimension_) {
                throw DataError("dimension mismatch for '" + e.chunk_id + "': " + std::to_string(e.vector.size()) +
                                " != " + std::to_string(idx.dimension_));
            }
            if (!seen.insert(e.chunk_id).second) throw DataError("duplicate chunk_id '" + e.chunk_id + "'");
            idx.ids_.push_back(e.chunk_id);
            idx.data_.insert(idx.data_.end(), e.vector.begin(), e.vector.end());
        }
        return idx;
    }

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dimension_; }
    bool empty() const { return ids_.empty(); }

    const std::string& id(std::size_t i) const { return ids_[i]; }
    std::span<const T> vector(std::size_t i) const {
        return {data_.data() + i * dimension_, dimension_};
    }

    /// Position of `chunk_id`, or size() when absent. Linear; used off the hot path.
    std::size_t position(const std::string& chunk_id) const {
        return static_cast<std::size_t>(std::find(ids_.begin(), ids_.end(), chunk_id) - ids_.begin());
    }

    struct RankedPosition {
        std::size_t pos;
        double similarity;
    };

    /// Top min(k, size) positions in ranking order.
    std::vector<RankedPosition> rank(std::span<const T> query, std::size_t k) const {
        if (k < 1) throw UsageError("k must be >= 1");
        if (empty()) return {};
        if (query.size() != dimension_) {
            throw DataError("query dimension " + std::to_string(query.size()) + " != index dimension " +
                            std::to_string(dimension_));
        }
        std::vector<RankedPosition> all(size());
        for (std::size_t i = 0; i < size(); ++i) all[i] = {i, dot<T>(vector(i), query)};
        const auto take = std::min(k, all.size());
        const auto cmp = [this](const RankedPosition& a, const RankedPosition& b) {
            return ranks_before(a.similarity, ids_[a.pos], b.similarity, ids_[b.pos]);
        };
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), cmp);
        all.resize(take);
        return all;
    }

    std::vector<SearchHit> search_topk(std::span<const T> query, std::size_t k) const {
        std::vector<SearchHit> hits;
        for (const auto& r : rank(query, k)) hits.push_back({ids_[r.pos], r.similarity});
        return hits;
    }

    std::string serialize() const
        requires std::same_as<T, float>
    {
        std::vector<binio::Record> records;
        records.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) {
            const auto v = vector(i);
            records.push_back({ids_[i], std::vector<float>(v.begin(), v.end())});
        }
        return binio::encode_records(magic, static_cast<std::uint32_t>(dimension_), records);
    }

    static FlatIndex deserialize(std::string_view bytes)
        requires std::same_as<T, float>
    {
        auto decoded = binio::decode_records(magic, bytes);
        if (decoded.records.empty()) {
            FlatIndex idx;
            idx.dimension_ = decoded.dimension;
            return idx;
        }
        std::vector<IndexEntry<T>> entries;
        entries.reserve(decoded.records.size());
        for (auto& r : decoded.records) entries.push_back({std::move(r.key), std::move(r.values)});
        return build(entries);
    }

    void save(const std::filesystem::path& path) const
        requires std::same_as<T, float>
    {
        binio::write_file_atomic(path, serialize());
    }

    static FlatIndex load(const std::filesystem::path& path)
        requires std::same_as<T, float>
    {
        return deserialize(binio::read_file(path));
    }

    friend bool operator==(const FlatIndex&, const FlatIndex&) = default;

private:
    std::size_t dimension_ = 0;
    std::vector<std::string> ids_;
    std::vector<T> data_;  // row-major, size() x dimension_
};

using Index = FlatIndex<float>;

template <std::floating_point T>
FlatIndex<T> build_index(const std::vector<IndexEntry<T>>& entries) {
    return FlatIndex<T>::build(entries);
}

template <std::floating_point T>
std::vector<SearchHit> search_topk(const FlatIndex<T>& index, std::span<const T> query, std::size_t k) {
    return index.search_topk(query, k);
}

}  // namespace ragbench

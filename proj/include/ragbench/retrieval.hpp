#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ragbench/error.hpp"
#include "ragbench/vector_index.hpp"

namespace ragbench {

enum class RetrievalStrategy { topk, mmr };

inline std::string to_string(RetrievalStrategy s) { return s == RetrievalStrategy::mmr ? "mmr" : "topk"; }

inline RetrievalStrategy parse_retrieval_strategy(std::string_view s) {
    if (s == "topk") return RetrievalStrategy::topk;
    if (s == "mmr") return RetrievalStrategy::mmr;
    throw UsageError("unknown retrieval strategy '" + std::string(s) + "'");
}

struct RetrievalParams {
    RetrievalStrategy strategy = RetrievalStrategy::topk;
    std::size_t k = 3;
    double lambda = 0.5;              ///< mmr only
    std::size_t candidate_pool = 20;  ///< mmr only

    void validate() const {
        if (k < 1) throw UsageError("k must be >= 1");
        if (strategy == RetrievalStrategy::mmr) {
            if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must lie in [0, 1]");
            if (candidate_pool < k) throw UsageError("candidate_pool must be >= k");
        }
    }
};

struct Selection {
    std::string chunk_id;
    double query_similarity = 0.0;
    double selection_score = 0.0;
    friend bool operator==(const Selection&, const Selection&) = default;
};

/// MMR score of every remaining candidate at one greedy step, in pool order.
struct MmrRound {
    std::vector<Selection> candidates;
};

struct RetrievalResult {
    std::vector<Selection> selected;  ///< selection order
    RetrievalStrategy strategy_used = RetrievalStrategy::topk;
    std::vector<MmrRound> rounds;     ///< mmr audit trail, one entry per pick after the first
    std::vector<std::string> warnings;
};

template <std::floating_point T>
RetrievalResult retrieve_topk(const FlatIndex<T>& index, std::span<const T> query, std::size_t k) {
    if (k < 1) throw UsageError("k must be >= 1");
    RetrievalResult out;
    out.strategy_used = RetrievalStrategy::topk;
    if (index.empty()) {
        out.warnings.push_back("empty index");
        return out;
    }
    for (const auto& hit : index.search_topk(query, k)) {
        out.selected.push_back({hit.chunk_id, hit.similarity, hit.similarity});
    }
    return out;
}

/// Greedy Maximal Marginal Relevance over the top `candidate_pool` hits.
/// First pick is the best query match; each later pick maximizes
/// lambda * sim(q, d) - (1 - lambda) * max_{s in selected} sim(d, s),
/// ties going to the smaller chunk_id. Negative scores remain selectable.
template <std::floating_point T>
RetrievalResult retrieve_mmr(const FlatIndex<T>& index, std::span<const T> query, const RetrievalParams& params) {
    params.validate();
    if (params.strategy != RetrievalStrategy::mmr) throw UsageError("retrieve_mmr requires strategy mmr");
    RetrievalResult out;
    out.strategy_used = RetrievalStrategy::mmr;
    if (index.empty()) {
        out.warnings.push_back("empty index");
        return out;
    }

    const auto pool = index.rank(query, params.candidate_pool);
    const std::size_t n = pool.size();
    const std::size_t picks = std::min(params.k, n);
    std::vector<bool> taken(n, false);
    // Highest similarity to anything selected so far, per pool member.
    std::vector<double> redundancy(n, -std::numeric_limits<double>::infinity());

    auto take = [&](std::size_t j, double score) {
        taken[j] = true;
        out.selected.push_back({index.id(pool[j].pos), pool[j].similarity, score});
        const auto picked = index.vector(pool[j].pos);
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) redundancy[i] = std::max(redundancy[i], dot<T>(index.vector(pool[i].pos), picked));
        }
    };

    if (picks == 0) return out;
    take(0, pool[0].similarity);  // pool is already in ranking order

    const double lambda = params.lambda;
    while (out.selected.size() < picks) {
        MmrRound round;
        std::size_t best = n;
        double best_score = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            const double score = lambda * pool[i].similarity - (1.0 - lambda) * redundancy[i];
            round.candidates.push_back({index.id(pool[i].pos), pool[i].similarity, score});
            if (best == n || ranks_before(score, index.id(pool[i].pos), best_score, index.id(pool[best].pos))) {
                best = i;
                best_score = score;
            }
        }
        out.rounds.push_back(std::move(round));
        take(best, best_score);
    }
    return out;
}

template <std::floating_point T>
RetrievalResult retrieve(const FlatIndex<T>& index, std::span<const T> query, const RetrievalParams& params) {
    params.validate();
    return params.strategy == RetrievalStrategy::mmr ? retrieve_mmr(index, query, params)
                                                     : retrieve_topk(index, query, params.k);
}

}  // namespace ragbench

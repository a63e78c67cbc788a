#pragma once

// Reference implementations written the slow, obvious way. Tests compare the
// library against these rather than against itself.

#include <algorithm>
#include <string>
#include <vector>

namespace testing_support {

template <class T>
struct OracleEntry {
    std::string id;
    std::vector<T> v;
};

template <class T>
long double oracle_dot(const std::vector<T>& a, const std::vector<T>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
    return s;
}

struct OracleHit {
    std::string id;
    long double sim;
};

/// Linear scan, full sort by (-similarity, id), truncate.
template <class T>
std::vector<OracleHit> brute_force_topk(const std::vector<OracleEntry<T>>& entries, const std::vector<T>& q,
                                        std::size_t k) {
    std::vector<OracleHit> all;
    for (const auto& e : entries) all.push_back({e.id, oracle_dot(e.v, q)});
    std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

/// Textbook MMR: recompute every score from scratch at each step.
template <class T>
std::vector<std::string> brute_force_mmr(const std::vector<OracleEntry<T>>& entries, const std::vector<T>& q,
                                         std::size_t k, double lambda, std::size_t pool_size) {
    const auto pool = brute_force_topk(entries, q, pool_size);
    auto vec_of = [&](const std::string& id) -> const std::vector<T>& {
        for (const auto& e : entries) {
            if (e.id == id) return e.v;
        }
        throw std::logic_error("unknown id");
    };
    std::vector<std::string> picked;
    if (pool.empty()) return picked;
    picked.push_back(pool[0].id);
    while (picked.size() < std::min(k, pool.size())) {
        std::string best;
        long double best_score = 0;
        for (const auto& c : pool) {
            if (std::find(picked.begin(), picked.end(), c.id) != picked.end()) continue;
            long double red = -1e300L;
            for (const auto& s : picked) red = std::max(red, oracle_dot(vec_of(c.id), vec_of(s)));
            const long double score = lambda * c.sim - (1.0L - lambda) * red;
            if (best.empty() || score > best_score || (score == best_score && c.id < best)) {
                best = c.id;
                best_score = score;
            }
        }
        picked.push_back(best);
    }
    return picked;
}

}  // namespace testing_support

#include <gtest/gtest.h>

#include "ragbench/vector_index.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace ragbench;
using testing_support::Rng;

namespace {

std::vector<IndexEntry<float>> random_entries(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<IndexEntry<float>> out;
    char id[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(id, sizeof id, "c%05zu", i);
        out.push_back({id, testing_support::to_float(testing_support::random_unit(rng, dim))});
    }
    return out;
}

std::vector<testing_support::OracleEntry<float>> oracle_view(const std::vector<IndexEntry<float>>& entries) {
    std::vector<testing_support::OracleEntry<float>> out;
    for (const auto& e : entries) out.push_back({e.chunk_id, e.vector});
    return out;
}

}  // namespace

TEST(FlatIndex, SingleEntry) {
    const auto idx = build_index<float>({{"only", {1.0f, 0.0f}}});
    EXPECT_EQ(idx.size(), 1u);
    EXPECT_EQ(idx.dimension(), 2u);
}

TEST(FlatIndex, RejectsDuplicatesAndRaggedDimensions) {
    try {
        build_index<float>({{"x", {1, 0}}, {"x", {0, 1}}});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    }
    EXPECT_THROW(build_index<float>({{"x", {1, 0}}, {"y", {0, 1, 0}}}), DataError);
    EXPECT_THROW(build_index<float>({}), DataError);
}

TEST(FlatIndex, SelfSimilarityAndOrthogonality) {
    Rng rng(1);
    const auto entries = random_entries(rng, 50, 16);
    const auto idx = build_index(entries);
    const auto hits = idx.search_topk(std::span<const float>(entries[17].vector), 1);
    EXPECT_EQ(hits[0].chunk_id, entries[17].chunk_id);
    EXPECT_NEAR(hits[0].similarity, 1.0, 1e-6);

    const auto single = build_index<float>({{"e", {0.0f, 1.0f, 0.0f}}});
    const std::vector<float> q{1.0f, 0.0f, 0.0f};
    EXPECT_NEAR(single.search_topk(std::span<const float>(q), 1)[0].similarity, 0.0, 1e-6);
}

TEST(FlatIndex, KLargerThanSizeReturnsEverythingSorted) {
    const auto idx = build_index<float>({{"b", {0.6f, 0.8f}}, {"a", {0.6f, 0.8f}}, {"c", {1.0f, 0.0f}}});
    const std::vector<float> q{1.0f, 0.0f};
    const auto hits = idx.search_topk(std::span<const float>(q), 10);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].chunk_id, "c");
    EXPECT_EQ(hits[1].chunk_id, "a");  // tie with b, smaller id first
    EXPECT_EQ(hits[2].chunk_id, "b");
}

TEST(FlatIndex, ErrorsOnBadQuery) {
    const auto idx = build_index<float>({{"a", {1.0f, 0.0f}}});
    const std::vector<float> q3{1, 0, 0};
    EXPECT_THROW(idx.search_topk(std::span<const float>(q3), 1), DataError);
    const std::vector<float> q2{1, 0};
    EXPECT_THROW(idx.search_topk(std::span<const float>(q2), 0), UsageError);
}

TEST(FlatIndex, MatchesBruteForceOracle) {
    Rng rng(2024);
    for (std::size_t n : {1u, 7u, 200u, 2000u}) {
        const auto entries = random_entries(rng, n, 32);
        const auto idx = build_index(entries);
        const auto oracle = oracle_view(entries);
        for (int t = 0; t < 20; ++t) {
            const auto q = testing_support::to_float(testing_support::random_unit(rng, 32));
            const auto got = idx.search_topk(std::span<const float>(q), 10);
            const auto want = testing_support::brute_force_topk(oracle, q, 10);
            ASSERT_EQ(got.size(), want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                EXPECT_EQ(got[i].chunk_id, want[i].id);
                EXPECT_NEAR(got[i].similarity, static_cast<double>(want[i].sim), 1e-9);
            }
        }
    }
}

TEST(FlatIndex, SaveLoadRoundTripIsBitwise) {
    Rng rng(8);
    testing_support::TempDir dir;
    for (std::size_t n : {3u, 1000u}) {
        const auto idx = build_index(random_entries(rng, n, 24));
        idx.save(dir / "x.rgidx");
        const auto back = Index::load(dir / "x.rgidx");
        EXPECT_EQ(back, idx);
        EXPECT_EQ(back.serialize(), idx.serialize());
        const auto q = testing_support::to_float(testing_support::random_unit(rng, 24));
        EXPECT_EQ(back.search_topk(std::span<const float>(q), 50), idx.search_topk(std::span<const float>(q), 50));
    }
}

TEST(FlatIndex, FileLayout) {
    const auto idx = build_index<float>({{"ab", {1.0f, 0.0f}}});
    const auto bytes = idx.serialize();
    // magic + u32 dim + u64 count + (u32 len + "ab" + 2 floats)
    ASSERT_EQ(bytes.size(), 6u + 4 + 8 + 4 + 2 + 8);
    EXPECT_EQ(bytes.substr(0, 6), "RGIDX1");
    EXPECT_EQ(bytes.substr(6, 4), std::string("\x02\x00\x00\x00", 4));
    EXPECT_EQ(bytes.substr(10, 8), std::string("\x01\0\0\0\0\0\0\0", 8));
    EXPECT_EQ(bytes.substr(22, 2), "ab");
    EXPECT_EQ(bytes.substr(24, 4), std::string("\x00\x00\x80\x3f", 4));  // 1.0f little-endian
}

TEST(FlatIndex, LoadErrors) {
    testing_support::TempDir dir;
    testing_support::write_file(dir / "empty.rgidx", "");
    try {
        Index::load(dir / "empty.rgidx");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_STREQ(e.what(), "bad magic");
    }
    testing_support::write_file(dir / "emb.rgidx", "RGEMB1");
    EXPECT_THROW(Index::load(dir / "emb.rgidx"), DataError);

    const auto bytes = build_index<float>({{"ab", {1.0f, 0.0f}}}).serialize();
    testing_support::write_file(dir / "cut.rgidx", bytes.substr(0, 25));
    try {
        Index::load(dir / "cut.rgidx");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(std::string(e.what()), "truncated file at byte offset 24");
    }
}

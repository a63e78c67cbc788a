#pragma once

// Test-only helpers: scratch directories, a scripted HTTP transport and a
// small seeded generator for property tests.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "ragbench/http.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("ragbench-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& bytes) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Replies come from a handler; every request is recorded.
class FakeTransport final : public ragbench::HttpTransport {
public:
    using Handler = std::function<ragbench::HttpResponse(const ragbench::HttpRequest&)>;

    explicit FakeTransport(Handler h) : handler_(std::move(h)) {}

    /// Replays `script` in order, repeating the last entry once exhausted.
    static std::shared_ptr<FakeTransport> scripted(std::vector<ragbench::HttpResponse> script) {
        auto state = std::make_shared<std::deque<ragbench::HttpResponse>>(script.begin(), script.end());
        return std::make_shared<FakeTransport>([state](const ragbench::HttpRequest&) {
            auto r = state->front();
            if (state->size() > 1) state->pop_front();
            return r;
        });
    }

    ragbench::HttpResponse post(const ragbench::HttpRequest& req) override {
        std::lock_guard lock(mu_);
        requests.push_back(req);
        return handler_(req);
    }

    std::size_t count() const {
        std::lock_guard lock(mu_);
        return requests.size();
    }

    std::vector<ragbench::HttpRequest> requests;

private:
    Handler handler_;
    mutable std::mutex mu_;
};

inline ragbench::RetryPolicy no_delay(int retries = 3) { return {retries, std::chrono::milliseconds(0)}; }

using Rng = std::mt19937_64;

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    double sq = 0.0;
    do {
        sq = 0.0;
        for (auto& x : v) {
            x = g(rng);
            sq += x * x;
        }
    } while (sq == 0.0);
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& x : v) x *= inv;
    return v;
}

inline std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

inline std::string random_words(Rng& rng, std::size_t n, const std::vector<std::string>& vocab) {
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += vocab[pick(rng)];
    }
    return out;
}

inline const std::vector<std::string>& plain_vocab() {
    static const std::vector<std::string> v = {
        "refugee", "child",   "school",    "teacher", "trauma",  "family",  "clinic", "therapy",
        "stress",  "support", "language",  "housing", "asylum",  "session", "parent", "community",
        "camp",    "care",    "wellbeing", "screen",  "referral", "outreach", "peer", "resilience"};
    return v;
}

}  // namespace testing_support

#include <gtest/gtest.h>

#include "ragbench/runner.hpp"
#include "support/helpers.hpp"

using namespace ragbench;
using testing_support::FakeTransport;
using testing_support::read_file;
using testing_support::TempDir;

namespace {

ExperimentConfig offline_config(const fs::path& out) {
    ExperimentConfig c;
    c.corpus_dir = RAGBENCH_FIXTURES "/corpus";
    c.queries_file = RAGBENCH_FIXTURES "/queries5.jsonl";
    c.output_dir = out;
    c.offline = true;
    c.seed = 7;
    return c;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    }
    return out;
}

/// Plays every remote endpoint the built-in profiles and the judge talk to.
std::shared_ptr<FakeTransport> fake_services(bool break_ollama_generation = false) {
    return std::make_shared<FakeTransport>([=](const HttpRequest& req) -> HttpResponse {
        const auto body = json::parse(req.body);
        auto embed = [](const std::string& s) {
            std::vector<double> v(16, 0.0);
            for (const auto tok : split_tokens(s)) v[seeded_hash64(1, term_of(tok)) % 16] += 1.0;
            v[0] += 0.01;
            return v;
        };
        const auto& url = req.url;
        if (url.find("feature-extraction") != std::string::npos) {  // hf embeddings
            json out = json::array();
            for (const auto& t : body.at("inputs")) out.push_back(embed(t.get<std::string>()));
            return {200, out.dump()};
        }
        if (url.ends_with("/api/embed")) {  // ollama embeddings
            json out = json::array();
            for (const auto& t : body.at("input")) out.push_back(embed(t.get<std::string>()));
            return {200, json{{"embeddings", out}}.dump()};
        }
        if (url.find("zephyr") != std::string::npos) {
            EXPECT_EQ(body["parameters"]["do_sample"], false);
            return {200, json::array({json{{"generated_text", "Schools screen children and refer them."}}}).dump()};
        }
        if (url.ends_with("/api/generate")) {
            if (break_ollama_generation) return {500, "model crashed"};
            EXPECT_DOUBLE_EQ(body["options"]["top_p"].get<double>(), 0.9);
            return {200, json{{"response", "Trauma-focused therapy helps children."}}.dump()};
        }
        if (url.find("judge") != std::string::npos) {
            const auto prompt = body["messages"][1]["content"].get<std::string>();
            if (prompt.find("unjudgeable-marker") != std::string::npos) {
                return {200, json{{"choices", json::array({json{{"message", json{{"content", "cannot say"}}}}})}}.dump()};
            }
            const double h = prompt.find("therapy helps children") != std::string::npos ? 0.1 : 0.3;
            const auto content = json{{"hallucination", h}, {"relevance", 0.9}, {"rationale", "fake"}}.dump();
            return {200, json{{"choices", json::array({json{{"message", json{{"content", "Verdict: " + content}}}}})}}.dump()};
        }
        return {404, "unknown endpoint " + url};
    });
}

ExperimentConfig networked_config(const fs::path& out) {
    auto c = offline_config(out);
    c.offline = false;
    c.judge = EndpointSpec{"http://judge.test/v1/chat/completions", GenDialect::openai_chat, "gpt-4"};
    c.retry = testing_support::no_delay();
    return c;
}

}  // namespace

TEST(Runner, OfflineRunProducesAllArtifacts) {
    TempDir dir;
    const auto report = run_experiment(offline_config(dir.path()));
    ASSERT_EQ(report.pipelines.size(), 2u);
    EXPECT_EQ(report.pipelines[0].name, "zephyr-like");
    EXPECT_EQ(report.pipelines[1].name, "deepseek-like");
    for (const auto& p : report.pipelines) {
        EXPECT_EQ(p.n_queries, 5u);
        EXPECT_EQ(p.n_missing, 0u);
        // The extractive stub copies context, which the lexical judge fully supports.
        EXPECT_EQ(p.hallucination_mean, 0.0);
        for (const char* f : {"chunks.jsonl", "index.rgidx", "retrievals.jsonl", "prompts.jsonl", "answers.jsonl",
                              "verdicts.jsonl"}) {
            EXPECT_TRUE(fs::exists(dir / p.name / f)) << p.name << "/" << f;
        }
        EXPECT_FALSE(fs::exists(dir / p.name / "PARTIAL"));
    }
    for (const char* f : {"report.json", "report.txt", "report.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / f));

    const auto answers = read_file(dir / "deepseek-like" / "answers.jsonl");
    const auto first = json::parse(answers.substr(0, answers.find('\n')));
    EXPECT_EQ(first["decoding"]["top_p"], 0.9);
    EXPECT_EQ(first["decoding"]["temperature"], 0.2);
    const auto zanswers = read_file(dir / "zephyr-like" / "answers.jsonl");
    EXPECT_EQ(json::parse(zanswers.substr(0, zanswers.find('\n')))["decoding"]["top_p"], 1.0);

    const auto retrievals = read_file(dir / "deepseek-like" / "retrievals.jsonl");
    const auto r0 = json::parse(retrievals.substr(0, retrievals.find('\n')));
    EXPECT_EQ(r0["strategy"], "mmr");
    EXPECT_EQ(r0["selected"].size(), 2u);
    const auto zretrievals = read_file(dir / "zephyr-like" / "retrievals.jsonl");
    const auto z0 = json::parse(zretrievals.substr(0, zretrievals.find('\n')));
    EXPECT_EQ(z0["strategy"], "topk");
}

TEST(Runner, OfflineRunIsByteReproducible) {
    TempDir a, b;
    run_experiment(offline_config(a.path()));
    run_experiment(offline_config(b.path()));
    const auto ta = tree_bytes(a.path());
    const auto tb = tree_bytes(b.path());
    ASSERT_EQ(ta.size(), tb.size());
    for (const auto& [name, bytes] : ta) EXPECT_EQ(bytes, tb.at(name)) << name;
}

TEST(Runner, ParallelJobsGiveTheSameBytes) {
    TempDir a, b;
    run_experiment(offline_config(a.path()));
    auto c = offline_config(b.path());
    c.jobs = 4;
    run_experiment(c);
    for (const char* f : {"report.json", "zephyr-like/answers.jsonl", "deepseek-like/verdicts.jsonl"}) {
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    }
}

TEST(Runner, ResumesFromManifest) {
    TempDir dir;
    run_experiment(offline_config(dir.path()));
    const auto before = read_file(dir / "report.json");

    std::vector<std::string> log;
    run_experiment(offline_config(dir.path()), {nullptr, &log});
    const auto count = [&](const std::string& needle) {
        return std::count_if(log.begin(), log.end(), [&](const std::string& l) { return l.find(needle) != std::string::npos; });
    };
    EXPECT_EQ(count("chunks up to date"), 2);
    EXPECT_EQ(count("index up to date"), 2);
    EXPECT_EQ(count("query outputs up to date"), 2);
    EXPECT_EQ(read_file(dir / "report.json"), before);

    // A tampered artifact invalidates its stage.
    testing_support::write_file(dir / "zephyr-like" / "answers.jsonl", "tampered\n");
    log.clear();
    run_experiment(offline_config(dir.path()), {nullptr, &log});
    EXPECT_EQ(count("query outputs up to date"), 1);
    EXPECT_EQ(read_file(dir / "report.json"), before);

    // A different seed reuses chunks but recomputes embeddings.
    auto c = offline_config(dir.path());
    c.seed = 8;
    log.clear();
    run_experiment(c, {nullptr, &log});
    EXPECT_EQ(count("chunks up to date"), 2);
    EXPECT_EQ(count("index up to date"), 0);
}

TEST(Runner, NetworkedRunAgainstFakeServices) {
    TempDir dir;
    auto services = fake_services();
    auto c = networked_config(dir.path());
    c.jobs = 3;
    const auto report = run_experiment(c, {services, nullptr});
    ASSERT_EQ(report.pipelines.size(), 2u);
    EXPECT_NEAR(report.find("zephyr-like")->hallucination_mean, 0.3, 1e-12);
    EXPECT_NEAR(report.find("deepseek-like")->hallucination_mean, 0.1, 1e-12);
    EXPECT_NEAR(report.find("deepseek-like")->answer_relevance_mean, 0.9, 1e-12);
    const auto j = json::parse(read_file(dir / "report.json"));
    EXPECT_EQ(j["directional_check"]["holds"], true);
    EXPECT_EQ(j["pipelines"]["zephyr-like"]["per_query"][0]["judge_id"], "llm:gpt-4");

    // With every stage up to date a rerun makes no remote calls at all.
    const auto calls = services->count();
    std::vector<std::string> log;
    run_experiment(c, {services, &log});
    EXPECT_EQ(services->count(), calls);
}

TEST(Runner, FailedProfileIsMarkedPartial) {
    TempDir dir;
    std::vector<std::string> log;
    const auto report = run_experiment(networked_config(dir.path()), {fake_services(true), &log});
    ASSERT_EQ(report.pipelines.size(), 1u);
    EXPECT_EQ(report.pipelines[0].name, "zephyr-like");
    EXPECT_TRUE(fs::exists(dir / "deepseek-like" / "PARTIAL"));
    EXPECT_FALSE(fs::exists(dir / "zephyr-like" / "PARTIAL"));
    const auto verdicts = read_file(dir / "deepseek-like" / "verdicts.jsonl");
    EXPECT_NE(verdicts.find("\"missing\":true"), std::string::npos);
    EXPECT_NE(verdicts.find("\"stage\":\"generate\""), std::string::npos);
}

TEST(Runner, UnjudgeableQueriesAreCountedMissing) {
    TempDir dir;
    testing_support::write_file(dir / "q.jsonl",
                                "{\"query_id\":\"a\",\"text\":\"How do schools screen children?\"}\n"
                                "{\"query_id\":\"b\",\"text\":\"unjudgeable-marker please\"}\n");
    auto c = networked_config(dir / "out");
    c.queries_file = dir / "q.jsonl";
    const auto report = run_experiment(c, {fake_services(), nullptr});
    for (const auto& p : report.pipelines) {
        EXPECT_EQ(p.n_queries, 1u);
        EXPECT_EQ(p.n_missing, 1u);
        EXPECT_EQ(p.missing_query_ids, std::vector<std::string>{"b"});
    }
    const auto j = json::parse(read_file(dir / "out" / "report.json"));
    EXPECT_EQ(j["pipelines"]["deepseek-like"]["n_missing"], 1);
}

TEST(Config, LoadsJsonWithRelativePathsAndOverrides) {
    TempDir dir;
    testing_support::write_file(dir / "cfg.json", R"({
        "corpus_dir": "docs", "queries_file": "q.jsonl", "offline": true, "seed": 3, "jobs": 2,
        "profiles": ["zephyr-like", {"base": "deepseek-like", "name": "deep-k3", "retrieval": {"k": 3}, "window": 6000}],
        "retry": {"max_retries": 1, "base_delay_ms": 5}
    })");
    const auto c = load_config(dir / "cfg.json");
    EXPECT_EQ(c.corpus_dir, dir / "docs");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.jobs, 2u);
    ASSERT_EQ(c.profiles.size(), 2u);
    EXPECT_EQ(c.profiles[1].name, "deep-k3");
    EXPECT_EQ(c.profiles[1].retrieval.k, 3u);
    EXPECT_EQ(c.profiles[1].retrieval.strategy, RetrievalStrategy::mmr);
    EXPECT_EQ(c.profiles[1].window, 6000u);
    EXPECT_EQ(c.retry.max_retries, 1);
    EXPECT_NO_THROW(c.validate());

    testing_support::write_file(dir / "bad.json", R"({"corpus_dir": "x"})");
    EXPECT_THROW(load_config(dir / "bad.json"), UsageError);
    testing_support::write_file(dir / "net.json", R"({"corpus_dir": "x", "queries_file": "q"})");
    EXPECT_THROW(load_config(dir / "net.json").validate(), UsageError);  // networked run needs a judge
}

TEST(Profiles, BuiltinsMatchTheComparedWorkflows) {
    const auto z = zephyr_like_profile();
    EXPECT_EQ(z.splitter, (SplitterParams{500, 50, SplitStrategy::recursive_fixed}));
    EXPECT_EQ(z.retrieval.strategy, RetrievalStrategy::topk);
    EXPECT_EQ(z.retrieval.k, 3u);
    EXPECT_EQ(z.window, 4000u);
    EXPECT_EQ(z.decoding.strategy, DecodingStrategy::greedy);
    EXPECT_EQ(z.decoding.temperature, 0.2);

    const auto d = deepseek_like_profile();
    EXPECT_EQ(d.splitter.strategy, SplitStrategy::markdown_header);
    EXPECT_EQ(d.retrieval.strategy, RetrievalStrategy::mmr);
    EXPECT_EQ(d.retrieval.k, 2u);
    EXPECT_EQ(d.retrieval.lambda, 0.5);
    EXPECT_EQ(d.retrieval.candidate_pool, 20u);
    EXPECT_EQ(d.window, 8000u);
    EXPECT_EQ(d.decoding.strategy, DecodingStrategy::nucleus);
    EXPECT_EQ(d.decoding.top_p, 0.9);
    EXPECT_EQ(d.decoding.temperature, 0.2);
    EXPECT_THROW(builtin_profile("llama-like"), UsageError);
}

TEST(Queries, Validation) {
    TempDir dir;
    testing_support::write_file(dir / "dup.jsonl", "{\"query_id\":\"a\",\"text\":\"x\"}\n{\"query_id\":\"a\",\"text\":\"y\"}\n");
    EXPECT_THROW(load_queries(dir / "dup.jsonl"), DataError);
    testing_support::write_file(dir / "empty.jsonl", "\n");
    EXPECT_THROW(load_queries(dir / "empty.jsonl"), DataError);
    EXPECT_EQ(load_queries(RAGBENCH_FIXTURES "/queries50.jsonl").size(), 50u);
}

#pragma once

#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ragbench/binary_io.hpp"
#include "ragbench/chunking.hpp"
#include "ragbench/corpus.hpp"
#include "ragbench/embedding.hpp"
#include "ragbench/error.hpp"
#include "ragbench/evaluation.hpp"
#include "ragbench/generation.hpp"
#include "ragbench/hash.hpp"
#include "ragbench/retrieval.hpp"
#include "ragbench/vector_index.hpp"

namespace ragbench {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Profiles

struct PipelineProfile {
    std::string name;
    SplitterParams splitter;
    EmbedderSpec embedder;
    RetrievalParams retrieval;
    std::size_t window = 4000;
    DecodingParams decoding;
    EndpointSpec backend;

    void validate() const {
        if (name.empty()) throw UsageError("profile needs a name");
        if (name.find_first_of("/\\") != std::string::npos || name == "." || name == "..") {
            throw UsageError("profile name '" + name + "' is not a valid directory name");
        }
        splitter.validate();
        retrieval.validate();
        decoding.validate();
        if (window <= decoding.max_output_tokens) throw UsageError("window must exceed max_output_tokens");
    }
};

/// Fixed-size windows, plain top-k, 4k window, greedy decoding.
inline PipelineProfile zephyr_like_profile() {
    PipelineProfile p;
    p.name = "zephyr-like";
    p.splitter = {500, 50, SplitStrategy::recursive_fixed};
    p.embedder.provider = EmbedProvider::remote;
    p.embedder.model_name = "sentence-transformers/all-MiniLM-L6-v2";
    p.embedder.endpoint_url =
        "https://api-inference.huggingface.co/pipeline/feature-extraction/sentence-transformers/all-MiniLM-L6-v2";
    p.embedder.dialect = EmbedDialect::hf;
    p.embedder.dimension = 0;
    p.retrieval = {RetrievalStrategy::topk, 3, 0.5, 20};
    p.window = 4000;
    p.decoding = {0.2, DecodingStrategy::greedy, 0.9, 512};
    p.backend = {"https://api-inference.huggingface.co/models/HuggingFaceH4/zephyr-7b-beta", GenDialect::hf,
                 "HuggingFaceH4/zephyr-7b-beta"};
    return p;
}

/// Header-aware sections, MMR k=2 lambda=0.5, 8k window, nucleus p=0.9.
inline PipelineProfile deepseek_like_profile() {
    PipelineProfile p;
    p.name = "deepseek-like";
    p.splitter = {500, 50, SplitStrategy::markdown_header};
    p.embedder.provider = EmbedProvider::remote;
    p.embedder.model_name = "nomic-embed-text";
    p.embedder.endpoint_url = "http://localhost:11434/api/embed";
    p.embedder.dialect = EmbedDialect::ollama;
    p.embedder.dimension = 0;
    p.retrieval = {RetrievalStrategy::mmr, 2, 0.5, 20};
    p.window = 8000;
    p.decoding = {0.2, DecodingStrategy::nucleus, 0.9, 512};
    p.backend = {"http://localhost:11434/api/generate", GenDialect::ollama, "deepseek-r1:7b"};
    return p;
}

inline std::vector<PipelineProfile> builtin_profiles() { return {zephyr_like_profile(), deepseek_like_profile()}; }

inline PipelineProfile builtin_profile(std::string_view name) {
    for (auto& p : builtin_profiles()) {
        if (p.name == name) return p;
    }
    throw UsageError("unknown profile '" + std::string(name) + "' (built-ins: zephyr-like, deepseek-like)");
}

inline ordered_json profile_to_json(const PipelineProfile& p) {
    return ordered_json{
        {"name", p.name},
        {"splitter",
         {{"strategy", to_string(p.splitter.strategy)}, {"chunk_size", p.splitter.chunk_size}, {"overlap", p.splitter.overlap}}},
        {"embedder",
         {{"provider", to_string(p.embedder.provider)},
          {"model_name", p.embedder.model_name},
          {"endpoint_url", p.embedder.endpoint_url},
          {"dialect", to_string(p.embedder.dialect)},
          {"dimension", p.embedder.dimension},
          {"seed", p.embedder.seed}}},
        {"retrieval",
         {{"strategy", to_string(p.retrieval.strategy)},
          {"k", p.retrieval.k},
          {"lambda", p.retrieval.lambda},
          {"candidate_pool", p.retrieval.candidate_pool}}},
        {"window", p.window},
        {"decoding",
         {{"temperature", p.decoding.temperature},
          {"strategy", to_string(p.decoding.strategy)},
          {"top_p", p.decoding.top_p},
          {"max_output_tokens", p.decoding.max_output_tokens}}},
        {"backend", {{"url", p.backend.url}, {"dialect", to_string(p.backend.dialect)}, {"model", p.backend.model}}}};
}

inline EndpointSpec endpoint_from_json(const json& j, EndpointSpec base = {}) {
    if (j.contains("url")) base.url = j.at("url").get<std::string>();
    if (j.contains("dialect")) base.dialect = parse_gen_dialect(j.at("dialect").get<std::string>());
    if (j.contains("model")) base.model = j.at("model").get<std::string>();
    return base;
}

/// A profile entry is either a built-in name or an object with an optional
/// "base" built-in plus field overrides.
inline PipelineProfile profile_from_json(const json& j) {
    if (j.is_string()) return builtin_profile(j.get<std::string>());
    if (!j.is_object()) throw UsageError("profile entries must be names or objects");
    PipelineProfile p = j.contains("base") ? builtin_profile(j.at("base").get<std::string>()) : PipelineProfile{};
    if (j.contains("name")) p.name = j.at("name").get<std::string>();
    if (const auto it = j.find("splitter"); it != j.end()) {
        if (it->contains("strategy")) p.splitter.strategy = parse_split_strategy(it->at("strategy").get<std::string>());
        p.splitter.chunk_size = it->value("chunk_size", p.splitter.chunk_size);
        p.splitter.overlap = it->value("overlap", p.splitter.overlap);
    }
    if (const auto it = j.find("embedder"); it != j.end()) {
        if (it->contains("provider")) p.embedder.provider = parse_embed_provider(it->at("provider").get<std::string>());
        if (it->contains("dialect")) p.embedder.dialect = parse_embed_dialect(it->at("dialect").get<std::string>());
        p.embedder.model_name = it->value("model_name", p.embedder.model_name);
        p.embedder.endpoint_url = it->value("endpoint_url", p.embedder.endpoint_url);
        p.embedder.dimension = it->value("dimension", p.embedder.dimension);
        p.embedder.seed = it->value("seed", p.embedder.seed);
    }
    if (const auto it = j.find("retrieval"); it != j.end()) {
        if (it->contains("strategy")) p.retrieval.strategy = parse_retrieval_strategy(it->at("strategy").get<std::string>());
        p.retrieval.k = it->value("k", p.retrieval.k);
        p.retrieval.lambda = it->value("lambda", p.retrieval.lambda);
        p.retrieval.candidate_pool = it->value("candidate_pool", p.retrieval.candidate_pool);
    }
    p.window = j.value("window", p.window);
    if (const auto it = j.find("decoding"); it != j.end()) {
        if (it->contains("strategy")) p.decoding.strategy = parse_decoding_strategy(it->at("strategy").get<std::string>());
        p.decoding.temperature = it->value("temperature", p.decoding.temperature);
        p.decoding.top_p = it->value("top_p", p.decoding.top_p);
        p.decoding.max_output_tokens = it->value("max_output_tokens", p.decoding.max_output_tokens);
    }
    if (const auto it = j.find("backend"); it != j.end()) p.backend = endpoint_from_json(*it, p.backend);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Configuration and queries

struct Query {
    std::string query_id;
    std::string text;
};

/// JSON Lines `{"query_id","text"}`; ids must be unique and the set non-empty.
inline std::vector<Query> load_queries(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open queries file " + path.string());
    std::vector<Query> out;
    std::set<std::string> seen;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (collapse_whitespace(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            Query q{j.at("query_id").get<std::string>(), j.at("text").get<std::string>()};
            if (q.query_id.empty()) throw DataError("empty query_id");
            if (!seen.insert(q.query_id).second) throw DataError("duplicate query_id '" + q.query_id + "'");
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("queries file " + path.string() + " has no queries");
    return out;
}

struct ExperimentConfig {
    fs::path corpus_dir;
    fs::path queries_file;
    std::vector<PipelineProfile> profiles = builtin_profiles();
    std::uint64_t seed = 0;
    bool offline = false;
    fs::path output_dir = "ragbench-out";
    std::optional<fs::path> cache_dir;  ///< defaults to output_dir/cache
    std::size_t jobs = 1;
    std::optional<EndpointSpec> judge;  ///< required when not offline
    std::uint32_t stub_dimension = 256;
    RetryPolicy retry;

    void validate() const {
        if (corpus_dir.empty()) throw UsageError("config needs corpus_dir");
        if (queries_file.empty()) throw UsageError("config needs queries_file");
        if (profiles.empty()) throw UsageError("config needs at least one profile");
        std::set<std::string> names;
        for (const auto& p : profiles) {
            p.validate();
            if (!names.insert(p.name).second) throw UsageError("duplicate profile name '" + p.name + "'");
        }
        if (jobs < 1) throw UsageError("jobs must be >= 1");
        if (!offline && (!judge || judge->url.empty())) throw UsageError("networked runs need a judge endpoint");
    }
};

/// Paths in the file are relative to the file's directory.
inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
    const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    ExperimentConfig c;
    try {
        c.corpus_dir = resolve(j.at("corpus_dir").get<std::string>());
        c.queries_file = resolve(j.at("queries_file").get<std::string>());
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("cache_dir")) c.cache_dir = resolve(j.at("cache_dir").get<std::string>());
        c.seed = j.value("seed", c.seed);
        c.offline = j.value("offline", c.offline);
        c.jobs = j.value("jobs", c.jobs);
        c.stub_dimension = j.value("stub_dimension", c.stub_dimension);
        if (j.contains("profiles")) {
            c.profiles.clear();
            for (const auto& p : j.at("profiles")) c.profiles.push_back(profile_from_json(p));
        }
        if (j.contains("judge")) c.judge = endpoint_from_json(j.at("judge"), {"", GenDialect::openai_chat, "gpt-4"});
        if (j.contains("retry")) {
            c.retry.max_retries = j.at("retry").value("max_retries", c.retry.max_retries);
            c.retry.base_delay = std::chrono::milliseconds(
                j.at("retry").value("base_delay_ms", static_cast<long>(c.retry.base_delay.count())));
        }
    } catch (const json::exception& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// Stage helpers, shared with the CLI

/// Offline runs swap the remote embedder for the seeded stub.
inline EmbedderSpec effective_embedder(const PipelineProfile& p, bool offline, std::uint64_t seed,
                                       std::uint32_t stub_dimension = 256) {
    EmbedderSpec s = p.embedder;
    if (offline || s.provider == EmbedProvider::stub) {
        s.provider = EmbedProvider::stub;
        s.seed = offline ? seed : s.seed;
        if (s.dimension < 2) s.dimension = stub_dimension;
    }
    return s;
}

inline fs::path cache_file_for(const fs::path& cache_dir, const EmbedderSpec& spec) {
    std::string safe;
    for (char c : spec.cache_identity()) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    if (safe.size() > 60) safe.resize(60);
    return cache_dir / (safe + "-" + sha256_hex(spec.cache_identity()).substr(0, 12) + ".rgemb");
}

inline ordered_json chunk_to_json(const Chunk& c) {
    return ordered_json{{"chunk_id", c.chunk_id},
                        {"doc_id", c.doc_id},
                        {"header_path", c.header_path},
                        {"span", {c.span_start, c.span_end}},
                        {"token_count", c.token_count},
                        {"text", c.text}};
}

inline Chunk chunk_from_json(const json& j) {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.header_path = j.at("header_path").get<std::vector<std::string>>();
    c.span_start = j.at("span").at(0).get<std::size_t>();
    c.span_end = j.at("span").at(1).get<std::size_t>();
    c.token_count = j.at("token_count").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    return c;
}

inline std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) out += chunk_to_json(c).dump() + "\n";
    return out;
}

inline std::vector<Chunk> chunks_from_jsonl(std::string_view text) {
    std::vector<Chunk> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(chunk_from_json(json::parse(line)));
    }
    return out;
}

/// Embed every chunk's retrieval text and build the flat index.
inline Index build_chunk_index(const std::vector<Chunk>& chunks, Embedder& embedder) {
    if (chunks.empty()) throw DataError("no chunks to index");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.retrieval_text());
    const auto vectors = embedder.embed_batch(texts);
    std::vector<IndexEntry<float>> entries;
    entries.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) entries.push_back({chunks[i].chunk_id, vectors[i].values});
    return build_index(entries);
}

inline ordered_json retrieval_to_json(const RetrievalResult& r) {
    auto sel_json = [](const Selection& s) {
        return ordered_json{{"chunk_id", s.chunk_id}, {"query_similarity", s.query_similarity}, {"selection_score", s.selection_score}};
    };
    ordered_json selected = ordered_json::array();
    for (const auto& s : r.selected) selected.push_back(sel_json(s));
    ordered_json out{{"strategy", to_string(r.strategy_used)}, {"selected", selected}};
    if (!r.rounds.empty()) {
        ordered_json rounds = ordered_json::array();
        for (const auto& round : r.rounds) {
            ordered_json cands = ordered_json::array();
            for (const auto& c : round.candidates) cands.push_back(sel_json(c));
            rounds.push_back(cands);
        }
        out["mmr_rounds"] = rounds;
    }
    if (!r.warnings.empty()) out["warnings"] = r.warnings;
    return out;
}

// ---------------------------------------------------------------------------
// Run manifest

inline ordered_json host_info() {
    ordered_json h;
    char name[256] = {};
    if (gethostname(name, sizeof name - 1) == 0) h["hostname"] = name;
    struct utsname u {};
    if (uname(&u) == 0) {
        h["os"] = std::string(u.sysname) + " " + u.release;
        h["machine"] = u.machine;
    }
    h["hardware_threads"] = std::thread::hardware_concurrency();
    return h;
}

/// Per profile and stage: an input fingerprint plus the sha256 of every file
/// the stage wrote. A stage is reusable when both still match.
class Manifest {
public:
    explicit Manifest(fs::path root) : root_(std::move(root)) {
        const auto p = root_ / "manifest.json";
        if (fs::exists(p)) {
            auto parsed = json::parse(binio::read_file(p), nullptr, false);
            if (!parsed.is_discarded() && parsed.is_object()) doc_ = std::move(parsed);
        }
        doc_["host"] = host_info();
    }

    bool stage_valid(const std::string& profile, const std::string& stage, const std::string& fingerprint) const {
        const auto* s = find_stage(profile, stage);
        if (!s || s->value("fingerprint", "") != fingerprint) return false;
        for (const auto& [file, digest] : s->at("files").items()) {
            const auto path = root_ / profile / file;
            if (!fs::exists(path) || sha256_hex(binio::read_file(path)) != digest.get<std::string>()) return false;
        }
        return true;
    }

    void record_stage(const std::string& profile, const std::string& stage, const std::string& fingerprint,
                      const std::vector<std::string>& files) {
        json entry{{"fingerprint", fingerprint}, {"files", json::object()}};
        for (const auto& f : files) entry["files"][f] = sha256_hex(binio::read_file(root_ / profile / f));
        doc_["profiles"][profile][stage] = entry;
        save();
    }

    void invalidate_profile(const std::string& profile) {
        if (doc_.contains("profiles")) doc_["profiles"].erase(profile);
        save();
    }

    void record_report(const std::vector<std::string>& files) {
        json entry = json::object();
        for (const auto& f : files) entry[f] = sha256_hex(binio::read_file(root_ / f));
        doc_["report"] = entry;
        save();
    }

    void save() const { binio::write_file_atomic(root_ / "manifest.json", doc_.dump(2) + "\n"); }

private:
    const json* find_stage(const std::string& profile, const std::string& stage) const {
        const auto p = doc_.find("profiles");
        if (p == doc_.end()) return nullptr;
        const auto q = p->find(profile);
        if (q == p->end()) return nullptr;
        const auto s = q->find(stage);
        if (s == q->end() || !s->contains("files")) return nullptr;
        return &*s;
    }

    fs::path root_;
    json doc_ = json::object();  // std::map keys: deterministic dump
};

// ---------------------------------------------------------------------------
// Experiment

/// Injection points for tests and embedding hosts.
struct RunEnvironment {
    std::shared_ptr<HttpTransport> transport;  ///< null: real HTTP
    std::vector<std::string>* log = nullptr;   ///< receives progress and warnings
};

namespace detail {

inline void write_text(const fs::path& p, std::string_view s) { binio::write_file_atomic(p, s); }

inline std::string fingerprint(std::initializer_list<std::string_view> parts) {
    Sha256 h;
    for (auto p : parts) h.update(p).update(std::string_view("\0", 1));
    return h.hex();
}

/// Bounds concurrent calls to one endpoint.
class LimitedBackend final : public LlmBackend {
public:
    LimitedBackend(std::unique_ptr<LlmBackend> inner, std::ptrdiff_t slots) : inner_(std::move(inner)), slots_(slots) {}
    std::string id() const override { return inner_->id(); }
    GenerationResponse complete(const PromptBundle& b, const DecodingParams& d) override {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};
        return inner_->complete(b, d);
    }

private:
    std::unique_ptr<LlmBackend> inner_;
    std::counting_semaphore<> slots_;
};

struct QueryOutcome {
    ordered_json retrieval;
    ordered_json prompt;
    ordered_json answer;
    ordered_json verdict;
    std::optional<JudgeVerdict> judged;
    std::optional<ProviderError> provider_failure;
};

}  // namespace detail

class ExperimentRunner {
public:
    ExperimentRunner(ExperimentConfig config, RunEnvironment env = {}) : config_(std::move(config)), env_(std::move(env)) {
        config_.validate();
    }

    MetricsReport run() {
        fs::create_directories(config_.output_dir);
        const auto corpus = ingest_dir(config_.corpus_dir);
        for (const auto& line : corpus.ingest_log) log(line);
        for (const auto& w : corpus.warnings) log("warning: " + w);
        if (corpus.documents.empty()) throw DataError("corpus " + config_.corpus_dir.string() + " is empty");
        const auto queries = load_queries(config_.queries_file);
        const auto queries_hash = sha256_hex(binio::read_file(config_.queries_file));

        Manifest manifest(config_.output_dir);
        std::vector<PipelineVerdicts> verdicts;
        std::unique_ptr<Error> first_error_obj;
        for (const auto& profile : config_.profiles) {
            const auto dir = config_.output_dir / profile.name;
            fs::create_directories(dir);
            try {
                verdicts.push_back(run_profile(profile, corpus, queries, queries_hash, manifest));
                fs::remove(dir / "PARTIAL");
            } catch (const Error& e) {
                log("profile " + profile.name + " aborted: " + e.what());
                detail::write_text(dir / "PARTIAL", std::string(e.what()) + "\n");
                manifest.invalidate_profile(profile.name);
                if (!first_error_obj) first_error_obj = clone_error(e);
            }
        }
        if (verdicts.empty()) {
            if (first_error_obj) rethrow(*first_error_obj);
            throw DataError("no profile completed");
        }

        auto report = aggregate(verdicts);
        detail::write_text(config_.output_dir / "report.txt", render_table(report));
        detail::write_text(config_.output_dir / "report.csv", render_csv(report));
        detail::write_text(config_.output_dir / "report.json", report_to_json(report).dump(2) + "\n");
        manifest.record_report({"report.txt", "report.csv", "report.json"});
        return report;
    }

private:
    void log(const std::string& msg) const {
        std::lock_guard lock(log_mu_);
        if (env_.log) env_.log->push_back(msg);
    }

    static std::unique_ptr<Error> clone_error(const Error& e) {
        if (const auto* p = dynamic_cast<const ProviderError*>(&e)) return std::make_unique<ProviderError>(*p);
        if (dynamic_cast<const UsageError*>(&e)) return std::make_unique<UsageError>(e.what());
        return std::make_unique<DataError>(e.what());
    }
    [[noreturn]] static void rethrow(const Error& e) {
        if (const auto* p = dynamic_cast<const ProviderError*>(&e)) throw *p;
        if (dynamic_cast<const UsageError*>(&e)) throw UsageError(e.what());
        throw DataError(e.what());
    }

    std::unique_ptr<LlmBackend> make_backend(const PipelineProfile& p) const {
        if (config_.offline) return std::make_unique<StubBackend>(config_.seed);
        return std::make_unique<detail::LimitedBackend>(
            std::make_unique<RemoteBackend>(p.backend, env_.transport, config_.retry), 2);
    }

    std::unique_ptr<Judge> make_judge() const {
        if (config_.offline) return std::make_unique<OracleJudge>();
        return std::make_unique<LlmJudge>(*config_.judge, env_.transport, config_.retry);
    }

    PipelineVerdicts run_profile(const PipelineProfile& profile, const Corpus& corpus, const std::vector<Query>& queries,
                                 const std::string& queries_hash, Manifest& manifest) {
        const auto dir = config_.output_dir / profile.name;
        const auto pjson = profile_to_json(profile).dump();
        const auto espec = effective_embedder(profile, config_.offline, config_.seed, config_.stub_dimension);

        // chunk
        const auto chunk_fp =
            detail::fingerprint({"chunks", corpus.fingerprint(), profile_to_json(profile)["splitter"].dump()});
        std::vector<Chunk> chunks;
        if (manifest.stage_valid(profile.name, "chunks", chunk_fp)) {
            log(profile.name + ": chunks up to date");
            chunks = chunks_from_jsonl(binio::read_file(dir / "chunks.jsonl"));
        } else {
            std::vector<std::string> warnings;
            chunks = split_corpus(corpus, profile.splitter, &warnings);
            for (const auto& w : warnings) log("warning: " + w);
            detail::write_text(dir / "chunks.jsonl", chunks_to_jsonl(chunks));
            manifest.record_stage(profile.name, "chunks", chunk_fp, {"chunks.jsonl"});
        }
        if (chunks.empty()) throw DataError("profile " + profile.name + " produced no chunks");

        // embed + index
        const auto cache_dir = config_.cache_dir.value_or(config_.output_dir / "cache");
        fs::create_directories(cache_dir);
        auto cache = std::make_shared<EmbeddingCache>(cache_file_for(cache_dir, espec));
        Embedder embedder(espec, cache, env_.transport, config_.retry);
        const auto index_fp = detail::fingerprint({"index", chunk_fp, espec.cache_identity(), to_string(espec.provider)});
        Index index;
        if (manifest.stage_valid(profile.name, "index", index_fp)) {
            log(profile.name + ": index up to date");
            index = Index::load(dir / "index.rgidx");
        } else {
            index = build_chunk_index(chunks, embedder);
            index.save(dir / "index.rgidx");
            manifest.record_stage(profile.name, "index", index_fp, {"index.rgidx"});
        }

        // retrieve, generate, judge
        auto backend = make_backend(profile);
        auto judge = make_judge();
        const auto query_fp = detail::fingerprint({"queries", index_fp, queries_hash, pjson, backend->id(), judge->id(),
                                                   std::to_string(config_.seed)});
        const std::vector<std::string> query_files{"retrievals.jsonl", "prompts.jsonl", "answers.jsonl", "verdicts.jsonl"};
        if (manifest.stage_valid(profile.name, "queries", query_fp)) {
            log(profile.name + ": query outputs up to date");
            return load_verdicts(profile.name, dir / "verdicts.jsonl");
        }

        const ChunkStore store(chunks);
        std::vector<std::string> query_texts;
        for (const auto& q : queries) query_texts.push_back(q.text);
        const auto query_vectors = embedder.embed_batch(query_texts);

        std::vector<detail::QueryOutcome> outcomes(queries.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < queries.size(); i = next++) {
                outcomes[i] = run_query(profile, queries[i], query_vectors[i], index, store, *backend, *judge);
            }
        };
        const auto jobs = std::min(config_.jobs, queries.size());
        if (jobs <= 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        }

        std::string retrievals, prompts, answers, verdict_lines;
        PipelineVerdicts pv;
        pv.name = profile.name;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            auto& o = outcomes[i];
            if (!o.retrieval.is_null()) retrievals += o.retrieval.dump() + "\n";
            if (!o.prompt.is_null()) prompts += o.prompt.dump() + "\n";
            if (!o.answer.is_null()) answers += o.answer.dump() + "\n";
            verdict_lines += o.verdict.dump() + "\n";
            if (o.judged) pv.verdicts.push_back(*o.judged);
            else pv.missing_query_ids.push_back(queries[i].query_id);
        }
        detail::write_text(dir / "retrievals.jsonl", retrievals);
        detail::write_text(dir / "prompts.jsonl", prompts);
        detail::write_text(dir / "answers.jsonl", answers);
        detail::write_text(dir / "verdicts.jsonl", verdict_lines);
        if (pv.verdicts.empty()) {
            const std::string msg = "profile " + profile.name + ": every query failed or was unjudgeable";
            for (const auto& o : outcomes) {
                if (o.provider_failure) throw ProviderError(msg + " (" + o.provider_failure->what() + ")", o.provider_failure->status());
            }
            throw DataError(msg);
        }
        manifest.record_stage(profile.name, "queries", query_fp, query_files);
        return pv;
    }

    detail::QueryOutcome run_query(const PipelineProfile& profile, const Query& q, const EmbeddingVector& qv,
                                   const Index& index, const ChunkStore& store, LlmBackend& backend, Judge& judge) const {
        detail::QueryOutcome o;
        const auto fail = [&](const std::string& stage, const std::exception& e) {
            log(profile.name + ": query " + q.query_id + " " + stage + " failed: " + e.what());
            if (const auto* p = dynamic_cast<const ProviderError*>(&e)) o.provider_failure = *p;
            o.verdict = ordered_json{{"query_id", q.query_id}, {"missing", true}, {"stage", stage}, {"error", e.what()}};
            return o;
        };
        RetrievalResult retrieved;
        PromptBundle bundle;
        try {
            retrieved = retrieve(index, std::span<const float>(qv.values), profile.retrieval);
            o.retrieval = retrieval_to_json(retrieved);
            o.retrieval["query_id"] = q.query_id;
            bundle = assemble_prompt(q.text, retrieved, store, profile.window, profile.decoding);
            ordered_json blocks = ordered_json::array();
            for (const auto& b : bundle.context_blocks) blocks.push_back({{"chunk_id", b.chunk_id}, {"text", b.text}});
            o.prompt = ordered_json{{"query_id", q.query_id},
                                    {"window", bundle.window},
                                    {"max_output_tokens", bundle.max_output_tokens},
                                    {"total_prompt_tokens", bundle.total_prompt_tokens},
                                    {"context_blocks", blocks},
                                    {"prompt", bundle.render()}};
        } catch (const Error& e) {
            return fail("retrieve", e);
        }
        GenerationResponse response;
        try {
            response = generate(backend, bundle, profile.decoding);
            o.answer = ordered_json{{"query_id", q.query_id},
                                    {"backend_id", response.backend_id},
                                    {"answer", response.answer},
                                    {"prompt_tokens", response.prompt_tokens},
                                    {"output_tokens", response.output_tokens},
                                    {"decoding", decoding_view(response.request)}};
        } catch (const Error& e) {
            o.answer = ordered_json{{"query_id", q.query_id}, {"error", e.what()}};
            return fail("generate", e);
        }
        try {
            auto v = judge.judge(q.query_id, q.text, bundle.context_blocks, response.answer);
            for (const auto& w : v.warnings) log(profile.name + ": query " + q.query_id + ": " + w);
            o.verdict = verdict_to_json(v);
            o.judged = std::move(v);
        } catch (const Error& e) {
            return fail("judge", e);
        }
        return o;
    }

    PipelineVerdicts load_verdicts(const std::string& name, const fs::path& file) const {
        PipelineVerdicts pv;
        pv.name = name;
        std::istringstream in(binio::read_file(file));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line);
            if (j.value("missing", false)) pv.missing_query_ids.push_back(j.at("query_id").get<std::string>());
            else pv.verdicts.push_back(verdict_from_json(j));
        }
        return pv;
    }

    ExperimentConfig config_;
    RunEnvironment env_;
    mutable std::mutex log_mu_;
};

inline MetricsReport run_experiment(const ExperimentConfig& config, RunEnvironment env = {}) {
    return ExperimentRunner(config, std::move(env)).run();
}

enum class ReportFormat { json, table, csv };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "table") return ReportFormat::table;
    if (s == "csv") return ReportFormat::csv;
    throw UsageError("unknown report format '" + std::string(s) + "'");
}

inline std::string emit_report(const MetricsReport& report, ReportFormat format) {
    if (report.pipelines.empty()) throw DataError("empty report");
    switch (format) {
        case ReportFormat::table: return render_table(report);
        case ReportFormat::csv: return render_csv(report);
        case ReportFormat::json:
        default: return report_to_json(report).dump(2) + "\n";
    }
}

inline std::string emit_report(const MetricsReport& report, std::string_view format) {
    return emit_report(report, parse_report_format(format));
}

}  // namespace ragbench

// ragbench: command-line front end for the comparative RAG harness.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ragbench/ragbench.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ragbench;

struct CommonOpts {
    std::string corpus;
    std::string config;
    std::string profile;
    bool offline = false;
    std::optional<std::uint64_t> seed;
    std::string cache_dir;
};

struct Resolved {
    PipelineProfile profile;
    fs::path corpus_dir;
    bool offline = false;
    std::uint64_t seed = 0;
    std::uint32_t stub_dimension = 256;
    std::optional<fs::path> cache_dir;
};

Resolved resolve(const CommonOpts& o, bool need_corpus) {
    Resolved r;
    std::optional<ExperimentConfig> cfg;
    if (!o.config.empty()) cfg = load_config(o.config);
    r.profile = builtin_profile("zephyr-like");
    bool found = false;
    if (cfg) {
        for (const auto& p : cfg->profiles) {
            if (p.name == o.profile) {
                r.profile = p;
                found = true;
            }
        }
        r.corpus_dir = cfg->corpus_dir;
        r.offline = cfg->offline;
        r.seed = cfg->seed;
        r.stub_dimension = cfg->stub_dimension;
        r.cache_dir = cfg->cache_dir;
    }
    if (!found) r.profile = builtin_profile(o.profile);
    if (!o.corpus.empty()) r.corpus_dir = o.corpus;
    if (o.offline) r.offline = true;
    if (o.seed) r.seed = *o.seed;
    if (!o.cache_dir.empty()) r.cache_dir = fs::path(o.cache_dir);
    if (need_corpus && r.corpus_dir.empty()) throw UsageError("pass --corpus DIR or --config FILE");
    return r;
}

Corpus load_corpus(const fs::path& dir) {
    auto corpus = ingest_dir(dir);
    for (const auto& line : corpus.ingest_log) std::cerr << line << "\n";
    for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
    return corpus;
}

std::vector<Chunk> chunk_for(const Resolved& r, const Corpus& corpus) {
    std::vector<std::string> warnings;
    auto chunks = split_corpus(corpus, r.profile.splitter, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return chunks;
}

Embedder embedder_for(const Resolved& r) {
    const auto spec = effective_embedder(r.profile, r.offline, r.seed, r.stub_dimension);
    std::shared_ptr<EmbeddingCache> cache;
    if (r.cache_dir) {
        fs::create_directories(*r.cache_dir);
        cache = std::make_shared<EmbeddingCache>(cache_file_for(*r.cache_dir, spec));
    }
    return Embedder(spec, cache);
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_embedding) {
    cmd->add_option("--profile", o.profile, "Pipeline profile (zephyr-like, deepseek-like, or a name from --config)")
        ->required();
    cmd->add_option("--corpus", o.corpus, "Directory of .txt/.md documents");
    cmd->add_option("--config", o.config, "Experiment config file (JSON)");
    if (with_embedding) {
        cmd->add_flag("--offline", o.offline, "Use the deterministic stub embedder");
        cmd->add_option("--seed", o.seed, "Seed for offline providers");
        cmd->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ragbench - comparative RAG pipelines with LLM-as-judge scoring"};
    app.require_subcommand(1);

    // ingest
    std::string ingest_corpus, ingest_format;
    auto* ingest = app.add_subcommand("ingest", "Load a corpus directory and list its documents");
    ingest->add_option("--corpus", ingest_corpus, "Directory of .txt/.md documents")->required();
    ingest->add_option("--format", ingest_format, "Force format: plain or markdown");

    // chunk
    CommonOpts chunk_opts;
    auto* chunk = app.add_subcommand("chunk", "Split the corpus and print chunks as JSON Lines");
    add_common(chunk, chunk_opts, false);

    // index
    CommonOpts index_opts;
    std::string index_out;
    auto* index = app.add_subcommand("index", "Embed chunks and write a flat index file");
    add_common(index, index_opts, true);
    index->add_option("--out", index_out, "Index file to write")->required();

    // query
    CommonOpts query_opts;
    std::string query_text, query_index;
    auto* query = app.add_subcommand("query", "Retrieve context for one query and print the selection");
    add_common(query, query_opts, true);
    query->add_option("--text", query_text, "Query text")->required();
    query->add_option("--index", query_index, "Index file written by 'index' (otherwise built on the fly)");

    // run
    std::string run_config, run_out;
    bool run_offline = false;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::size_t> run_jobs;
    auto* run = app.add_subcommand("run", "Run a full experiment and write all artifacts plus the report");
    run->add_option("--config", run_config, "Experiment config file (JSON)")->required();
    run->add_flag("--offline", run_offline, "Stub embedder, stub generator and lexical oracle judge");
    run->add_option("--seed", run_seed, "Seed for offline providers");
    run->add_option("--jobs", run_jobs, "Queries processed in parallel");
    run->add_option("--out", run_out, "Output directory (overrides the config)");

    // report
    std::string report_in, report_format = "table";
    auto* report = app.add_subcommand("report", "Render a report.json");
    report->add_option("--in", report_in, "report.json written by 'run'")->required();
    report->add_option("--format", report_format, "table, csv or json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (*ingest) {
            std::optional<DocFormat> hint;
            if (!ingest_format.empty()) hint = parse_doc_format(ingest_format);
            auto corpus = ingest_dir(ingest_corpus, hint);
            for (const auto& line : corpus.ingest_log) std::cerr << line << "\n";
            for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
            for (const auto& d : corpus.documents) {
                std::cout << ordered_json{{"doc_id", d.doc_id},
                                          {"source_path", d.source_path},
                                          {"format", to_string(d.format)},
                                          {"token_count", count_tokens(d.body)},
                                          {"bytes", d.body.size()}}
                                 .dump()
                          << "\n";
            }
        } else if (*chunk) {
            const auto r = resolve(chunk_opts, true);
            std::cout << chunks_to_jsonl(chunk_for(r, load_corpus(r.corpus_dir)));
        } else if (*index) {
            const auto r = resolve(index_opts, true);
            const auto chunks = chunk_for(r, load_corpus(r.corpus_dir));
            auto embedder = embedder_for(r);
            const auto idx = build_chunk_index(chunks, embedder);
            idx.save(index_out);
            std::cout << ordered_json{{"profile", r.profile.name},
                                      {"entries", idx.size()},
                                      {"dimension", idx.dimension()},
                                      {"path", index_out}}
                             .dump()
                      << "\n";
        } else if (*query) {
            const auto r = resolve(query_opts, query_index.empty());
            auto embedder = embedder_for(r);
            Index idx;
            if (!query_index.empty()) {
                idx = Index::load(query_index);
            } else {
                idx = build_chunk_index(chunk_for(r, load_corpus(r.corpus_dir)), embedder);
            }
            const auto qv = embedder.embed(query_text);
            auto result = retrieve(idx, std::span<const float>(qv.values), r.profile.retrieval);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
            auto out = retrieval_to_json(result);
            out["profile"] = r.profile.name;
            out["query"] = query_text;
            std::cout << out.dump(2) << "\n";
        } else if (*run) {
            auto cfg = load_config(run_config);
            if (run_offline) cfg.offline = true;
            if (run_seed) cfg.seed = *run_seed;
            if (run_jobs) cfg.jobs = *run_jobs;
            if (!run_out.empty()) cfg.output_dir = run_out;
            std::vector<std::string> log;
            MetricsReport result;
            try {
                result = run_experiment(cfg, RunEnvironment{nullptr, &log});
            } catch (...) {
                for (const auto& line : log) std::cerr << line << "\n";
                throw;
            }
            for (const auto& line : log) std::cerr << line << "\n";
            std::cout << render_table(result);
            std::cerr << "artifacts written to " << cfg.output_dir.string() << "\n";
        } else if (*report) {
            const auto j = ordered_json::parse(binio::read_file(report_in), nullptr, false);
            if (j.is_discarded()) throw DataError(report_in + " is not valid JSON");
            std::cout << emit_report(report_from_json(j), report_format);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    }
    return 0;
}

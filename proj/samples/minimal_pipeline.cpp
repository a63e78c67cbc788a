// Offline walk through one query: split, embed, retrieve, prompt, answer, judge.
//
//   minimal_pipeline [corpus_dir] ["question"]

#include <iostream>

#include "ragbench/ragbench.hpp"

int main(int argc, char** argv) {
    using namespace ragbench;
    const std::string dir = argc > 1 ? argv[1] : "fixtures/corpus";
    const std::string question = argc > 2 ? argv[2] : "How do schools support refugee children?";

    try {
        const auto corpus = ingest_dir(dir);
        for (const auto& profile : builtin_profiles()) {
            const auto chunks = split_corpus(corpus, profile.splitter, nullptr);
            Embedder embedder(effective_embedder(profile, /*offline=*/true, 7));
            const auto index = build_chunk_index(chunks, embedder);

            const auto qv = embedder.embed(question);
            const auto picked = retrieve(index, std::span<const float>(qv.values), profile.retrieval);
            const auto prompt = assemble_prompt(question, picked, ChunkStore(chunks), profile.window, profile.decoding);

            StubBackend backend(7);
            const auto answer = generate(backend, prompt, profile.decoding);
            const auto verdict = judge_oracle(question, prompt.context_blocks, answer.answer);

            std::cout << profile.name << ": " << chunks.size() << " chunks, picked";
            for (const auto& s : picked.selected) std::cout << ' ' << s.chunk_id;
            std::cout << "\n  " << answer.answer.substr(0, 100) << "...\n"
                      << "  relevance " << format_2dp(verdict.relevance) << ", hallucination "
                      << format_2dp(verdict.hallucination) << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    }
}

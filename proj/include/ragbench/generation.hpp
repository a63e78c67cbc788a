#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragbench/chunking.hpp"
#include "ragbench/error.hpp"
#include "ragbench/http.hpp"
#include "ragbench/retrieval.hpp"
#include "ragbench/text.hpp"

namespace ragbench {

enum class DecodingStrategy { greedy, nucleus };

inline std::string to_string(DecodingStrategy s) { return s == DecodingStrategy::nucleus ? "nucleus" : "greedy"; }

inline DecodingStrategy parse_decoding_strategy(std::string_view s) {
    if (s == "greedy") return DecodingStrategy::greedy;
    if (s == "nucleus") return DecodingStrategy::nucleus;
    throw UsageError("unknown decoding strategy '" + std::string(s) + "'");
}

struct DecodingParams {
    double temperature = 0.2;
    DecodingStrategy strategy = DecodingStrategy::greedy;
    double top_p = 0.9;  ///< nucleus only; greedy sends 1.0
    std::size_t max_output_tokens = 512;

    double effective_top_p() const { return strategy == DecodingStrategy::greedy ? 1.0 : top_p; }

    void validate() const {
        if (!(temperature >= 0.0)) throw UsageError("temperature must be >= 0");
        if (strategy == DecodingStrategy::nucleus && !(top_p > 0.0 && top_p <= 1.0)) {
            throw UsageError("top_p must lie in (0, 1]");
        }
        if (max_output_tokens < 1) throw UsageError("max_output_tokens must be >= 1");
    }
};

inline constexpr std::string_view kSystemPreamble =
    "You are a research assistant. Answer strictly from the provided context.";

struct ContextBlock {
    std::string chunk_id;
    std::string text;
    friend bool operator==(const ContextBlock&, const ContextBlock&) = default;
};

inline std::string context_header(std::size_t ordinal, const std::string& chunk_id) {
    return "Context [" + std::to_string(ordinal) + "] (" + chunk_id + "):";
}

struct PromptBundle {
    std::string system_preamble{kSystemPreamble};
    std::string query;
    std::vector<ContextBlock> context_blocks;  ///< retrieval order
    std::size_t total_prompt_tokens = 0;
    std::size_t window = 0;
    std::size_t max_output_tokens = 0;

    /// Everything after the preamble: context blocks, then the question.
    std::string render_user() const {
        std::string out;
        for (std::size_t i = 0; i < context_blocks.size(); ++i) {
            out += context_header(i + 1, context_blocks[i].chunk_id);
            out += '\n';
            out += context_blocks[i].text;
            out += "\n\n";
        }
        out += "Question: ";
        out += query;
        return out;
    }

    std::string render() const { return system_preamble + "\n\n" + render_user(); }

    bool within_window() const { return total_prompt_tokens + max_output_tokens <= window; }
};

/// Retrieval text of every chunk, by id.
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(const std::vector<Chunk>& chunks) {
        for (const auto& c : chunks) add(c);
    }
    void add(const Chunk& c) { texts_[c.chunk_id] = c.retrieval_text(); }
    const std::string& text(const std::string& chunk_id) const {
        auto it = texts_.find(chunk_id);
        if (it == texts_.end()) throw DataError("unknown chunk '" + chunk_id + "'");
        return it->second;
    }
    std::size_t size() const { return texts_.size(); }

private:
    std::unordered_map<std::string, std::string> texts_;
};

inline std::string first_tokens(std::string_view text, std::size_t n) {
    const auto toks = tokenize(text);
    if (n >= toks.size()) return std::string(text);
    if (n == 0) return {};
    return std::string(text.substr(0, toks[n - 1].end));
}

/// Build the prompt within `window` tokens, reserving max_output_tokens.
/// Blocks are added in retrieval order; the first block that does not fit is
/// cut at a token boundary to fill the remaining budget and every later
/// block is dropped.
inline PromptBundle assemble_prompt(const std::string& query, const RetrievalResult& result,
                                    const ChunkStore& chunks, std::size_t window,
                                    const DecodingParams& decoding) {
    PromptBundle b;
    b.query = query;
    b.window = window;
    b.max_output_tokens = decoding.max_output_tokens;

    const std::size_t fixed = count_tokens(b.system_preamble) + count_tokens("Question: " + query);
    if (fixed + b.max_output_tokens >= window) throw DataError("query exceeds window");
    std::size_t budget = window - b.max_output_tokens - fixed;

    for (const auto& sel : result.selected) {
        const auto& text = chunks.text(sel.chunk_id);
        const std::size_t header = count_tokens(context_header(b.context_blocks.size() + 1, sel.chunk_id));
        const std::size_t body = count_tokens(text);
        if (header + body <= budget) {
            b.context_blocks.push_back({sel.chunk_id, text});
            budget -= header + body;
            continue;
        }
        if (budget > header) b.context_blocks.push_back({sel.chunk_id, first_tokens(text, budget - header)});
        break;
    }
    b.total_prompt_tokens = count_tokens(b.render());
    if (!b.within_window()) throw DataError("internal: assembled prompt exceeds window");
    return b;
}

struct GenerationResponse {
    std::string answer;
    std::string backend_id;
    std::size_t prompt_tokens = 0;
    std::size_t output_tokens = 0;
    json request;  ///< outgoing request body as sent (or as it would be sent, for the stub)

    friend bool operator==(const GenerationResponse&, const GenerationResponse&) = default;
};

/// Wire dialects for completion endpoints.
///   native            {"model","prompt","temperature","top_p","max_tokens"} -> {"text"}
///   openai_chat       chat messages -> choices[0].message.content
///   openai_completion prompt        -> choices[0].text
///   ollama            /api/generate, options{...}, greedy as top_k=1 -> {"response"}
///   hf                text-generation-inference, greedy as do_sample=false -> [{"generated_text"}]
/// Dialects without a greedy flag send top_p=1.0 with the profile temperature.
enum class GenDialect { native, openai_chat, openai_completion, ollama, hf };

inline GenDialect parse_gen_dialect(std::string_view s) {
    if (s == "native") return GenDialect::native;
    if (s == "openai_chat") return GenDialect::openai_chat;
    if (s == "openai_completion") return GenDialect::openai_completion;
    if (s == "ollama") return GenDialect::ollama;
    if (s == "hf") return GenDialect::hf;
    throw UsageError("unknown generation dialect '" + std::string(s) + "'");
}

inline std::string to_string(GenDialect d) {
    switch (d) {
        case GenDialect::openai_chat: return "openai_chat";
        case GenDialect::openai_completion: return "openai_completion";
        case GenDialect::ollama: return "ollama";
        case GenDialect::hf: return "hf";
        default: return "native";
    }
}

struct EndpointSpec {
    std::string url;
    GenDialect dialect = GenDialect::native;
    std::string model;
};

inline json build_completion_request(GenDialect dialect, const std::string& model, const std::string& system,
                                     const std::string& user, const DecodingParams& d, std::size_t window) {
    const bool greedy = d.strategy == DecodingStrategy::greedy;
    const std::string prompt = system + "\n\n" + user;
    switch (dialect) {
        case GenDialect::openai_chat:
            return json{{"model", model},
                        {"messages", json::array({json{{"role", "system"}, {"content", system}},
                                                  json{{"role", "user"}, {"content", user}}})},
                        {"temperature", d.temperature},
                        {"top_p", d.effective_top_p()},
                        {"max_tokens", d.max_output_tokens}};
        case GenDialect::ollama: {
            json options{{"temperature", d.temperature},
                         {"top_p", d.effective_top_p()},
                         {"num_predict", d.max_output_tokens},
                         {"num_ctx", window}};
            if (greedy) options["top_k"] = 1;
            return json{{"model", model}, {"prompt", prompt}, {"stream", false}, {"options", options}};
        }
        case GenDialect::hf:
            return json{{"inputs", prompt},
                        {"parameters",
                         {{"temperature", d.temperature},
                          {"top_p", d.effective_top_p()},
                          {"max_new_tokens", d.max_output_tokens},
                          {"do_sample", !greedy},
                          {"return_full_text", false}}}};
        case GenDialect::native:
        case GenDialect::openai_completion:
        default:
            return json{{"model", model},
                        {"prompt", prompt},
                        {"temperature", d.temperature},
                        {"top_p", d.effective_top_p()},
                        {"max_tokens", d.max_output_tokens}};
    }
}

inline std::string parse_completion_response(GenDialect dialect, const json& body) {
    try {
        switch (dialect) {
            case GenDialect::openai_chat: return body.at("choices").at(0).at("message").at("content").get<std::string>();
            case GenDialect::openai_completion: return body.at("choices").at(0).at("text").get<std::string>();
            case GenDialect::ollama: return body.at("response").get<std::string>();
            case GenDialect::hf:
                if (body.is_array()) return body.at(0).at("generated_text").get<std::string>();
                return body.at("generated_text").get<std::string>();
            case GenDialect::native:
            default: return body.at("text").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed completion response: ") + e.what(), 200);
    }
}

/// Request body with the prompt text removed, for logging.
inline json decoding_view(const json& request) {
    json v = request;
    for (const char* k : {"prompt", "messages", "inputs"}) v.erase(k);
    return v;
}

/// Raw text completion against one endpoint.
class CompletionClient {
public:
    CompletionClient(EndpointSpec endpoint, std::shared_ptr<HttpTransport> transport = nullptr, RetryPolicy retry = {})
        : endpoint_(std::move(endpoint)), transport_(std::move(transport)), retry_(retry) {
        if (endpoint_.url.empty()) throw UsageError("completion endpoint needs a url");
        if (!transport_) transport_ = std::make_shared<HttplibTransport>();
    }

    const EndpointSpec& endpoint() const { return endpoint_; }

    std::string complete(const std::string& system, const std::string& user, const DecodingParams& d,
                         std::size_t window, json* request_out = nullptr) {
        auto body = build_completion_request(endpoint_.dialect, endpoint_.model, system, user, d, window);
        if (request_out) *request_out = body;
        return parse_completion_response(endpoint_.dialect, post_json(*transport_, endpoint_.url, body, retry_));
    }

private:
    EndpointSpec endpoint_;
    std::shared_ptr<HttpTransport> transport_;
    RetryPolicy retry_;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string id() const = 0;
    virtual GenerationResponse complete(const PromptBundle& bundle, const DecodingParams& decoding) = 0;
};

/// Offline extractive answer: the first 60 tokens of the top-ranked block.
inline GenerationResponse stub_generate(std::uint64_t seed, const PromptBundle& bundle) {
    GenerationResponse r;
    r.backend_id = "stub:" + std::to_string(seed);
    if (bundle.context_blocks.empty()) {
        r.answer = "Answer: no context available";
    } else {
        const auto words = split_tokens(bundle.context_blocks.front().text);
        r.answer = "Answer:";
        for (std::size_t i = 0; i < std::min<std::size_t>(60, words.size()); ++i) {
            r.answer += ' ';
            r.answer.append(words[i]);
        }
    }
    r.prompt_tokens = bundle.total_prompt_tokens;
    r.output_tokens = count_tokens(r.answer);
    return r;
}

class StubBackend final : public LlmBackend {
public:
    explicit StubBackend(std::uint64_t seed) : seed_(seed) {}
    std::string id() const override { return "stub:" + std::to_string(seed_); }
    GenerationResponse complete(const PromptBundle& bundle, const DecodingParams& decoding) override {
        auto r = stub_generate(seed_, bundle);
        r.request = build_completion_request(GenDialect::native, "stub", bundle.system_preamble, bundle.render_user(),
                                             decoding, bundle.window);
        return r;
    }

private:
    std::uint64_t seed_;
};

class RemoteBackend final : public LlmBackend {
public:
    RemoteBackend(EndpointSpec endpoint, std::shared_ptr<HttpTransport> transport = nullptr, RetryPolicy retry = {})
        : client_(std::move(endpoint), std::move(transport), retry) {}

    std::string id() const override { return to_string(client_.endpoint().dialect) + ":" + client_.endpoint().model; }

    GenerationResponse complete(const PromptBundle& bundle, const DecodingParams& decoding) override {
        GenerationResponse r;
        r.backend_id = id();
        r.answer = client_.complete(bundle.system_preamble, bundle.render_user(), decoding, bundle.window, &r.request);
        r.prompt_tokens = bundle.total_prompt_tokens;
        r.output_tokens = count_tokens(r.answer);
        return r;
    }

private:
    CompletionClient client_;
};

/// Enforces the window invariant locally, then asks the backend.
inline GenerationResponse generate(LlmBackend& backend, const PromptBundle& bundle, const DecodingParams& decoding) {
    decoding.validate();
    if (bundle.total_prompt_tokens + decoding.max_output_tokens > bundle.window) {
        throw DataError("prompt of " + std::to_string(bundle.total_prompt_tokens) + " tokens plus " +
                        std::to_string(decoding.max_output_tokens) + " output tokens exceeds window " +
                        std::to_string(bundle.window));
    }
    auto r = backend.complete(bundle, decoding);
    if (count_tokens(r.answer) == 0) throw ProviderError("empty answer", 200);
    return r;
}

}  // namespace ragbench

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragbench/error.hpp"
#include "ragbench/generation.hpp"
#include "ragbench/http.hpp"
#include "ragbench/text.hpp"

namespace ragbench {

using ordered_json = nlohmann::ordered_json;

/// Scores in [0, 1]. Higher hallucination is worse; higher relevance is better.
struct JudgeVerdict {
    std::string query_id;
    double hallucination = 0.0;
    double relevance = 0.0;
    std::string rationale;
    std::string judge_id;
    std::vector<std::string> warnings;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

class UnjudgeableError : public DataError {
public:
    using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Lexical oracle judge

inline constexpr std::array<std::string_view, 30> kStopwords = {
    "the", "a",    "an",   "and",  "or",   "of",   "to",    "in",    "on",   "for",
    "with", "is",  "are",  "was",  "were", "be",   "by",    "as",    "at",   "from",
    "that", "this", "it",  "its",  "their", "they", "which", "what", "how",  "who"};

inline bool is_stopword(std::string_view term) {
    return std::find(kStopwords.begin(), kStopwords.end(), term) != kStopwords.end();
}

/// Lowercased terms (outer punctuation stripped) minus stopwords, as a set.
inline std::set<std::string> content_terms(std::string_view text) {
    std::set<std::string> out;
    for (const auto tok : split_tokens(text)) {
        auto t = term_of(tok);
        if (!t.empty() && !is_stopword(t)) out.insert(std::move(t));
    }
    return out;
}

/// A leading "Answer:" label is formatting, not content.
inline std::string_view strip_answer_label(std::string_view answer) {
    while (!answer.empty() && is_space(answer.front())) answer.remove_prefix(1);
    if (answer.size() >= 7 && ascii_lower(answer.substr(0, 7)) == "answer:") answer.remove_prefix(7);
    return answer;
}

inline JudgeVerdict judge_oracle(std::string_view query, std::span<const ContextBlock> context,
                                 std::string_view answer) {
    const auto answer_terms = content_terms(strip_answer_label(answer));
    const auto query_terms = content_terms(query);
    std::set<std::string> context_terms;
    for (const auto& block : context) context_terms.merge(content_terms(block.text));

    auto overlap = [](const std::set<std::string>& a, const std::set<std::string>& b) {
        std::size_t n = 0;
        for (const auto& t : a) n += b.contains(t) ? 1 : 0;
        return n;
    };

    JudgeVerdict v;
    v.judge_id = "oracle";
    if (!answer_terms.empty()) {
        v.hallucination = 1.0 - static_cast<double>(overlap(answer_terms, context_terms)) /
                                    static_cast<double>(answer_terms.size());
    }
    if (!query_terms.empty()) {
        v.relevance = static_cast<double>(overlap(answer_terms, query_terms)) / static_cast<double>(query_terms.size());
    }
    return v;
}

// ---------------------------------------------------------------------------
// LLM judge

/// First balanced `{...}` in `text` that parses as a JSON object.
inline std::optional<json> find_first_json_object(std::string_view text) {
    for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = open; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto parsed = json::parse(text.substr(open, i - open + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

inline double clamp_score(double x, const char* name, std::vector<std::string>& warnings) {
    if (x < 0.0 || x > 1.0) {
        const double c = std::clamp(x, 0.0, 1.0);
        char buf[96];
        std::snprintf(buf, sizeof buf, "clamped %s %g to %g", name, x, c);
        warnings.emplace_back(buf);
        return c;
    }
    return x;
}

/// Verdict from a judge reply, or nullopt when no usable JSON object is present.
inline std::optional<JudgeVerdict> parse_judge_reply(std::string_view reply) {
    const auto obj = find_first_json_object(reply);
    if (!obj) return std::nullopt;
    const auto h = obj->find("hallucination");
    const auto r = obj->find("relevance");
    if (h == obj->end() || r == obj->end() || !h->is_number() || !r->is_number()) return std::nullopt;
    JudgeVerdict v;
    const double hv = h->get<double>();
    const double rv = r->get<double>();
    if (!std::isfinite(hv) || !std::isfinite(rv)) return std::nullopt;
    v.hallucination = clamp_score(hv, "hallucination", v.warnings);
    v.relevance = clamp_score(rv, "relevance", v.warnings);
    if (auto it = obj->find("rationale"); it != obj->end() && it->is_string()) v.rationale = it->get<std::string>();
    return v;
}

inline constexpr std::string_view kJudgeSystem =
    "You are an impartial evaluator of answers produced by a retrieval-augmented research assistant.";

inline std::string judge_prompt(std::string_view query, std::span<const ContextBlock> context, std::string_view answer) {
    std::string p =
        "Score the answer on two criteria.\n"
        "hallucination: the fraction of answer claims not supported by the provided context "
        "(0 = every claim supported, 1 = no claim supported).\n"
        "relevance: how directly the answer addresses the question (0 = not at all, 1 = completely).\n"
        "Output strict JSON only, in exactly this form: "
        "{\"hallucination\": <number>, \"relevance\": <number>, \"rationale\": \"<one sentence>\"}\n\n"
        "Question:\n";
    p.append(query);
    p += "\n\nContext:\n";
    for (std::size_t i = 0; i < context.size(); ++i) {
        p += "[" + std::to_string(i + 1) + "] " + context[i].text + "\n";
    }
    p += "\nAnswer:\n";
    p.append(answer);
    return p;
}

inline constexpr std::string_view kJudgeReask =
    "\n\nYour previous reply could not be parsed. Reply with the JSON object only.";

class Judge {
public:
    virtual ~Judge() = default;
    virtual std::string id() const = 0;
    virtual JudgeVerdict judge(const std::string& query_id, const std::string& query,
                               std::span<const ContextBlock> context, const std::string& answer) = 0;
};

class OracleJudge final : public Judge {
public:
    std::string id() const override { return "oracle"; }
    JudgeVerdict judge(const std::string& query_id, const std::string& query, std::span<const ContextBlock> context,
                       const std::string& answer) override {
        auto v = judge_oracle(query, context, answer);
        v.query_id = query_id;
        return v;
    }
};

/// Asks a model for a JSON verdict; re-asks up to `max_reasks` times when the
/// reply has no parseable verdict, then throws UnjudgeableError.
class LlmJudge final : public Judge {
public:
    explicit LlmJudge(EndpointSpec endpoint, std::shared_ptr<HttpTransport> transport = nullptr, RetryPolicy retry = {})
        : client_(std::move(endpoint), std::move(transport), retry) {
        decoding_.temperature = 0.2;
        decoding_.strategy = DecodingStrategy::greedy;
        decoding_.max_output_tokens = 256;
    }

    int max_reasks = 2;

    std::string id() const override { return "llm:" + client_.endpoint().model; }

    JudgeVerdict judge(const std::string& query_id, const std::string& query, std::span<const ContextBlock> context,
                       const std::string& answer) override {
        std::string prompt = judge_prompt(query, context, answer);
        for (int attempt = 0; attempt <= max_reasks; ++attempt) {
            const auto reply = client_.complete(std::string(kJudgeSystem), prompt, decoding_, 8192);
            if (auto v = parse_judge_reply(reply)) {
                v->query_id = query_id;
                v->judge_id = id();
                return *v;
            }
            if (attempt == 0) prompt += kJudgeReask;
        }
        throw UnjudgeableError("unjudgeable");
    }

private:
    CompletionClient client_;
    DecodingParams decoding_;
};

inline JudgeVerdict judge_llm(Judge& judge, const std::string& query_id, const std::string& query,
                              std::span<const ContextBlock> context, const std::string& answer) {
    return judge.judge(query_id, query, context, answer);
}

// ---------------------------------------------------------------------------
// Aggregation and report

struct PipelineVerdicts {
    std::string name;
    std::vector<JudgeVerdict> verdicts;
    std::vector<std::string> missing_query_ids;  ///< unjudgeable or failed queries
};

struct PipelineMetrics {
    std::string name;
    double answer_relevance_mean = 0.0;
    double hallucination_mean = 0.0;
    std::size_t n_queries = 0;
    std::size_t n_missing = 0;
    std::vector<JudgeVerdict> per_query;  ///< ascending query_id
    std::vector<std::string> missing_query_ids;

    friend bool operator==(const PipelineMetrics&, const PipelineMetrics&) = default;
};

struct MetricsReport {
    std::vector<PipelineMetrics> pipelines;  ///< column order

    const PipelineMetrics* find(std::string_view name) const {
        for (const auto& p : pipelines) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }
    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Recursive halving sum; its rounding depends only on element order.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const auto half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline PipelineMetrics aggregate_pipeline(const PipelineVerdicts& in) {
    if (in.verdicts.empty()) throw DataError("pipeline '" + in.name + "' has zero verdicts");
    PipelineMetrics m;
    m.name = in.name;
    m.per_query = in.verdicts;
    std::stable_sort(m.per_query.begin(), m.per_query.end(),
                     [](const JudgeVerdict& a, const JudgeVerdict& b) { return a.query_id < b.query_id; });
    for (std::size_t i = 1; i < m.per_query.size(); ++i) {
        if (m.per_query[i].query_id == m.per_query[i - 1].query_id) {
            throw DataError("pipeline '" + in.name + "' has two verdicts for query '" + m.per_query[i].query_id + "'");
        }
    }
    std::vector<double> h, r;
    for (const auto& v : m.per_query) {
        h.push_back(std::clamp(v.hallucination, 0.0, 1.0));
        r.push_back(std::clamp(v.relevance, 0.0, 1.0));
    }
    const auto n = static_cast<double>(m.per_query.size());
    m.hallucination_mean = pairwise_sum(h) / n;
    m.answer_relevance_mean = pairwise_sum(r) / n;
    m.n_queries = m.per_query.size();
    m.missing_query_ids = in.missing_query_ids;
    std::sort(m.missing_query_ids.begin(), m.missing_query_ids.end());
    m.n_missing = m.missing_query_ids.size();
    return m;
}

inline MetricsReport aggregate(const std::vector<PipelineVerdicts>& pipelines) {
    if (pipelines.empty()) throw DataError("nothing to aggregate");
    MetricsReport report;
    for (const auto& p : pipelines) report.pipelines.push_back(aggregate_pipeline(p));
    return report;
}

inline std::string format_2dp(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline ordered_json verdict_to_json(const JudgeVerdict& v) {
    ordered_json j{{"query_id", v.query_id},
                   {"hallucination", v.hallucination},
                   {"relevance", v.relevance},
                   {"rationale", v.rationale},
                   {"judge_id", v.judge_id}};
    if (!v.warnings.empty()) j["warnings"] = v.warnings;
    return j;
}

template <class Json>
JudgeVerdict verdict_from_json(const Json& j) {
    JudgeVerdict v;
    v.query_id = j.at("query_id").template get<std::string>();
    v.hallucination = j.at("hallucination").template get<double>();
    v.relevance = j.at("relevance").template get<double>();
    v.rationale = j.value("rationale", "");
    v.judge_id = j.value("judge_id", "");
    if (j.contains("warnings")) v.warnings = j.at("warnings").template get<std::vector<std::string>>();
    return v;
}

inline ordered_json report_to_json(const MetricsReport& report) {
    ordered_json pipelines = ordered_json::object();
    for (const auto& p : report.pipelines) {
        ordered_json per_query = ordered_json::array();
        for (const auto& v : p.per_query) per_query.push_back(verdict_to_json(v));
        pipelines[p.name] = ordered_json{{"answer_relevance_mean", p.answer_relevance_mean},
                                         {"hallucination_mean", p.hallucination_mean},
                                         {"n_queries", p.n_queries},
                                         {"n_missing", p.n_missing},
                                         {"missing_query_ids", p.missing_query_ids},
                                         {"per_query", per_query}};
    }
    ordered_json out{{"pipelines", pipelines}};
    // Recorded, never asserted: whether the header/MMR profile hallucinated less.
    const auto* z = report.find("zephyr-like");
    const auto* d = report.find("deepseek-like");
    if (z && d) {
        out["directional_check"] = ordered_json{
            {"claim", "deepseek-like hallucination_mean < zephyr-like hallucination_mean"},
            {"holds", d->hallucination_mean < z->hallucination_mean}};
    }
    return out;
}

/// Pipelines keep their order in the document.
inline MetricsReport report_from_json(const ordered_json& j) {
    MetricsReport report;
    try {
        const auto& pipelines = j.at("pipelines");
        if (!pipelines.is_object()) throw DataError("report 'pipelines' must be an object");
        for (const auto& [name, p] : pipelines.items()) {
            PipelineMetrics m;
            m.name = name;
            m.answer_relevance_mean = p.at("answer_relevance_mean").get<double>();
            m.hallucination_mean = p.at("hallucination_mean").get<double>();
            m.n_queries = p.at("n_queries").get<std::size_t>();
            m.n_missing = p.value("n_missing", std::size_t{0});
            if (p.contains("missing_query_ids")) m.missing_query_ids = p.at("missing_query_ids").get<std::vector<std::string>>();
            if (p.contains("per_query")) {
                for (const auto& v : p.at("per_query")) m.per_query.push_back(verdict_from_json(v));
            }
            report.pipelines.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
    return report;
}

/// Fixed-width table: metric rows x pipeline columns, 2-decimal means.
inline std::string render_table(const MetricsReport& report) {
    const std::string first = "Evaluation metrics";
    const std::size_t w0 = first.size() + 2;
    std::vector<std::size_t> widths;
    for (const auto& p : report.pipelines) widths.push_back(std::max<std::size_t>(p.name.size(), 4) + 2);

    auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };

    std::string out = pad_right(first, w0);
    for (std::size_t i = 0; i < report.pipelines.size(); ++i) out += pad_left(report.pipelines[i].name, widths[i]);
    out += '\n';
    out += pad_right("Answer Relevance", w0);
    for (std::size_t i = 0; i < report.pipelines.size(); ++i) {
        out += pad_left(format_2dp(report.pipelines[i].answer_relevance_mean), widths[i]);
    }
    out += '\n';
    out += pad_right("Hallucination", w0);
    for (std::size_t i = 0; i < report.pipelines.size(); ++i) {
        out += pad_left(format_2dp(report.pipelines[i].hallucination_mean), widths[i]);
    }
    out += '\n';
    return out;
}

inline std::string render_csv(const MetricsReport& report) {
    std::string out = "pipeline,metric,value\n";
    for (const auto& p : report.pipelines) {
        out += p.name + ",answer_relevance," + format_2dp(p.answer_relevance_mean) + "\n";
        out += p.name + ",hallucination," + format_2dp(p.hallucination_mean) + "\n";
    }
    return out;
}

}  // namespace ragbench

#include "protip/progressive.hpp"

#include <unordered_set>

#include "protip/error.hpp"

namespace protip {

std::vector<std::string> RetrievalResult::ids() const {
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.id);
    return out;
}

QueryState init_session(const Encoder& encoder, const ComplexQuery& query) {
    return init_session(encoder, query.text, query.id);
}

QueryState init_session(const Encoder& encoder, std::string_view query_text, std::string query_id) {
    return QueryState{std::move(query_id), encoder.embed(query_text), {}};
}

QueryState advance(const QueryState& state, const Encoder& encoder, const Tool& tool) {
    return advance_with(state, tool.id, encoder.embed_tool(tool));
}

QueryState advance_with(const QueryState& state, const std::string& tool_id,
                        std::span<const double> tool_embedding) {
    QueryState next{state.query_id, subtract(state.embedding, tool_embedding), state.subtracted};
    next.subtracted.push_back(tool_id);
    return next;
}

RetrievalResult retrieve_step(const QueryState& state, const VectorStore& store, std::size_t k, Metric metric) {
    return {nearest_topk(store, state.embedding, k, metric, state.subtracted), metric};
}

std::vector<std::string> interleave(std::span<const std::vector<std::string>> per_step, std::size_t k) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    std::size_t depth = 0;
    bool any = true;
    while (out.size() < k && any) {
        any = false;
        for (const auto& list : per_step) {
            if (depth >= list.size()) continue;
            any = true;
            if (seen.insert(list[depth]).second) {
                out.push_back(list[depth]);
                if (out.size() == k) break;
            }
        }
        ++depth;
    }
    return out;
}

ProgressiveTrace progressive_trace(const Encoder& encoder, const VectorStore& store, std::string_view query_text,
                                   std::size_t k, std::size_t max_steps, Metric metric) {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (max_steps == 0) throw ConfigError("max_steps must be at least 1");
    ProgressiveTrace trace;
    if (store.empty()) return trace;

    QueryState state = init_session(encoder, query_text);
    for (std::size_t s = 0; s < max_steps; ++s) {
        RetrievalResult step = retrieve_step(state, store, k, metric);
        if (step.ranked.empty()) break;
        const std::string& top = step.ranked.front().id;
        state = advance_with(state, top, store.vector(top));
        trace.steps.push_back(std::move(step));
    }
    std::vector<std::vector<std::string>> lists;
    lists.reserve(trace.steps.size());
    for (const auto& s : trace.steps) lists.push_back(s.ids());
    trace.merged = interleave(lists, k);
    return trace;
}

std::vector<std::string> progressive_retrieve(const Encoder& encoder, const VectorStore& store,
                                              std::string_view query_text, std::size_t k, std::size_t max_steps,
                                              Metric metric) {
    return progressive_trace(encoder, store, query_text, k, max_steps, metric).merged;
}

}  // namespace protip

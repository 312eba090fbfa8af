#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protip/corpus.hpp"
#include "protip/embedding.hpp"

namespace protip {

inline constexpr std::size_t kDefaultMaxSteps = kMaxSubtasks;

// Retrieval-side query embedding: E(q) minus the embeddings of every tool
// handled so far. Values are immutable; advancing yields a new state.
struct QueryState {
    std::string query_id;
    Vector embedding;
    std::vector<std::string> subtracted;

    std::size_t step_index() const noexcept { return subtracted.size(); }
};

struct RetrievalResult {
    std::vector<ScoredTool> ranked;
    Metric metric = Metric::L2Asc;

    std::vector<std::string> ids() const;
};

QueryState init_session(const Encoder& encoder, const ComplexQuery& query);
QueryState init_session(const Encoder& encoder, std::string_view query_text, std::string query_id = {});

QueryState advance(const QueryState& state, const Encoder& encoder, const Tool& tool);
// Subtracts a caller-supplied tool embedding, e.g. the vector of the tool an
// executor actually ran.
QueryState advance_with(const QueryState& state, const std::string& tool_id,
                        std::span<const double> tool_embedding);

// Top-k over the store, skipping tools already subtracted from the state.
RetrievalResult retrieve_step(const QueryState& state, const VectorStore& store, std::size_t k, Metric metric);

// Round-robin merge in list order, keeping the first occurrence of each id.
std::vector<std::string> interleave(std::span<const std::vector<std::string>> per_step, std::size_t k);

struct ProgressiveTrace {
    std::vector<RetrievalResult> steps;
    std::vector<std::string> merged;
};

// Retrieves per step, advances by each step's rank-1 tool (read from the
// store), and interleaves the per-step lists to k ids.
ProgressiveTrace progressive_trace(const Encoder& encoder, const VectorStore& store, std::string_view query_text,
                                   std::size_t k, std::size_t max_steps = kDefaultMaxSteps,
                                   Metric metric = Metric::L2Asc);

std::vector<std::string> progressive_retrieve(const Encoder& encoder, const VectorStore& store,
                                              std::string_view query_text, std::size_t k,
                                              std::size_t max_steps = kDefaultMaxSteps,
                                              Metric metric = Metric::L2Asc);

}  // namespace protip

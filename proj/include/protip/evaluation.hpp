#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "protip/corpus.hpp"

namespace protip {

inline const std::vector<std::size_t> kDefaultRecallKs = {6, 10, 15, 20};

// |top-k(retrieved) ∩ gt| / |gt|. Throws EvaluationError for an empty plan.
double recall_at_k(std::span<const std::string> retrieved, std::span<const std::string> gt_plan, std::size_t k);

// Returns a ranked id list of at most k tools for the query.
using Retriever = std::function<std::vector<std::string>(const ComplexQuery&, std::size_t k)>;
// Ranks tools for raw text; the building block of decomposition retrieval.
using TextRetriever = std::function<std::vector<std::string>(std::string_view text, std::size_t k)>;

struct QueryRecall {
    std::string query_id;
    std::map<std::size_t, double> recall;  // K -> recall
};

struct MethodReport {
    std::string method;
    std::map<std::size_t, double> mean_recall;
    std::vector<QueryRecall> per_query;
};

struct EvalReport {
    std::size_t query_count = 0;
    std::vector<std::size_t> ks;
    std::vector<MethodReport> methods;
};

// Runs the retriever once per (query, K). Errors are rethrown as
// EvaluationError naming the query.
MethodReport evaluate_retriever(const std::string& method, const Retriever& retriever,
                                const std::vector<ComplexQuery>& queries, std::span<const std::size_t> ks);

std::string to_json(const EvalReport& report, const std::string& run_config_json = {});
// Recall table, one row per method, one column per K, values in percent.
std::string to_table(const EvalReport& report);

// Retrieves top-k per subquery and interleaves the lists down to k.
std::vector<std::string> td_retrieve(const DecomposedQuery& decomposed, const TextRetriever& base, std::size_t k);

// Wraps td_retrieve as a query-level retriever; a query without a
// decomposition is an EvaluationError.
Retriever make_td_retriever(const std::vector<DecomposedQuery>& decompositions, TextRetriever base);

struct HistoryEntry {
    Role role = Role::Assistant;
    std::string text;

    bool operator==(const HistoryEntry&) const = default;
};

struct UnrolledInstance {
    std::string query_id;
    std::size_t step_index = 0;
    std::string request;
    std::vector<HistoryEntry> history;
    std::string target_tool;
    std::string target_text;
};

// One instance per assistant step. User turns stay in the history and
// are also appended to the request of every later instance; system turns
// are dropped.
std::vector<UnrolledInstance> unroll_interaction(const Interaction& interaction);

enum class PromptVariant { Tools, ToolsAndHistory };

struct PromptCandidate {
    std::string tool_id;
    std::string metadata;
};

extern const char* const kDefaultInstruction;

std::string build_prompt(const UnrolledInstance& instance, std::vector<PromptCandidate> candidates,
                         PromptVariant variant, std::uint64_t shuffle_seed,
                         const std::string& instruction = kDefaultInstruction);

struct PlannerPrediction {
    std::string query_id;
    std::size_t step_index = 0;
    std::string tool;
    std::string text;
};

std::vector<PlannerPrediction> load_predictions(const std::string& path);
std::vector<PlannerPrediction> parse_predictions(const std::string& jsonl, const std::string& source = "<memory>");

// Percentages over the instances; an instance without a prediction counts
// as an empty prediction. A prediction matching no instance is an error.
double tool_accuracy(const std::vector<PlannerPrediction>& preds, const std::vector<UnrolledInstance>& instances);
double tool_hallucination(const std::vector<PlannerPrediction>& preds, const ToolCorpus& corpus);

// 1 iff equal after trimming surrounding whitespace.
int exact_match(std::string_view pred, std::string_view target);
// Summary-level ROUGE-L F1 over newline-separated sentences.
double rouge_lsum(std::string_view pred, std::string_view target);

struct PlannerMetrics {
    std::size_t steps = 0;
    double tool_accuracy = 0.0;       // percent
    double tool_hallucination = 0.0;  // percent
    double wrong_existing = 0.0;      // percent
    double empty = 0.0;               // percent
    double exact_match = 0.0;         // mean in [0, 1]
    double rouge_lsum = 0.0;          // mean in [0, 1]
};

PlannerMetrics score_planner(const std::vector<PlannerPrediction>& preds,
                             const std::vector<UnrolledInstance>& instances, const ToolCorpus& corpus);

std::string to_json(const PlannerMetrics& metrics, const std::string& run_config_json = {});
std::string to_table(const PlannerMetrics& metrics);

}  // namespace protip

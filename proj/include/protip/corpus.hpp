#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace protip {

inline constexpr std::size_t kMaxSubtasks = 6;

struct Tool {
    std::string id;
    std::string name;
    std::string description;

    bool operator==(const Tool&) const = default;
};

// Text indexed for a tool by the lexical ranker: name followed by description.
std::string tool_document(const Tool& tool);

// Insertion-ordered toolbox with id lookup. Immutable once built.
class ToolCorpus {
public:
    ToolCorpus() = default;

    // Throws CorpusError on an empty/duplicate id or an empty description.
    void add(Tool tool);

    const std::vector<Tool>& tools() const noexcept { return tools_; }
    std::size_t size() const noexcept { return tools_.size(); }
    bool empty() const noexcept { return tools_.empty(); }
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    const Tool* find(const std::string& id) const;
    const Tool& at(const std::string& id) const;

    auto begin() const noexcept { return tools_.begin(); }
    auto end() const noexcept { return tools_.end(); }

    bool operator==(const ToolCorpus& other) const { return tools_ == other.tools_; }

private:
    std::vector<Tool> tools_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ComplexQuery {
    std::string id;
    std::string text;
    std::vector<std::string> gt_plan;

    bool operator==(const ComplexQuery&) const = default;
};

struct DecomposedQuery {
    std::string query_id;
    std::vector<std::string> subqueries;

    bool operator==(const DecomposedQuery&) const = default;
};

enum class Role { Assistant, Function, User, System };

const char* to_string(Role role);
Role role_from_string(const std::string& s);

struct Step {
    Role role = Role::Assistant;
    std::string text;
    std::optional<std::string> tool_id;

    bool operator==(const Step&) const = default;
};

struct Interaction {
    std::string query_id;
    std::string full_query;
    std::vector<Step> steps;

    std::size_t assistant_steps() const;
    std::size_t function_steps() const;
};

enum class RemovalReason { UnknownTool, EmptyPlan, TooManySubtasks };

const char* to_string(RemovalReason reason);

struct CleaningReport {
    struct Removal {
        std::string query_id;
        RemovalReason reason;
        // Offending tool ids for UnknownTool removals.
        std::vector<std::string> unknown_tools;
    };
    std::vector<Removal> removed;

    bool empty() const noexcept { return removed.empty(); }
};

struct CleanedQueries {
    std::vector<ComplexQuery> kept;
    CleaningReport report;
};

// JSONL loaders. Malformed lines raise ParseError carrying the 1-based line.
ToolCorpus load_corpus(const std::string& path);
ToolCorpus parse_corpus(const std::string& jsonl, const std::string& source = "<memory>");

std::vector<ComplexQuery> parse_queries(const std::string& jsonl, const std::string& source = "<memory>");
CleanedQueries load_queries(const std::string& path, const ToolCorpus& corpus,
                            std::size_t max_subtasks = kMaxSubtasks);

// Splits queries into kept and removed. Plans naming tools outside the
// corpus are dropped, never rewritten.
CleanedQueries clean_queries(std::vector<ComplexQuery> queries, const ToolCorpus& corpus,
                             std::size_t max_subtasks = kMaxSubtasks);

std::vector<DecomposedQuery> load_decompositions(const std::string& path);
std::vector<DecomposedQuery> parse_decompositions(const std::string& jsonl,
                                                  const std::string& source = "<memory>");

std::vector<Interaction> load_interactions(const std::string& path);
std::vector<Interaction> parse_interactions(const std::string& jsonl,
                                            const std::string& source = "<memory>");

// Writers emit one compact JSON object per line with a fixed key order.
std::string to_jsonl(const ToolCorpus& corpus);
std::string to_jsonl(const std::vector<ComplexQuery>& queries);
std::string to_jsonl(const std::vector<DecomposedQuery>& decompositions);
std::string to_jsonl(const std::vector<Interaction>& interactions);

struct DatasetStats {
    std::size_t count = 0;
    // Plan length -> number of queries, keys 1..max(n).
    std::map<std::size_t, std::size_t> histogram;
    std::optional<double> mean;
    std::optional<double> stddev;  // population
};

DatasetStats dataset_stats(const std::vector<ComplexQuery>& queries);

// Shared file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace protip

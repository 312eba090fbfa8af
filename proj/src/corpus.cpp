#include "protip/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "protip/error.hpp"
#include "json.hpp"

namespace protip {

using nlohmann::json;

std::string tool_document(const Tool& tool) {
    if (tool.name.empty()) return tool.description;
    return tool.name + " " + tool.description;
}

void ToolCorpus::add(Tool tool) {
    if (tool.id.empty()) throw CorpusError("tool with empty id");
    if (tool.description.empty()) throw CorpusError("tool '" + tool.id + "' has an empty description");
    if (index_.count(tool.id)) throw CorpusError("duplicate tool id '" + tool.id + "'");
    index_.emplace(tool.id, tools_.size());
    tools_.push_back(std::move(tool));
}

const Tool* ToolCorpus::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &tools_[it->second];
}

const Tool& ToolCorpus::at(const std::string& id) const {
    if (const Tool* t = find(id)) return *t;
    throw CorpusError("unknown tool id '" + id + "'");
}

const char* to_string(Role role) {
    switch (role) {
        case Role::Assistant: return "assistant";
        case Role::Function: return "function";
        case Role::User: return "user";
        case Role::System: return "system";
    }
    return "?";
}

Role role_from_string(const std::string& s) {
    if (s == "assistant") return Role::Assistant;
    if (s == "function") return Role::Function;
    if (s == "user") return Role::User;
    if (s == "system") return Role::System;
    throw FormatError("unknown role '" + s + "'");
}

std::size_t Interaction::assistant_steps() const {
    std::size_t p = 0;
    for (const auto& s : steps) p += s.role == Role::Assistant;
    return p;
}

std::size_t Interaction::function_steps() const {
    std::size_t f = 0;
    for (const auto& s : steps) f += s.role == Role::Function;
    return f;
}

const char* to_string(RemovalReason reason) {
    switch (reason) {
        case RemovalReason::UnknownTool: return "unknown-tool";
        case RemovalReason::EmptyPlan: return "empty-plan";
        case RemovalReason::TooManySubtasks: return "too-many-subtasks";
    }
    return "?";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

// Calls `fn(object, line_number)` for every nonblank line.
void for_each_record(const std::string& jsonl, const std::string& source,
                     const std::function<void(const json&, std::size_t)>& fn) {
    std::istringstream in(jsonl);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(source, lineno, "expected a JSON object");
        try {
            fn(obj, lineno);
        } catch (const json::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
}

std::string require_string(const json& obj, const char* key, const std::string& source, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw ParseError(source, line, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

std::vector<std::string> require_string_array(const json& obj, const char* key, const std::string& source,
                                              std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array())
        throw ParseError(source, line, std::string("missing array field '") + key + "'");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(source, line, std::string("non-string entry in '") + key + "'");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

ToolCorpus parse_corpus(const std::string& jsonl, const std::string& source) {
    ToolCorpus corpus;
    for_each_record(jsonl, source, [&](const json& obj, std::size_t line) {
        Tool tool{require_string(obj, "id", source, line), require_string(obj, "name", source, line),
                  require_string(obj, "description", source, line)};
        corpus.add(std::move(tool));
    });
    return corpus;
}

ToolCorpus load_corpus(const std::string& path) { return parse_corpus(read_file(path), path); }

std::vector<ComplexQuery> parse_queries(const std::string& jsonl, const std::string& source) {
    std::vector<ComplexQuery> out;
    for_each_record(jsonl, source, [&](const json& obj, std::size_t line) {
        out.push_back({require_string(obj, "id", source, line), require_string(obj, "text", source, line),
                       require_string_array(obj, "gt_plan", source, line)});
    });
    return out;
}

CleanedQueries clean_queries(std::vector<ComplexQuery> queries, const ToolCorpus& corpus,
                             std::size_t max_subtasks) {
    CleanedQueries result;
    for (auto& q : queries) {
        if (q.gt_plan.empty()) {
            result.report.removed.push_back({q.id, RemovalReason::EmptyPlan, {}});
            continue;
        }
        std::vector<std::string> unknown;
        for (const auto& id : q.gt_plan)
            if (!corpus.contains(id)) unknown.push_back(id);
        if (!unknown.empty()) {
            result.report.removed.push_back({q.id, RemovalReason::UnknownTool, std::move(unknown)});
            continue;
        }
        if (q.gt_plan.size() > max_subtasks) {
            result.report.removed.push_back({q.id, RemovalReason::TooManySubtasks, {}});
            continue;
        }
        result.kept.push_back(std::move(q));
    }
    return result;
}

CleanedQueries load_queries(const std::string& path, const ToolCorpus& corpus, std::size_t max_subtasks) {
    return clean_queries(parse_queries(read_file(path), path), corpus, max_subtasks);
}

std::vector<DecomposedQuery> parse_decompositions(const std::string& jsonl, const std::string& source) {
    std::vector<DecomposedQuery> out;
    for_each_record(jsonl, source, [&](const json& obj, std::size_t line) {
        DecomposedQuery d{require_string(obj, "query_id", source, line),
                          require_string_array(obj, "subqueries", source, line)};
        if (d.subqueries.empty()) throw ParseError(source, line, "decomposition has no subqueries");
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<DecomposedQuery> load_decompositions(const std::string& path) {
    return parse_decompositions(read_file(path), path);
}

std::vector<Interaction> parse_interactions(const std::string& jsonl, const std::string& source) {
    std::vector<Interaction> out;
    for_each_record(jsonl, source, [&](const json& obj, std::size_t line) {
        Interaction it{require_string(obj, "query_id", source, line),
                       require_string(obj, "full_query", source, line),
                       {}};
        auto steps = obj.find("steps");
        if (steps == obj.end() || !steps->is_array()) throw ParseError(source, line, "missing array field 'steps'");
        for (const auto& s : *steps) {
            Step step;
            try {
                step.role = role_from_string(s.at("role").get<std::string>());
            } catch (const FormatError& e) {
                throw ParseError(source, line, e.what());
            }
            step.text = s.value("text", std::string{});
            if (auto t = s.find("tool_id"); t != s.end() && t->is_string()) step.tool_id = t->get<std::string>();
            if (step.role == Role::Assistant && (!step.tool_id || step.tool_id->empty()))
                throw ParseError(source, line, "assistant step without tool_id");
            it.steps.push_back(std::move(step));
        }
        if (it.assistant_steps() == 0) throw ParseError(source, line, "interaction has no assistant steps");
        out.push_back(std::move(it));
    });
    return out;
}

std::vector<Interaction> load_interactions(const std::string& path) {
    return parse_interactions(read_file(path), path);
}

std::string to_jsonl(const ToolCorpus& corpus) {
    std::string out;
    for (const auto& t : corpus) {
        json obj = json::object();
        obj["id"] = t.id;
        obj["name"] = t.name;
        obj["description"] = t.description;
        out += obj.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<ComplexQuery>& queries) {
    std::string out;
    for (const auto& q : queries) {
        json obj = json::object();
        obj["id"] = q.id;
        obj["text"] = q.text;
        obj["gt_plan"] = q.gt_plan;
        out += obj.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<DecomposedQuery>& decompositions) {
    std::string out;
    for (const auto& d : decompositions) {
        json obj = json::object();
        obj["query_id"] = d.query_id;
        obj["subqueries"] = d.subqueries;
        out += obj.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<Interaction>& interactions) {
    std::string out;
    for (const auto& it : interactions) {
        json steps = json::array();
        for (const auto& s : it.steps) {
            json step = json::object();
            step["role"] = to_string(s.role);
            step["text"] = s.text;
            if (s.tool_id) step["tool_id"] = *s.tool_id;
            steps.push_back(std::move(step));
        }
        json obj = json::object();
        obj["query_id"] = it.query_id;
        obj["full_query"] = it.full_query;
        obj["steps"] = std::move(steps);
        out += obj.dump() + "\n";
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<ComplexQuery>& queries) {
    DatasetStats stats;
    stats.count = queries.size();
    if (queries.empty()) return stats;

    std::size_t max_n = 0;
    double sum = 0.0;
    for (const auto& q : queries) {
        max_n = std::max(max_n, q.gt_plan.size());
        sum += static_cast<double>(q.gt_plan.size());
    }
    for (std::size_t n = 1; n <= max_n; ++n) stats.histogram[n] = 0;
    for (const auto& q : queries) ++stats.histogram[q.gt_plan.size()];

    const double mean = sum / static_cast<double>(queries.size());
    double sq = 0.0;
    for (const auto& q : queries) {
        const double d = static_cast<double>(q.gt_plan.size()) - mean;
        sq += d * d;
    }
    stats.mean = mean;
    stats.stddev = std::sqrt(sq / static_cast<double>(queries.size()));
    return stats;
}

}  // namespace protip

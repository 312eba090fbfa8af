#include "protip/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "protip/error.hpp"
#include "protip/lexical.hpp"
#include "protip/progressive.hpp"
#include "protip/random.hpp"

namespace protip {

using nlohmann::ordered_json;

double recall_at_k(std::span<const std::string> retrieved, std::span<const std::string> gt_plan, std::size_t k) {
    if (gt_plan.empty()) throw EvaluationError("recall is undefined for an empty ground-truth plan");
    if (k == 0) throw ConfigError("k must be at least 1");
    const std::set<std::string> gt(gt_plan.begin(), gt_plan.end());
    std::set<std::string> hits;
    const std::size_t n = std::min(k, retrieved.size());
    for (std::size_t i = 0; i < n; ++i)
        if (gt.count(retrieved[i])) hits.insert(retrieved[i]);
    return static_cast<double>(hits.size()) / static_cast<double>(gt.size());
}

MethodReport evaluate_retriever(const std::string& method, const Retriever& retriever,
                                const std::vector<ComplexQuery>& queries, std::span<const std::size_t> ks) {
    if (ks.empty()) throw ConfigError("no K values to evaluate");
    MethodReport report{method, {}, {}};
    report.per_query.reserve(queries.size());
    for (const auto& q : queries) {
        QueryRecall qr{q.id, {}};
        for (std::size_t k : ks) {
            std::vector<std::string> ranked;
            try {
                ranked = retriever(q, k);
            } catch (const std::exception& e) {
                throw EvaluationError(method + ": query '" + q.id + "': " + e.what());
            }
            qr.recall[k] = recall_at_k(ranked, q.gt_plan, k);
        }
        report.per_query.push_back(std::move(qr));
    }
    for (std::size_t k : ks) {
        double sum = 0.0;
        for (const auto& qr : report.per_query) sum += qr.recall.at(k);
        report.mean_recall[k] = queries.empty() ? 0.0 : sum / static_cast<double>(queries.size());
    }
    return report;
}

std::string to_json(const EvalReport& report, const std::string& run_config_json) {
    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "retrieval";
    if (!run_config_json.empty()) j["run_config"] = ordered_json::parse(run_config_json);
    j["query_count"] = report.query_count;
    j["ks"] = report.ks;
    ordered_json methods = ordered_json::array();
    for (const auto& m : report.methods) {
        ordered_json mj;
        mj["method"] = m.method;
        ordered_json mean = ordered_json::object();
        for (const auto& [k, v] : m.mean_recall) mean[std::to_string(k)] = v;
        mj["mean_recall"] = std::move(mean);
        ordered_json per = ordered_json::array();
        for (const auto& qr : m.per_query) {
            ordered_json r = ordered_json::object();
            for (const auto& [k, v] : qr.recall) r[std::to_string(k)] = v;
            per.push_back({{"query_id", qr.query_id}, {"recall", std::move(r)}});
        }
        mj["per_query"] = std::move(per);
        methods.push_back(std::move(mj));
    }
    j["methods"] = std::move(methods);
    return j.dump(2) + "\n";
}

std::string to_table(const EvalReport& report) {
    std::size_t width = 6;
    for (const auto& m : report.methods) width = std::max(width, m.method.size());
    std::ostringstream out;
    char buf[64];
    out << std::string(width, ' ');
    for (std::size_t k : report.ks) {
        std::snprintf(buf, sizeof buf, "  %9s", ("R@" + std::to_string(k)).c_str());
        out << buf;
    }
    out << '\n';
    for (const auto& m : report.methods) {
        out << m.method << std::string(width - m.method.size(), ' ');
        for (std::size_t k : report.ks) {
            std::snprintf(buf, sizeof buf, "  %9.2f", 100.0 * m.mean_recall.at(k));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

std::vector<std::string> td_retrieve(const DecomposedQuery& decomposed, const TextRetriever& base, std::size_t k) {
    if (decomposed.subqueries.empty())
        throw EvaluationError("decomposition for '" + decomposed.query_id + "' has no subqueries");
    std::vector<std::vector<std::string>> lists;
    lists.reserve(decomposed.subqueries.size());
    for (const auto& sub : decomposed.subqueries) lists.push_back(base(sub, k));
    return interleave(lists, k);
}

Retriever make_td_retriever(const std::vector<DecomposedQuery>& decompositions, TextRetriever base) {
    auto by_id = std::make_shared<std::unordered_map<std::string, DecomposedQuery>>();
    for (const auto& d : decompositions) (*by_id)[d.query_id] = d;
    return [by_id, base = std::move(base)](const ComplexQuery& q, std::size_t k) {
        auto it = by_id->find(q.id);
        if (it == by_id->end()) throw EvaluationError("no decomposition for query '" + q.id + "'");
        return td_retrieve(it->second, base, k);
    };
}

std::vector<UnrolledInstance> unroll_interaction(const Interaction& interaction) {
    if (interaction.assistant_steps() == 0)
        throw EvaluationError("interaction '" + interaction.query_id + "' has no assistant steps");
    std::vector<UnrolledInstance> out;
    std::vector<HistoryEntry> history;
    std::string request = interaction.full_query;
    for (const auto& step : interaction.steps) {
        switch (step.role) {
            case Role::System:
                break;
            case Role::User:
                request += "\n" + step.text;
                history.push_back({step.role, step.text});
                break;
            case Role::Function:
                history.push_back({step.role, step.text});
                break;
            case Role::Assistant:
                if (!step.tool_id || step.tool_id->empty())
                    throw EvaluationError("assistant step without a tool in '" + interaction.query_id + "'");
                out.push_back({interaction.query_id, out.size(), request, history, *step.tool_id, step.text});
                history.push_back({step.role, step.text});
                break;
        }
    }
    return out;
}

const char* const kDefaultInstruction =
    "You are a planner. Given the request, the candidate APIs and the steps taken so far, "
    "choose the next API to call and write the call.";

std::string build_prompt(const UnrolledInstance& instance, std::vector<PromptCandidate> candidates,
                         PromptVariant variant, std::uint64_t shuffle_seed, const std::string& instruction) {
    if (candidates.empty()) throw ConfigError("prompt needs at least one API candidate");
    Rng rng(shuffle_seed);
    shuffle(candidates, rng);

    std::string out;
    out += "### Instruction:\n" + instruction + "\n";
    out += "### Request:\n" + instance.request + "\n";
    out += "### API Candidates:\n";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out += std::to_string(i + 1) + ". " + candidates[i].tool_id;
        if (!candidates[i].metadata.empty()) out += ": " + candidates[i].metadata;
        out += "\n";
    }
    if (variant == PromptVariant::ToolsAndHistory) {
        out += "### History:\n";
        for (const auto& h : instance.history) out += std::string("[") + to_string(h.role) + "] " + h.text + "\n";
    }
    out += "### Response:\n";
    return out;
}

std::vector<PlannerPrediction> parse_predictions(const std::string& jsonl, const std::string& source) {
    using nlohmann::json;
    std::vector<PlannerPrediction> out;
    std::istringstream in(jsonl);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json obj = json::parse(line);
            PlannerPrediction p;
            p.query_id = obj.at("query_id").get<std::string>();
            const auto step = obj.at("step_index").get<long long>();
            if (step < 0) throw ParseError(source, lineno, "negative step_index");
            p.step_index = static_cast<std::size_t>(step);
            p.tool = obj.value("tool", std::string{});
            p.text = obj.value("text", std::string{});
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return out;
}

std::vector<PlannerPrediction> load_predictions(const std::string& path) {
    return parse_predictions(read_file(path), path);
}

namespace {

std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

using Key = std::pair<std::string, std::size_t>;

// Prediction aligned to each instance (nullptr when missing).
std::vector<const PlannerPrediction*> align(const std::vector<PlannerPrediction>& preds,
                                            const std::vector<UnrolledInstance>& instances) {
    std::map<Key, std::size_t> slot;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!slot.emplace(Key{instances[i].query_id, instances[i].step_index}, i).second)
            throw EvaluationError("duplicate instance '" + instances[i].query_id + "' step " +
                                  std::to_string(instances[i].step_index));
    }
    std::vector<const PlannerPrediction*> aligned(instances.size(), nullptr);
    for (const auto& p : preds) {
        auto it = slot.find({p.query_id, p.step_index});
        if (it == slot.end())
            throw EvaluationError("prediction for '" + p.query_id + "' step " + std::to_string(p.step_index) +
                                  " matches no instance");
        if (aligned[it->second])
            throw EvaluationError("duplicate prediction for '" + p.query_id + "' step " +
                                  std::to_string(p.step_index));
        aligned[it->second] = &p;
    }
    return aligned;
}

std::vector<std::vector<std::string>> sentences(std::string_view text) {
    std::vector<std::vector<std::string>> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto toks = tokenize(text.substr(start, end - start));
        if (!toks.empty()) out.push_back(std::move(toks));
        start = end + 1;
    }
    return out;
}

// Positions in `ref` of one longest common subsequence with `cand`.
std::vector<std::size_t> lcs_positions(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
    const std::size_t n = ref.size(), m = cand.size();
    std::vector<std::vector<std::size_t>> t(n + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            t[i][j] = ref[i - 1] == cand[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    std::vector<std::size_t> pos;
    std::size_t i = n, j = m;
    while (i > 0 && j > 0) {
        if (ref[i - 1] == cand[j - 1]) {
            pos.push_back(i - 1);
            --i;
            --j;
        } else if (t[i][j - 1] > t[i - 1][j]) {
            --j;
        } else {
            --i;
        }
    }
    std::reverse(pos.begin(), pos.end());
    return pos;
}

}  // namespace

double tool_accuracy(const std::vector<PlannerPrediction>& preds, const std::vector<UnrolledInstance>& instances) {
    if (instances.empty()) throw EvaluationError("no instances to score");
    const auto aligned = align(preds, instances);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto* p = aligned[i];
        if (p && !p->tool.empty() && p->tool == instances[i].target_tool) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(instances.size());
}

double tool_hallucination(const std::vector<PlannerPrediction>& preds, const ToolCorpus& corpus) {
    if (preds.empty()) return 0.0;
    std::size_t made_up = 0;
    for (const auto& p : preds)
        if (!p.tool.empty() && !corpus.contains(p.tool)) ++made_up;
    return 100.0 * static_cast<double>(made_up) / static_cast<double>(preds.size());
}

int exact_match(std::string_view pred, std::string_view target) { return trim(pred) == trim(target) ? 1 : 0; }

double rouge_lsum(std::string_view pred, std::string_view target) {
    const auto ref = sentences(target);
    const auto cand = sentences(pred);
    if (ref.empty() && cand.empty()) return 1.0;
    if (ref.empty() || cand.empty()) return 0.0;

    std::unordered_map<std::string, std::size_t> ref_left, cand_left;
    std::size_t ref_total = 0, cand_total = 0;
    for (const auto& s : ref)
        for (const auto& t : s) ++ref_left[t], ++ref_total;
    for (const auto& s : cand)
        for (const auto& t : s) ++cand_left[t], ++cand_total;

    // Union of LCS hits per reference sentence, clipped by token counts.
    std::size_t hits = 0;
    for (const auto& r : ref) {
        std::set<std::size_t> uni;
        for (const auto& c : cand)
            for (std::size_t p : lcs_positions(r, c)) uni.insert(p);
        for (std::size_t p : uni) {
            const auto& tok = r[p];
            auto& cl = cand_left[tok];
            auto& rl = ref_left[tok];
            if (cl > 0 && rl > 0) {
                ++hits;
                --cl;
                --rl;
            }
        }
    }
    if (hits == 0) return 0.0;
    const double precision = static_cast<double>(hits) / static_cast<double>(cand_total);
    const double recall = static_cast<double>(hits) / static_cast<double>(ref_total);
    return 2.0 * precision * recall / (precision + recall);
}

PlannerMetrics score_planner(const std::vector<PlannerPrediction>& preds,
                             const std::vector<UnrolledInstance>& instances, const ToolCorpus& corpus) {
    if (instances.empty()) throw EvaluationError("no instances to score");
    const auto aligned = align(preds, instances);
    PlannerMetrics m;
    m.steps = instances.size();
    std::size_t correct = 0, made_up = 0, wrong = 0, empty = 0;
    double em = 0.0, rl = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto* p = aligned[i];
        const std::string tool = p ? p->tool : std::string{};
        const std::string text = p ? p->text : std::string{};
        if (tool.empty())
            ++empty;
        else if (tool == instances[i].target_tool)
            ++correct;
        else if (!corpus.contains(tool))
            ++made_up;
        else
            ++wrong;
        em += exact_match(text, instances[i].target_text);
        rl += rouge_lsum(text, instances[i].target_text);
    }
    const double n = static_cast<double>(instances.size());
    m.tool_accuracy = 100.0 * static_cast<double>(correct) / n;
    m.tool_hallucination = 100.0 * static_cast<double>(made_up) / n;
    m.wrong_existing = 100.0 * static_cast<double>(wrong) / n;
    m.empty = 100.0 * static_cast<double>(empty) / n;
    m.exact_match = em / n;
    m.rouge_lsum = rl / n;
    return m;
}

std::string to_json(const PlannerMetrics& m, const std::string& run_config_json) {
    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "planner";
    if (!run_config_json.empty()) j["run_config"] = ordered_json::parse(run_config_json);
    j["steps"] = m.steps;
    j["tool_accuracy"] = m.tool_accuracy;
    j["tool_hallucination"] = m.tool_hallucination;
    j["wrong_existing_tool"] = m.wrong_existing;
    j["empty_prediction"] = m.empty;
    j["exact_match"] = m.exact_match;
    j["rouge_lsum"] = m.rouge_lsum;
    return j.dump(2) + "\n";
}

std::string to_table(const PlannerMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%8s  %8s  %8s  %8s\n%8.4f  %8.4f  %8.2f  %8.2f\n", "EM", "RLSum", "TA", "TH",
                  m.exact_match, m.rouge_lsum, m.tool_accuracy, m.tool_hallucination);
    return buf;
}

}  // namespace protip

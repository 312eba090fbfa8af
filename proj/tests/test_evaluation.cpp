#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "doctest.h"
#include "protip/error.hpp"
#include "protip/evaluation.hpp"
#include "protip/lexical.hpp"
#include "protip/random.hpp"

using namespace protip;

namespace {

using Ids = std::vector<std::string>;

Step assistant(std::string text, std::string tool) { return {Role::Assistant, std::move(text), std::move(tool)}; }
Step function(std::string text) { return {Role::Function, std::move(text), std::nullopt}; }
Step user(std::string text) { return {Role::User, std::move(text), std::nullopt}; }

}  // namespace

TEST_CASE("recall_at_k examples") {
    const Ids gt{"a", "b"};
    CHECK(recall_at_k(Ids{"a", "c"}, gt, 2) == 0.5);
    CHECK(recall_at_k(Ids{"b", "x", "a"}, gt, 3) == 1.0);
    CHECK(recall_at_k(Ids{"b", "x", "a"}, gt, 2) == 0.5);
    CHECK(recall_at_k(Ids{"x", "y"}, gt, 2) == 0.0);
    CHECK(recall_at_k(Ids{}, gt, 6) == 0.0);
    CHECK_THROWS_AS(recall_at_k(Ids{"a"}, Ids{}, 1), EvaluationError);
}

TEST_CASE("evaluate_retriever aggregates per-query recall") {
    std::vector<ComplexQuery> qs;
    Rng rng(6);
    for (int i = 0; i < 40; ++i) {
        ComplexQuery q{"q" + std::to_string(i), "", {}};
        for (std::size_t j = 0; j < 1 + uniform_index(rng, 4); ++j) q.gt_plan.push_back("t" + std::to_string(uniform_index(rng, 50)));
        std::sort(q.gt_plan.begin(), q.gt_plan.end());
        q.gt_plan.erase(std::unique(q.gt_plan.begin(), q.gt_plan.end()), q.gt_plan.end());
        qs.push_back(q);
    }

    const Retriever oracle = [](const ComplexQuery& q, std::size_t k) {
        Ids out = q.gt_plan;
        out.resize(std::min(k, out.size()));
        return out;
    };
    const auto perfect = evaluate_retriever("oracle", oracle, qs, kDefaultRecallKs);
    for (auto k : kDefaultRecallKs) CHECK(perfect.mean_recall.at(k) == 1.0);

    // Fixed pseudo-random ranking per query.
    const Retriever noisy = [](const ComplexQuery& q, std::size_t k) {
        Rng r(hash_string(q.id, 1));
        Ids all;
        for (int i = 0; i < 50; ++i) all.push_back("t" + std::to_string(i));
        shuffle(all, r);
        all.resize(k);
        return all;
    };
    const auto rep = evaluate_retriever("noisy", noisy, qs, kDefaultRecallKs);
    REQUIRE(rep.per_query.size() == qs.size());
    double prev = -1.0;
    for (auto k : kDefaultRecallKs) {
        double sum = 0.0;
        for (const auto& q : rep.per_query) sum += q.recall.at(k);
        CHECK(std::abs(sum / static_cast<double>(qs.size()) - rep.mean_recall.at(k)) < 1e-12);
        CHECK(rep.mean_recall.at(k) >= prev);
        prev = rep.mean_recall.at(k);
    }
    for (const auto& q : rep.per_query)
        CHECK(q.recall.at(6) <= q.recall.at(20));

    const std::vector<ComplexQuery> one{qs[0]};
    const std::vector<std::size_t> k10{10};
    CHECK(evaluate_retriever("n", noisy, one, k10).mean_recall.at(10) ==
          recall_at_k(noisy(qs[0], 10), qs[0].gt_plan, 10));
}

TEST_CASE("random retriever recall approaches K/N") {
    const std::size_t n = 400;
    std::vector<ComplexQuery> qs;
    for (int i = 0; i < 2000; ++i) qs.push_back({"q" + std::to_string(i), "", {"t0", "t1", "t2"}});
    const Retriever random_ids = [&](const ComplexQuery& q, std::size_t k) {
        Rng r(hash_string(q.id, 9));
        std::vector<std::string> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = "t" + std::to_string(i);
        shuffle(all, r);
        all.resize(k);
        return all;
    };
    const std::vector<std::size_t> ks{20};
    const auto rep = evaluate_retriever("rand", random_ids, qs, ks);
    CHECK(rep.mean_recall.at(20) == doctest::Approx(20.0 / n).epsilon(0.1));
}

TEST_CASE("retriever errors name the query") {
    const std::vector<ComplexQuery> qs{{"q7", "", {"a"}}};
    const Retriever broken = [](const ComplexQuery&, std::size_t) -> Ids { throw std::runtime_error("boom"); };
    try {
        evaluate_retriever("x", broken, qs, kDefaultRecallKs);
        FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
        CHECK(std::string(e.what()).find("q7") != std::string::npos);
    }
}

TEST_CASE("td_retrieve") {
    ToolCorpus c;
    c.add({"a", "", "rain umbrella"});
    c.add({"b", "", "rain coat"});
    c.add({"c", "", "train ticket"});
    c.add({"d", "", "train station"});
    const auto idx = Bm25Index::build(c);
    const TextRetriever base = [&](std::string_view text, std::size_t k) {
        Ids out;
        for (const auto& r : idx.topk(text, k)) out.push_back(r.id);
        return out;
    };
    CHECK(td_retrieve({"q", {"rain umbrella"}}, base, 3) == base("rain umbrella", 3));
    const auto two = td_retrieve({"q", {"umbrella", "ticket"}}, base, 4);
    CHECK(Ids(two.begin(), two.begin() + 2) == Ids{"a", "c"});
    CHECK(td_retrieve({"q", {"rain coat", "rain coat"}}, base, 3) == base("rain coat", 3));

    const auto td = make_td_retriever({{"q1", {"umbrella", "ticket"}}}, base);
    CHECK(td({"q1", "", {"a"}}, 2) == Ids{"a", "c"});
    CHECK_THROWS_AS(td({"q2", "", {"a"}}, 2), EvaluationError);
}

TEST_CASE("reports serialise") {
    EvalReport r;
    r.query_count = 1;
    r.ks = {6};
    r.methods.push_back({"bm25", {{6, 0.5}}, {{"q", {{6, 0.5}}}}});
    const std::string json = to_json(r, R"({"seed":1})");
    CHECK(json.find("\"bm25\"") != std::string::npos);
    CHECK(json.find("\"run_config\"") != std::string::npos);
    CHECK(to_table(r).find("50.00") != std::string::npos);
}

TEST_CASE("unroll examples") {
    Interaction two{"q", "book a trip", {assistant("call a", "a"), function("ok"), assistant("call b", "b")}};
    const auto xs = unroll_interaction(two);
    REQUIRE(xs.size() == 2);
    CHECK(xs[0].history.empty());
    CHECK(xs[1].history == std::vector<HistoryEntry>{{Role::Assistant, "call a"}, {Role::Function, "ok"}});
    CHECK(xs[1].target_tool == "b");
    CHECK(xs[1].request == "book a trip");

    Interaction one{"q", "x", {assistant("only", "z")}};
    const auto single = unroll_interaction(one);
    REQUIRE(single.size() == 1);
    CHECK(single[0].history.empty());

    Interaction mid{"q", "x", {assistant("s1", "a"), user("also y"), {Role::System, "sys", std::nullopt}, assistant("s2", "b")}};
    const auto m = unroll_interaction(mid);
    CHECK(m[0].request == "x");
    CHECK(m[1].request == "x\nalso y");
    CHECK(m[1].history.size() == 2);
}

TEST_CASE("unrolled history is the step prefix") {
    Rng rng(31);
    for (int t = 0; t < 50; ++t) {
        Interaction it{"q", "req", {}};
        const std::size_t n = 1 + uniform_index(rng, 10);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = uniform_index(rng, 3);
            if (r == 0 || i + 1 == n)
                it.steps.push_back(assistant("a" + std::to_string(i), "t"));
            else if (r == 1)
                it.steps.push_back(function("f" + std::to_string(i)));
            else
                it.steps.push_back(user("u" + std::to_string(i)));
        }
        const auto xs = unroll_interaction(it);
        CHECK(xs.size() == it.assistant_steps());
        std::size_t seen = 0;
        for (std::size_t i = 0; i < it.steps.size(); ++i) {
            if (it.steps[i].role != Role::Assistant) continue;
            const auto& x = xs[seen++];
            REQUIRE(x.history.size() == i);
            for (std::size_t j = 0; j < i; ++j) {
                CHECK(x.history[j].role == it.steps[j].role);
                CHECK(x.history[j].text == it.steps[j].text);
            }
        }
    }
}

TEST_CASE("prompt layout and candidate shuffling") {
    UnrolledInstance x{"q", 1, "plan my day", {{Role::Assistant, "did a"}}, "b", "call b"};
    std::vector<PromptCandidate> cands;
    for (int i = 0; i < 8; ++i) cands.push_back({"tool" + std::to_string(i), "meta" + std::to_string(i)});

    const auto t = build_prompt(x, cands, PromptVariant::Tools, 1);
    CHECK(t.find("### History:") == std::string::npos);
    CHECK(t.find("### Instruction:") < t.find("### Request:"));
    CHECK(t.find("### Request:") < t.find("### API Candidates:"));
    const auto th = build_prompt(x, cands, PromptVariant::ToolsAndHistory, 1);
    CHECK(th.find("### API Candidates:") < th.find("### History:"));
    CHECK(th.find("[assistant] did a") != std::string::npos);

    CHECK(build_prompt(x, cands, PromptVariant::Tools, 1) == t);
    bool differs = false;
    for (std::uint64_t s = 2; s < 6; ++s) {
        const auto other = build_prompt(x, cands, PromptVariant::Tools, s);
        differs = differs || other != t;
        for (const auto& c : cands) CHECK(other.find(c.tool_id + ": " + c.metadata) != std::string::npos);
    }
    CHECK(differs);
    CHECK_THROWS_AS(build_prompt(x, {}, PromptVariant::Tools, 1), ConfigError);
}

TEST_CASE("tool accuracy and hallucination") {
    const std::vector<UnrolledInstance> xs{{"q", 0, "", {}, "a", ""}, {"q", 1, "", {}, "c", ""}};
    std::vector<PlannerPrediction> preds{{"q", 0, "a", ""}, {"q", 1, "b", ""}};
    CHECK(tool_accuracy(preds, xs) == 50.0);
    preds[1].tool = "c";
    CHECK(tool_accuracy(preds, xs) == 100.0);
    preds[1].tool = "";
    CHECK(tool_accuracy(preds, xs) == 50.0);
    CHECK(tool_accuracy({preds[0]}, xs) == 50.0);
    CHECK_THROWS_AS(tool_accuracy({{"zz", 0, "a", ""}}, xs), EvaluationError);

    ToolCorpus c;
    c.add({"a", "", "x"});
    c.add({"c", "", "x"});
    CHECK(tool_hallucination({{"q", 0, "made_up_tool", ""}}, c) == 100.0);
    CHECK(tool_hallucination({{"q", 0, "a", ""}, {"q", 1, "c", ""}}, c) == 0.0);
    CHECK(tool_hallucination({{"q", 0, "", ""}}, c) == 0.0);
}

TEST_CASE("planner outcome categories partition the steps") {
    Rng rng(2);
    ToolCorpus c;
    for (int i = 0; i < 5; ++i) c.add({"t" + std::to_string(i), "", "x"});
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<UnrolledInstance> xs;
        std::vector<PlannerPrediction> ps;
        for (std::size_t i = 0; i < 12; ++i) {
            xs.push_back({"q", i, "", {}, "t" + std::to_string(uniform_index(rng, 5)), "target"});
            const char* pool[] = {"t0", "t1", "t2", "ghost", ""};
            ps.push_back({"q", i, pool[uniform_index(rng, 5)], "pred"});
        }
        const auto m = score_planner(ps, xs, c);
        CHECK(m.tool_accuracy + m.tool_hallucination + m.wrong_existing + m.empty == doctest::Approx(100.0));
        CHECK(m.tool_accuracy == tool_accuracy(ps, xs));
    }
}

TEST_CASE("exact match and ROUGE-Lsum") {
    CHECK(exact_match("abc", "abc") == 1);
    CHECK(exact_match("abc", "abd") == 0);
    CHECK(exact_match("abc\n", "abc") == 1);
    CHECK(rouge_lsum("a b c", "a b c") == 1.0);
    CHECK(rouge_lsum("a b", "c d") == 0.0);
    CHECK(std::abs(rouge_lsum("the cat", "the cat sat") - 0.8) < 1e-12);
    CHECK(rouge_lsum("", "") == 1.0);
    CHECK(rouge_lsum("", "x") == 0.0);
    CHECK(rouge_lsum("x", "") == 0.0);
    // Union LCS across reference sentences.
    CHECK(std::abs(rouge_lsum("a b\nc d", "a b c d") - 1.0) < 1e-12);
}

TEST_CASE("ROUGE-Lsum is symmetric for single-sentence texts") {
    Rng rng(40);
    auto text = [&] {
        std::string s;
        for (std::size_t i = 0; i < 1 + uniform_index(rng, 8); ++i) s += "w" + std::to_string(uniform_index(rng, 6)) + " ";
        return s;
    };
    for (int t = 0; t < 200; ++t) {
        const auto a = text(), b = text();
        CHECK(std::abs(rouge_lsum(a, b) - rouge_lsum(b, a)) < 1e-12);
    }
}

TEST_CASE("predictions parse") {
    const auto p = parse_predictions(R"({"query_id":"q","step_index":2,"tool":"x","text":"call x"})");
    REQUIRE(p.size() == 1);
    CHECK(p[0].step_index == 2);
    CHECK_THROWS_AS(parse_predictions(R"({"query_id":"q"})"), ParseError);
}

#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "protip/corpus.hpp"
#include "protip/lexical.hpp"
#include "protip/random.hpp"

using namespace protip;

namespace {

ToolCorpus hand_corpus() { return load_corpus(std::string(PROTIP_TEST_DATA) + "/bm25_tools.jsonl"); }

}  // namespace

TEST_CASE("tokenize") {
    CHECK(tokenize("Get Weather-API!") == std::vector<std::string>{"get", "weather", "api"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a  b") == std::vector<std::string>{"a", "b"});
    CHECK(tokenize("snake_case42 x") == std::vector<std::string>{"snake", "case42", "x"});
}

TEST_CASE("index statistics") {
    ToolCorpus c;
    c.add({"a", "", "w1 w2"});
    c.add({"b", "", "w1 w2 w3 w4"});
    c.add({"c", "", "w1 w2 w3 w4 w5 w6"});
    const auto idx = Bm25Index::build(c);
    CHECK(idx.average_length() == 4.0);
    CHECK(idx.document_frequency("w1") == 3);
    CHECK(idx.document_frequency("w5") == 1);
    CHECK(idx.document_frequency("zz") == 0);
    CHECK(idx.idf("w1") > 0.0);
    CHECK(Bm25Index::build(c) == idx);
}

TEST_CASE("empty corpus gives an empty index") {
    const auto idx = Bm25Index::build(ToolCorpus{});
    CHECK(idx.size() == 0);
    CHECK(idx.topk("anything", 5).empty());
}

// Scores were evaluated independently from the Okapi formula
// idf = ln((N - df + 0.5) / (df + 0.5) + 1), k1 = 1.2, b = 0.75, avgdl = 5.8.
TEST_CASE("hand corpus matches the frozen Okapi values") {
    const auto idx = Bm25Index::build(hand_corpus());
    CHECK(idx.average_length() == doctest::Approx(5.8).epsilon(1e-15));
    const auto r = idx.topk("rain forecast", 5);
    REQUIRE(r.size() == 2);
    CHECK(r[0].id == "t2");
    CHECK(r[1].id == "t4");
    CHECK(std::abs(r[0].score - 2.6084874591873235) < 1e-9);
    CHECK(std::abs(r[1].score - 1.1375744489445787) < 1e-9);

    const auto r2 = idx.topk("calendar events rain", 5);
    REQUIRE(r2.size() == 3);
    CHECK(r2[0].id == "t5");
    CHECK(std::abs(r2[0].score - 3.676335378419971) < 1e-9);
    CHECK(r2[1].id == "t4");
    CHECK(r2[2].id == "t2");
    CHECK(std::abs(r2[2].score - 0.8071518127626996) < 1e-9);
}

TEST_CASE("unique match ranks first, no match gives nothing") {
    const auto idx = Bm25Index::build(hand_corpus());
    CHECK(idx.topk("headlines", 3).front().id == "t3");
    CHECK(idx.topk("quantum teleportation", 3).empty());
    CHECK(idx.score(tokenize("quantum"), 0) == 0.0);
}

TEST_CASE("ties break by ascending id") {
    ToolCorpus c;
    c.add({"z", "", "alpha beta"});
    c.add({"m", "", "alpha beta"});
    c.add({"a", "", "alpha beta"});
    const auto r = Bm25Index::build(c).topk("alpha", 3);
    REQUIRE(r.size() == 3);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "m");
    CHECK(r[2].id == "z");
}

TEST_CASE("ranking is prefix-stable in k") {
    Rng rng(17);
    ToolCorpus c;
    for (int i = 0; i < 40; ++i) {
        std::string d;
        for (int j = 0; j < 6; ++j) d += "w" + std::to_string(uniform_index(rng, 25)) + " ";
        c.add({"t" + std::to_string(i), "", d});
    }
    const auto idx = Bm25Index::build(c);
    for (int trial = 0; trial < 20; ++trial) {
        std::string q = "w" + std::to_string(uniform_index(rng, 25)) + " w" + std::to_string(uniform_index(rng, 25));
        const auto full = idx.topk(q, c.size());
        for (std::size_t k = 1; k < full.size(); ++k) {
            const auto part = idx.topk(q, k);
            CHECK(std::equal(part.begin(), part.end(), full.begin()));
        }
    }
}

TEST_CASE("invalid parameters are rejected") {
    CHECK_THROWS(Bm25Index::build(hand_corpus(), {0.0, 0.5}));
    CHECK_THROWS(Bm25Index::build(hand_corpus(), {1.2, 1.5}));
    CHECK_THROWS(Bm25Index::build(hand_corpus()).topk("rain", 0));
}

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "protip/corpus.hpp"

namespace protip {

// Lowercases ASCII and splits on every non-alphanumeric byte.
std::vector<std::string> tokenize(std::string_view text);

struct ScoredTool {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredTool&) const = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    bool operator==(const Bm25Params&) const = default;
};

// Okapi BM25 over tool documents (name + description).
class Bm25Index {
public:
    static Bm25Index build(const ToolCorpus& corpus, Bm25Params params = {});

    // Descending score, ties by ascending id, zero scores omitted.
    std::vector<ScoredTool> topk(std::string_view query_text, std::size_t k) const;

    // Raw score of one document (by position) for a tokenized query.
    double score(const std::vector<std::string>& query_tokens, std::size_t doc) const;

    double idf(const std::string& term) const;
    std::size_t document_frequency(const std::string& term) const;

    std::size_t size() const noexcept { return ids_.size(); }
    double average_length() const noexcept { return avgdl_; }
    std::size_t length(std::size_t doc) const { return lengths_.at(doc); }
    const Bm25Params& params() const noexcept { return params_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    bool operator==(const Bm25Index&) const = default;

private:
    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::unordered_map<std::string, std::size_t>> term_counts_;
    std::vector<std::size_t> lengths_;
    std::unordered_map<std::string, std::size_t> df_;
    double avgdl_ = 0.0;
};

}  // namespace protip

#include "protip/lexical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "protip/error.hpp"

namespace protip {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

Bm25Index Bm25Index::build(const ToolCorpus& corpus, Bm25Params params) {
    if (!(params.k1 > 0.0)) throw ConfigError("BM25 k1 must be positive");
    if (!(params.b >= 0.0 && params.b <= 1.0)) throw ConfigError("BM25 b must lie in [0, 1]");

    Bm25Index index;
    index.params_ = params;
    std::size_t total = 0;
    for (const auto& tool : corpus) {
        auto tokens = tokenize(tool_document(tool));
        std::unordered_map<std::string, std::size_t> counts;
        for (auto& t : tokens) ++counts[t];
        for (const auto& [term, _] : counts) ++index.df_[term];
        total += tokens.size();
        index.ids_.push_back(tool.id);
        index.lengths_.push_back(tokens.size());
        index.term_counts_.push_back(std::move(counts));
    }
    if (!index.ids_.empty()) index.avgdl_ = static_cast<double>(total) / static_cast<double>(index.ids_.size());
    return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
    const auto n = static_cast<double>(ids_.size());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::score(const std::vector<std::string>& query_tokens, std::size_t doc) const {
    const auto& counts = term_counts_.at(doc);
    const double len_norm = avgdl_ > 0.0 ? static_cast<double>(lengths_[doc]) / avgdl_ : 0.0;
    const double k1 = params_.k1;
    const double b = params_.b;
    double s = 0.0;
    for (const auto& term : query_tokens) {
        auto it = counts.find(term);
        if (it == counts.end()) continue;
        const auto tf = static_cast<double>(it->second);
        s += idf(term) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
    }
    return s;
}

std::vector<ScoredTool> Bm25Index::topk(std::string_view query_text, std::size_t k) const {
    if (k == 0) throw ConfigError("k must be at least 1");
    const auto query = tokenize(query_text);
    std::vector<ScoredTool> scored;
    for (std::size_t d = 0; d < ids_.size(); ++d) {
        const double s = score(query, d);
        if (s > 0.0) scored.push_back({ids_[d], s});
    }
    auto cmp = [](const ScoredTool& a, const ScoredTool& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    };
    if (scored.size() > k) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), cmp);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), cmp);
    }
    return scored;
}

}  // namespace protip

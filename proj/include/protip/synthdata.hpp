#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "protip/corpus.hpp"

namespace protip {

struct SynthConfig {
    std::size_t n_tools = 200;
    std::size_t n_queries = 300;
    std::size_t min_subtasks = 2;
    std::size_t max_subtasks = 4;
    // Core phrase length of every tool.
    std::size_t tokens_per_tool = 6;
    std::size_t vocab_size = 5000;
    // Fraction of a tool description made of shared distractor tokens.
    double overlap_rate = 0.3;
    std::size_t distractor_pool = 16;
    std::size_t filler_vocab_size = 32;
    std::size_t fillers_per_subtask = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthDataset {
    ToolCorpus corpus;
    std::vector<ComplexQuery> queries;
    std::vector<DecomposedQuery> decompositions;
};

SynthDataset generate(const SynthConfig& config);

struct QuerySplit {
    std::vector<ComplexQuery> train;
    std::vector<ComplexQuery> test;
};

// Seeded shuffle, then the first round(fraction * n) queries train.
QuerySplit split(const std::vector<ComplexQuery>& queries, double train_fraction, std::uint64_t seed);

}  // namespace protip

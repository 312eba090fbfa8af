#include "protip/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "protip/error.hpp"
#include "protip/random.hpp"

namespace protip {

namespace {

std::string content_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "kw%05zu", i);
    return buf;
}

std::string filler_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "glue%03zu", i);
    return buf;
}

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
    return buf;
}

std::size_t distractors_per_tool(const SynthConfig& c) {
    return static_cast<std::size_t>(
        std::lround(c.overlap_rate / (1.0 - c.overlap_rate) * static_cast<double>(c.tokens_per_tool)));
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_tools == 0) throw ConfigError("n_tools must be positive");
    if (min_subtasks < 1 || min_subtasks > max_subtasks || max_subtasks > kMaxSubtasks)
        throw ConfigError("subtask range must satisfy 1 <= min <= max <= 6");
    if (max_subtasks > n_tools) throw ConfigError("more subtasks than tools");
    if (tokens_per_tool == 0) throw ConfigError("tokens_per_tool must be positive");
    if (!(overlap_rate >= 0.0 && overlap_rate < 1.0)) throw ConfigError("overlap rate must lie in [0, 1)");
    if (overlap_rate > 0.0 && distractor_pool == 0) throw ConfigError("distractor pool is empty");
    if (fillers_per_subtask > 0 && filler_vocab_size == 0) throw ConfigError("filler vocabulary is empty");
}

SynthDataset generate(const SynthConfig& config) {
    config.validate();
    const std::size_t pool = config.overlap_rate > 0.0 ? config.distractor_pool : 0;
    const std::size_t needed = config.n_tools * config.tokens_per_tool + pool;
    if (needed > config.vocab_size)
        throw ConfigError("vocabulary exhausted: need " + std::to_string(needed) + " tokens, have " +
                          std::to_string(config.vocab_size));

    Rng rng(config.seed);
    std::vector<std::size_t> vocab(config.vocab_size);
    for (std::size_t i = 0; i < vocab.size(); ++i) vocab[i] = i;
    shuffle(vocab, rng);

    std::size_t next = 0;
    std::vector<std::string> distractors;
    for (std::size_t i = 0; i < pool; ++i) distractors.push_back(content_token(vocab[next++]));

    SynthDataset data;
    std::vector<std::vector<std::string>> phrases(config.n_tools);
    const std::size_t n_distract = pool ? distractors_per_tool(config) : 0;
    for (std::size_t t = 0; t < config.n_tools; ++t) {
        for (std::size_t j = 0; j < config.tokens_per_tool; ++j) phrases[t].push_back(content_token(vocab[next++]));
        std::vector<std::string> words = phrases[t];
        for (std::size_t j = 0; j < n_distract; ++j)
            words.push_back(distractors[static_cast<std::size_t>(uniform_index(rng, distractors.size()))]);
        shuffle(words, rng);
        data.corpus.add({numbered("t", t), numbered("api_", t), join(words)});
    }

    std::vector<std::size_t> tool_order(config.n_tools);
    const std::size_t span = config.max_subtasks - config.min_subtasks + 1;
    for (std::size_t q = 0; q < config.n_queries; ++q) {
        const std::size_t n = config.min_subtasks + static_cast<std::size_t>(uniform_index(rng, span));
        for (std::size_t i = 0; i < tool_order.size(); ++i) tool_order[i] = i;
        ComplexQuery query{numbered("q", q), {}, {}};
        DecomposedQuery decomposition{query.id, {}};
        for (std::size_t s = 0; s < n; ++s) {
            const auto pick = s + static_cast<std::size_t>(uniform_index(rng, config.n_tools - s));
            std::swap(tool_order[s], tool_order[pick]);
            const std::size_t tool = tool_order[s];
            std::vector<std::string> segment = phrases[tool];
            for (std::size_t f = 0; f < config.fillers_per_subtask; ++f) {
                const auto at = static_cast<std::ptrdiff_t>(uniform_index(rng, segment.size() + 1));
                segment.insert(segment.begin() + at,
                               filler_token(static_cast<std::size_t>(uniform_index(rng, config.filler_vocab_size))));
            }
            query.gt_plan.push_back(data.corpus.tools()[tool].id);
            decomposition.subqueries.push_back(join(segment));
        }
        query.text = join(decomposition.subqueries);
        data.queries.push_back(std::move(query));
        data.decompositions.push_back(std::move(decomposition));
    }
    return data;
}

QuerySplit split(const std::vector<ComplexQuery>& queries, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    shuffle(order, rng);
    const auto n_train =
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(queries.size())));
    QuerySplit out;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.train : out.test).push_back(queries[order[i]]);
    return out;
}

}  // namespace protip

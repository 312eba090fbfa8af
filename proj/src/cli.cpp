#include "protip/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "protip/corpus.hpp"
#include "protip/embedding.hpp"
#include "protip/error.hpp"
#include "protip/evaluation.hpp"
#include "protip/lexical.hpp"
#include "protip/progressive.hpp"
#include "protip/random.hpp"
#include "protip/synthdata.hpp"
#include "protip/training.hpp"

namespace protip {

namespace {

using nlohmann::ordered_json;

// Resolved flags of one invocation; echoed into every report.
struct RunConfig {
    std::string subcommand;
    std::uint64_t seed = 0;

    std::string corpus_path;
    std::string queries_path;
    std::string decompositions_path;
    std::string store_path;
    std::string head_path;
    std::string embeddings_path;
    std::string predictions_path;
    std::string interactions_path;
    std::string output_path;
    std::string report_path;

    std::string method = "protip";
    std::vector<std::string> methods;
    std::size_t k = 10;
    std::vector<std::size_t> ks = kDefaultRecallKs;
    std::string metric = "l2";
    std::size_t max_steps = kDefaultMaxSteps;
    std::string query_text;
    std::string query_id;

    std::size_t dimension = HashedBagOfWords{}.dimension;
    TrainingConfig training;
    SynthConfig synth;
    double train_fraction = 0.8;

    ordered_json to_json() const {
        ordered_json j;
        j["subcommand"] = subcommand;
        j["seed"] = seed;
        auto put_path = [&](const char* key, const std::string& v) {
            if (!v.empty()) j[key] = std::filesystem::path(v).filename().string();
        };
        put_path("corpus", corpus_path);
        put_path("queries", queries_path);
        put_path("decompositions", decompositions_path);
        put_path("store", store_path);
        put_path("head", head_path);
        put_path("embeddings", embeddings_path);
        put_path("predictions", predictions_path);
        put_path("interactions", interactions_path);
        if (subcommand == "eval" && predictions_path.empty()) {
            j["methods"] = methods;
            j["ks"] = ks;
            j["metric"] = metric;
            j["max_steps"] = max_steps;
            j["dimension"] = dimension;
        }
        if (subcommand == "train") {
            j["dimension"] = dimension;
            j["margin"] = training.margin;
            j["batch_size"] = training.batch_size;
            j["learning_rate"] = training.learning_rate;
            j["epochs"] = training.epochs;
            j["output_dimension"] = training.output_dimension;
        }
        return j;
    }
};

Metric parse_metric(const std::string& s) {
    try {
        return metric_from_string(s);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

std::optional<EmbeddingTable> maybe_table(const RunConfig& rc) {
    if (rc.embeddings_path.empty()) return std::nullopt;
    return load_embedding_table(rc.embeddings_path);
}

// The encoder of a run: the trained head when given, else an identity head
// over the configured base featurizer.
Encoder resolve_encoder(const RunConfig& rc, const std::optional<EmbeddingTable>& table) {
    if (!rc.head_path.empty()) return load_head(rc.head_path, table ? &*table : nullptr);
    if (table) return Encoder(BaseFeaturizer(*table));
    return Encoder(HashedBagOfWords{rc.dimension, SubSeeds::from(rc.seed).hash});
}

BaseFeaturizer resolve_base(const RunConfig& rc, const std::optional<EmbeddingTable>& table) {
    if (table) return BaseFeaturizer(*table);
    return BaseFeaturizer(HashedBagOfWords{rc.dimension, SubSeeds::from(rc.seed).hash});
}

VectorStore resolve_store(const RunConfig& rc, const Encoder& encoder, const ToolCorpus& corpus) {
    if (rc.store_path.empty()) return build_store(encoder, corpus);
    VectorStore store = load_store(rc.store_path);
    if (store.dimension() != encoder.output_dimension() && !store.empty())
        throw DimensionError("store dimension " + std::to_string(store.dimension()) + " does not match encoder " +
                             std::to_string(encoder.output_dimension()));
    return store;
}

std::vector<std::string> ids_of(const std::vector<ScoredTool>& ranked) {
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.id);
    return out;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

void cmd_synth(const RunConfig& rc, std::ostream& out) {
    require(rc.output_path, "--out");
    SynthConfig cfg = rc.synth;
    const SubSeeds seeds = SubSeeds::from(rc.seed);
    cfg.seed = seeds.synth;
    const SynthDataset data = generate(cfg);
    const QuerySplit parts = split(data.queries, rc.train_fraction, seeds.split);

    namespace fs = std::filesystem;
    fs::create_directories(rc.output_path);
    const fs::path dir(rc.output_path);
    write_file((dir / "tools.jsonl").string(), to_jsonl(data.corpus));
    write_file((dir / "queries.jsonl").string(), to_jsonl(data.queries));
    write_file((dir / "train.jsonl").string(), to_jsonl(parts.train));
    write_file((dir / "test.jsonl").string(), to_jsonl(parts.test));
    write_file((dir / "decompositions.jsonl").string(), to_jsonl(data.decompositions));
    out << "wrote " << data.corpus.size() << " tools, " << parts.train.size() << " train and " << parts.test.size()
        << " test queries to " << rc.output_path << "\n";
}

void cmd_stats(const RunConfig& rc, std::ostream& out) {
    require(rc.queries_path, "--queries");
    std::vector<ComplexQuery> queries;
    ordered_json j;
    j["schema_version"] = 1;
    if (!rc.corpus_path.empty()) {
        const ToolCorpus corpus = load_corpus(rc.corpus_path);
        CleanedQueries cleaned = load_queries(rc.queries_path, corpus);
        ordered_json removed = ordered_json::array();
        for (const auto& r : cleaned.report.removed)
            removed.push_back({{"query_id", r.query_id}, {"reason", to_string(r.reason)},
                               {"unknown_tools", r.unknown_tools}});
        j["removed"] = std::move(removed);
        queries = std::move(cleaned.kept);
    } else {
        queries = parse_queries(read_file(rc.queries_path), rc.queries_path);
    }
    const DatasetStats stats = dataset_stats(queries);
    j["count"] = stats.count;
    ordered_json hist = ordered_json::object();
    for (const auto& [n, c] : stats.histogram) hist[std::to_string(n)] = c;
    j["histogram"] = std::move(hist);
    j["mean"] = stats.mean ? ordered_json(*stats.mean) : ordered_json(nullptr);
    j["stddev"] = stats.stddev ? ordered_json(*stats.stddev) : ordered_json(nullptr);
    out << j.dump(2) << "\n";
}

void cmd_index(const RunConfig& rc, std::ostream& out) {
    require(rc.corpus_path, "--corpus");
    require(rc.output_path, "--out");
    const ToolCorpus corpus = load_corpus(rc.corpus_path);
    const auto table = maybe_table(rc);
    const Encoder encoder = resolve_encoder(rc, table);
    const VectorStore store = build_store(encoder, corpus);
    save_store(store, rc.output_path);
    out << "indexed " << store.size() << " tools (dimension " << store.dimension() << ") into " << rc.output_path
        << "\n";
}

void cmd_train(const RunConfig& rc, std::ostream& out) {
    require(rc.corpus_path, "--corpus");
    require(rc.queries_path, "--queries");
    require(rc.output_path, "--out");
    const ToolCorpus corpus = load_corpus(rc.corpus_path);
    const CleanedQueries cleaned = load_queries(rc.queries_path, corpus);
    const auto table = maybe_table(rc);
    TrainingConfig cfg = rc.training;
    cfg.seed = SubSeeds::from(rc.seed).train;
    const TrainResult result = train(cleaned.kept, corpus, resolve_base(rc, table), cfg);
    save_head(result.encoder, rc.output_path);

    ordered_json j = ordered_json::parse(report_to_json(result.report, cfg));
    j["run_config"] = rc.to_json();
    j["removed_queries"] = cleaned.report.removed.size();
    const std::string text = j.dump(2) + "\n";
    if (!rc.report_path.empty()) write_file(rc.report_path, text);
    out << text;
}

// Builds the retriever for one method name.
Retriever make_retriever(const std::string& method, const RunConfig& rc, const ToolCorpus& corpus,
                         const std::shared_ptr<const Encoder>& encoder, const std::shared_ptr<const VectorStore>& store,
                         const std::shared_ptr<const Bm25Index>& bm25,
                         const std::vector<DecomposedQuery>& decompositions) {
    (void)corpus;
    const Metric metric = parse_metric(rc.metric);
    TextRetriever bm25_text = [bm25](std::string_view text, std::size_t k) { return ids_of(bm25->topk(text, k)); };
    TextRetriever ss_text = [encoder, store](std::string_view text, std::size_t k) {
        return ids_of(nearest_topk(*store, encoder->embed(text), k, Metric::CosineDesc));
    };
    if (method == "bm25") return [bm25_text](const ComplexQuery& q, std::size_t k) { return bm25_text(q.text, k); };
    if (method == "ss") return [ss_text](const ComplexQuery& q, std::size_t k) { return ss_text(q.text, k); };
    if (method == "td-bm25" || method == "td-ss") {
        if (decompositions.empty()) throw UsageError(method + " needs --decompositions");
        return make_td_retriever(decompositions, method == "td-bm25" ? bm25_text : ss_text);
    }
    if (method == "protip") {
        const std::size_t max_steps = rc.max_steps;
        return [encoder, store, metric, max_steps](const ComplexQuery& q, std::size_t k) {
            return progressive_retrieve(*encoder, *store, q.text, k, max_steps, metric);
        };
    }
    throw UsageError("unknown method '" + method + "'");
}

struct RetrievalContext {
    ToolCorpus corpus;
    std::shared_ptr<const Encoder> encoder;
    std::shared_ptr<const VectorStore> store;
    std::shared_ptr<const Bm25Index> bm25;
    std::vector<DecomposedQuery> decompositions;
};

RetrievalContext load_context(const RunConfig& rc, const std::vector<std::string>& methods) {
    RetrievalContext ctx;
    ctx.corpus = load_corpus(rc.corpus_path);
    const bool dense = std::any_of(methods.begin(), methods.end(), [](const std::string& m) {
        return m == "ss" || m == "td-ss" || m == "protip";
    });
    if (dense) {
        const auto table = maybe_table(rc);
        ctx.encoder = std::make_shared<const Encoder>(resolve_encoder(rc, table));
        ctx.store = std::make_shared<const VectorStore>(resolve_store(rc, *ctx.encoder, ctx.corpus));
    }
    ctx.bm25 = std::make_shared<const Bm25Index>(Bm25Index::build(ctx.corpus));
    if (!rc.decompositions_path.empty()) ctx.decompositions = load_decompositions(rc.decompositions_path);
    return ctx;
}

void cmd_retrieve(const RunConfig& rc, std::ostream& out) {
    require(rc.corpus_path, "--corpus");
    if (rc.k == 0) throw UsageError("--k must be at least 1");
    RetrievalContext ctx = load_context(rc, {rc.method});
    const Metric metric = parse_metric(rc.metric);

    char buf[128];
    auto print = [&](std::size_t rank, const std::string& id, double score) {
        std::snprintf(buf, sizeof buf, "%zu\t%s\t%.9g\n", rank, id.c_str(), score);
        out << buf;
    };

    if (rc.method == "bm25" || rc.method == "ss" || rc.method == "protip") {
        if (rc.query_text.empty()) throw UsageError("missing required option --query");
    }
    if (rc.method == "bm25") {
        const auto ranked = ctx.bm25->topk(rc.query_text, rc.k);
        for (std::size_t i = 0; i < ranked.size(); ++i) print(i + 1, ranked[i].id, ranked[i].score);
        return;
    }
    if (rc.method == "ss") {
        const auto ranked = nearest_topk(*ctx.store, ctx.encoder->embed(rc.query_text), rc.k, Metric::CosineDesc);
        for (std::size_t i = 0; i < ranked.size(); ++i) print(i + 1, ranked[i].id, ranked[i].score);
        return;
    }
    if (rc.method == "protip") {
        const ProgressiveTrace trace =
            progressive_trace(*ctx.encoder, *ctx.store, rc.query_text, rc.k, rc.max_steps, metric);
        for (std::size_t i = 0; i < trace.merged.size(); ++i) {
            double score = 0.0;
            for (const auto& step : trace.steps) {
                auto it = std::find_if(step.ranked.begin(), step.ranked.end(),
                                       [&](const ScoredTool& s) { return s.id == trace.merged[i]; });
                if (it != step.ranked.end()) {
                    score = it->score;
                    break;
                }
            }
            print(i + 1, trace.merged[i], score);
        }
        return;
    }
    if (rc.method == "td-bm25" || rc.method == "td-ss") {
        if (rc.query_id.empty()) throw UsageError(rc.method + " needs --query-id");
        const Retriever r = make_retriever(rc.method, rc, ctx.corpus, ctx.encoder, ctx.store, ctx.bm25,
                                           ctx.decompositions);
        const auto ids = r(ComplexQuery{rc.query_id, rc.query_text, {}}, rc.k);
        for (std::size_t i = 0; i < ids.size(); ++i) print(i + 1, ids[i], 0.0);
        return;
    }
    throw UsageError("unknown method '" + rc.method + "'");
}

void cmd_eval_planner(const RunConfig& rc, std::ostream& out) {
    require(rc.interactions_path, "--interactions");
    require(rc.corpus_path, "--corpus");
    const ToolCorpus corpus = load_corpus(rc.corpus_path);
    std::vector<UnrolledInstance> instances;
    for (const auto& it : load_interactions(rc.interactions_path)) {
        auto unrolled = unroll_interaction(it);
        instances.insert(instances.end(), unrolled.begin(), unrolled.end());
    }
    const PlannerMetrics m = score_planner(load_predictions(rc.predictions_path), instances, corpus);
    const std::string report = to_json(m, rc.to_json().dump());
    if (!rc.output_path.empty()) write_file(rc.output_path, report);
    out << to_table(m);
}

void cmd_eval(RunConfig rc, std::ostream& out) {
    if (!rc.predictions_path.empty()) return cmd_eval_planner(rc, out);
    require(rc.corpus_path, "--corpus");
    require(rc.queries_path, "--queries");
    if (rc.methods.empty()) {
        rc.methods = {"bm25", "ss"};
        if (!rc.decompositions_path.empty()) {
            rc.methods.push_back("td-bm25");
            rc.methods.push_back("td-ss");
        }
        rc.methods.push_back("protip");
    }
    if (rc.ks.empty() || std::find(rc.ks.begin(), rc.ks.end(), 0u) != rc.ks.end())
        throw UsageError("--ks must be positive integers");

    RetrievalContext ctx = load_context(rc, rc.methods);
    const CleanedQueries cleaned = load_queries(rc.queries_path, ctx.corpus);

    EvalReport report;
    report.query_count = cleaned.kept.size();
    report.ks = rc.ks;
    for (const auto& method : rc.methods) {
        const Retriever r =
            make_retriever(method, rc, ctx.corpus, ctx.encoder, ctx.store, ctx.bm25, ctx.decompositions);
        report.methods.push_back(evaluate_retriever(method, r, cleaned.kept, rc.ks));
    }
    const std::string json = to_json(report, rc.to_json().dump());
    if (!rc.output_path.empty()) write_file(rc.output_path, json);
    out << to_table(report);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig rc;
    CLI::App app{"Progressive tool retrieval: indexing, training, retrieval and evaluation"};
    app.require_subcommand(1);
    app.add_option("--seed", rc.seed, "Master seed for every random stream")->default_val(0);

    auto add_encoder_opts = [&](CLI::App* sub) {
        sub->add_option("--head", rc.head_path, "Trained head file");
        sub->add_option("--embeddings", rc.embeddings_path, "Precomputed base embeddings (JSONL key/vector)");
        sub->add_option("--dim", rc.dimension, "Hashed featurizer dimension")->capture_default_str();
        sub->add_option("--seed", rc.seed, "Master seed");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic toolbox and queries");
    synth->add_option("--out", rc.output_path, "Output directory")->required();
    synth->add_option("--n-tools", rc.synth.n_tools)->capture_default_str();
    synth->add_option("--n-queries", rc.synth.n_queries)->capture_default_str();
    synth->add_option("--min-subtasks", rc.synth.min_subtasks)->capture_default_str();
    synth->add_option("--max-subtasks", rc.synth.max_subtasks)->capture_default_str();
    synth->add_option("--tokens-per-tool", rc.synth.tokens_per_tool)->capture_default_str();
    synth->add_option("--vocab", rc.synth.vocab_size)->capture_default_str();
    synth->add_option("--overlap", rc.synth.overlap_rate)->capture_default_str();
    synth->add_option("--distractor-pool", rc.synth.distractor_pool)->capture_default_str();
    synth->add_option("--fillers", rc.synth.fillers_per_subtask)->capture_default_str();
    synth->add_option("--train-fraction", rc.train_fraction)->capture_default_str();
    synth->add_option("--seed", rc.seed, "Master seed");

    auto* stats = app.add_subcommand("stats", "Subtask statistics of a query file");
    stats->add_option("--queries", rc.queries_path)->required();
    stats->add_option("--corpus", rc.corpus_path, "Clean against this toolbox first");

    auto* index = app.add_subcommand("index", "Embed every tool and save a vector store");
    index->add_option("--corpus", rc.corpus_path)->required();
    index->add_option("--out", rc.output_path)->required();
    add_encoder_opts(index);

    auto* trn = app.add_subcommand("train", "Train the encoder head with the contrastive loss");
    trn->add_option("--corpus", rc.corpus_path)->required();
    trn->add_option("--queries", rc.queries_path)->required();
    trn->add_option("--out", rc.output_path, "Head file to write")->required();
    trn->add_option("--report", rc.report_path, "Also write the training report here");
    trn->add_option("--embeddings", rc.embeddings_path);
    trn->add_option("--dim", rc.dimension)->capture_default_str();
    trn->add_option("--margin", rc.training.margin)->capture_default_str();
    trn->add_option("--batch-size", rc.training.batch_size)->capture_default_str();
    trn->add_option("--lr", rc.training.learning_rate)->capture_default_str();
    trn->add_option("--epochs", rc.training.epochs)->capture_default_str();
    trn->add_option("--output-dim", rc.training.output_dimension)->capture_default_str();
    trn->add_option("--grad-check", rc.training.grad_check_pairs, "Pairs to gradient-check after training");
    trn->add_option("--seed", rc.seed, "Master seed");

    auto* retrieve = app.add_subcommand("retrieve", "Print the top-k tools for one query");
    retrieve->add_option("--method", rc.method)
        ->check(CLI::IsMember({"bm25", "ss", "td-bm25", "td-ss", "protip"}))
        ->capture_default_str();
    retrieve->add_option("--corpus", rc.corpus_path)->required();
    retrieve->add_option("--query", rc.query_text);
    retrieve->add_option("--query-id", rc.query_id, "Query id for decomposition methods");
    retrieve->add_option("--decompositions", rc.decompositions_path);
    retrieve->add_option("--store", rc.store_path);
    retrieve->add_option("--k", rc.k)->capture_default_str();
    retrieve->add_option("--metric", rc.metric, "protip ranking metric: l2 or cosine")->capture_default_str();
    retrieve->add_option("--max-steps", rc.max_steps)->capture_default_str();
    add_encoder_opts(retrieve);

    auto* eval = app.add_subcommand("eval", "Recall@K over methods, or planner metrics given predictions");
    eval->add_option("--corpus", rc.corpus_path)->required();
    eval->add_option("--queries", rc.queries_path);
    eval->add_option("--decompositions", rc.decompositions_path);
    eval->add_option("--store", rc.store_path);
    eval->add_option("--methods", rc.methods)
        ->check(CLI::IsMember({"bm25", "ss", "td-bm25", "td-ss", "protip"}))
        ->delimiter(',');
    eval->add_option("--ks", rc.ks)->delimiter(',');
    eval->add_option("--metric", rc.metric)->capture_default_str();
    eval->add_option("--max-steps", rc.max_steps)->capture_default_str();
    eval->add_option("--predictions", rc.predictions_path, "Planner predictions (JSONL)");
    eval->add_option("--interactions", rc.interactions_path, "Interaction transcripts (JSONL)");
    eval->add_option("--out", rc.output_path, "JSON report path");
    add_encoder_opts(eval);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        if (!reversed.empty()) reversed.pop_back();  // program name
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "protip: error[2]: " << e.what() << "\n";
        return 2;
    }

    try {
        if (rc.k == 0) throw UsageError("--k must be at least 1");
        if (rc.max_steps == 0) throw UsageError("--max-steps must be at least 1");
        parse_metric(rc.metric);
        if (*synth) {
            rc.subcommand = "synth";
            cmd_synth(rc, out);
        } else if (*stats) {
            rc.subcommand = "stats";
            cmd_stats(rc, out);
        } else if (*index) {
            rc.subcommand = "index";
            cmd_index(rc, out);
        } else if (*trn) {
            rc.subcommand = "train";
            cmd_train(rc, out);
        } else if (*retrieve) {
            rc.subcommand = "retrieve";
            cmd_retrieve(rc, out);
        } else if (*eval) {
            rc.subcommand = "eval";
            cmd_eval(rc, out);
        }
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "protip: error[" << e.code() << "]: " << msg << "\n";
        return e.code();
    } catch (const std::exception& e) {
        err << "protip: error[1]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace protip

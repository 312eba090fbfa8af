#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "protip/cli.hpp"
#include "protip/corpus.hpp"
#include "protip/embedding.hpp"
#include "protip/error.hpp"
#include "protip/evaluation.hpp"
#include "protip/lexical.hpp"
#include "protip/progressive.hpp"
#include "protip/synthdata.hpp"
#include "protip/training.hpp"

namespace py = pybind11;
using namespace protip;

namespace {

std::vector<std::pair<std::string, double>> pairs(const std::vector<ScoredTool>& r) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& x : r) out.emplace_back(x.id, x.score);
    return out;
}

}  // namespace

PYBIND11_MODULE(_protip, m) {
    m.doc() = "Progressive tool retrieval core";

    auto base_error = py::register_exception<Error>(m, "ProtipError");
    py::register_exception<UsageError>(m, "UsageError", base_error);
    py::register_exception<IoError>(m, "IoError", base_error);
    py::register_exception<ParseError>(m, "ParseError", base_error);
    py::register_exception<CorpusError>(m, "CorpusError", base_error);
    py::register_exception<FormatError>(m, "FormatError", base_error);
    py::register_exception<DimensionError>(m, "DimensionError", base_error);
    py::register_exception<ConfigError>(m, "ConfigError", base_error);
    py::register_exception<EvaluationError>(m, "EvaluationError", base_error);

    py::class_<Tool>(m, "Tool")
        .def(py::init<std::string, std::string, std::string>(), py::arg("id"), py::arg("name"), py::arg("description"))
        .def_readwrite("id", &Tool::id)
        .def_readwrite("name", &Tool::name)
        .def_readwrite("description", &Tool::description)
        .def("__repr__", [](const Tool& t) { return "Tool(" + t.id + ")"; });

    py::class_<ToolCorpus>(m, "ToolCorpus")
        .def(py::init<>())
        .def("add", &ToolCorpus::add)
        .def("__len__", &ToolCorpus::size)
        .def("__contains__", &ToolCorpus::contains)
        .def("at", &ToolCorpus::at, py::return_value_policy::copy)
        .def_property_readonly("tools", &ToolCorpus::tools)
        .def("to_jsonl", [](const ToolCorpus& c) { return to_jsonl(c); });

    py::class_<ComplexQuery>(m, "ComplexQuery")
        .def(py::init<std::string, std::string, std::vector<std::string>>(), py::arg("id"), py::arg("text"),
             py::arg("gt_plan"))
        .def_readwrite("id", &ComplexQuery::id)
        .def_readwrite("text", &ComplexQuery::text)
        .def_readwrite("gt_plan", &ComplexQuery::gt_plan);

    py::class_<DecomposedQuery>(m, "DecomposedQuery")
        .def_readonly("query_id", &DecomposedQuery::query_id)
        .def_readonly("subqueries", &DecomposedQuery::subqueries);

    m.def("load_corpus", &load_corpus, py::arg("path"));
    m.def("parse_corpus", &parse_corpus, py::arg("jsonl"), py::arg("source") = "<memory>");
    m.def(
        "load_queries",
        [](const std::string& path, const ToolCorpus& corpus, std::size_t max_subtasks) {
            return load_queries(path, corpus, max_subtasks).kept;
        },
        py::arg("path"), py::arg("corpus"), py::arg("max_subtasks") = kMaxSubtasks);

    m.def("tokenize", &tokenize);
    py::class_<Bm25Index>(m, "Bm25Index")
        .def_static(
            "build", [](const ToolCorpus& c, double k1, double b) { return Bm25Index::build(c, {k1, b}); },
            py::arg("corpus"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def("topk", [](const Bm25Index& i, const std::string& q, std::size_t k) { return pairs(i.topk(q, k)); })
        .def("idf", &Bm25Index::idf)
        .def_property_readonly("average_length", &Bm25Index::average_length);

    py::class_<HashedBagOfWords>(m, "HashedBagOfWords")
        .def(py::init([](std::size_t dim, std::uint64_t seed) { return HashedBagOfWords{dim, seed}; }),
             py::arg("dimension") = 64, py::arg("seed") = 0)
        .def_readonly("dimension", &HashedBagOfWords::dimension)
        .def_readonly("seed", &HashedBagOfWords::seed)
        .def("featurize", &HashedBagOfWords::featurize);

    py::enum_<Metric>(m, "Metric").value("COSINE", Metric::CosineDesc).value("L2", Metric::L2Asc);

    py::class_<Encoder>(m, "Encoder")
        .def(py::init([](const HashedBagOfWords& h) { return Encoder(h); }))
        .def(py::init([](const HashedBagOfWords& h, const std::vector<std::vector<double>>& rows) {
            Matrix w(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != w.cols()) throw DimensionError("ragged head rows");
                for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = rows[r][c];
            }
            return Encoder(h, w);
        }))
        .def("embed", &Encoder::embed)
        .def("embed_tool", &Encoder::embed_tool)
        .def_property_readonly("input_dimension", &Encoder::input_dimension)
        .def_property_readonly("output_dimension", &Encoder::output_dimension)
        .def("save", [](const Encoder& e, const std::string& path) { save_head(e, path); });
    m.def("load_head", [](const std::string& path) { return load_head(path); });

    py::class_<VectorStore>(m, "VectorStore")
        .def("__len__", &VectorStore::size)
        .def_property_readonly("dimension", &VectorStore::dimension)
        .def_property_readonly("ids", &VectorStore::ids)
        .def("vector", py::overload_cast<const std::string&>(&VectorStore::vector, py::const_))
        .def("save", [](const VectorStore& s, const std::string& path) { save_store(s, path); })
        .def("nearest", [](const VectorStore& s, const Vector& probe, std::size_t k,
                           Metric metric) { return pairs(nearest_topk(s, probe, k, metric)); },
             py::arg("probe"), py::arg("k"), py::arg("metric") = Metric::CosineDesc);
    m.def("build_store", &build_store);
    m.def("load_store", &load_store);

    m.def("progressive_retrieve", &progressive_retrieve, py::arg("encoder"), py::arg("store"), py::arg("query"),
          py::arg("k"), py::arg("max_steps") = kDefaultMaxSteps, py::arg("metric") = Metric::L2Asc);
    m.def("interleave", [](const std::vector<std::vector<std::string>>& lists, std::size_t k) {
        return interleave(lists, k);
    });

    m.def("contrastive_loss", &contrastive_loss, py::arg("distance"), py::arg("label"), py::arg("margin") = 0.3);
    m.def(
        "train",
        [](const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus, const HashedBagOfWords& base,
           std::size_t epochs, double learning_rate, std::size_t batch_size, double margin, std::uint64_t seed) {
            TrainingConfig cfg;
            cfg.epochs = epochs;
            cfg.learning_rate = learning_rate;
            cfg.batch_size = batch_size;
            cfg.margin = margin;
            cfg.seed = seed;
            auto r = train(queries, corpus, base, cfg);
            return py::make_tuple(r.encoder, r.report.epoch_losses);
        },
        py::arg("queries"), py::arg("corpus"), py::arg("base"), py::arg("epochs") = 30,
        py::arg("learning_rate") = 0.007, py::arg("batch_size") = 8, py::arg("margin") = 0.3, py::arg("seed") = 0);

    m.def("recall_at_k", [](const std::vector<std::string>& r, const std::vector<std::string>& gt,
                            std::size_t k) { return recall_at_k(r, gt, k); });
    m.def("exact_match", [](const std::string& a, const std::string& b) { return exact_match(a, b); });
    m.def("rouge_lsum", [](const std::string& a, const std::string& b) { return rouge_lsum(a, b); });

    m.def(
        "generate",
        [](std::size_t n_tools, std::size_t n_queries, std::uint64_t seed) {
            SynthConfig c;
            c.n_tools = n_tools;
            c.n_queries = n_queries;
            c.seed = seed;
            auto d = generate(c);
            return py::make_tuple(d.corpus, d.queries, d.decompositions);
        },
        py::arg("n_tools") = 200, py::arg("n_queries") = 300, py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "protip");
            std::ostringstream out, err;
            const int status = run_cli(args, out, err);
            return py::make_tuple(status, out.str(), err.str());
        },
        "Run a protip subcommand; returns (status, stdout, stderr).");
}

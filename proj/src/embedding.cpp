#include "protip/embedding.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "protip/error.hpp"
#include "protip/random.hpp"

namespace protip {

namespace {

void require_same_dim(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

// Little-endian encoding helpers.
template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), bytes.size());
}

class Reader {
public:
    Reader(const std::string& bytes, const char* what) : bytes_(bytes), what_(what) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::array<char, sizeof(T)> raw;
        std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
        return std::bit_cast<T>(raw);
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_magic(const char (&magic)[5]) {
        if (get_bytes(4) != std::string_view(magic, 4))
            throw FormatError(std::string(what_) + ": bad magic");
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string(what_) + ": truncated file");
    }

    const std::string& bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

constexpr std::uint32_t kStoreVersion = 1;
constexpr std::uint32_t kHeadVersion = 1;

}  // namespace

double dot(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u.size(), v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u.size(), v.size());
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double l2_distance(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u.size(), v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Vector add(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u.size(), v.size());
    Vector out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + v[i];
    return out;
}

Vector subtract(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u.size(), v.size());
    Vector out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] - v[i];
    return out;
}

Vector HashedBagOfWords::featurize(std::string_view text) const {
    if (dimension == 0) throw ConfigError("hashed featurizer dimension must be positive");
    Vector v(dimension, 0.0);
    for (const auto& token : tokenize(text)) {
        const std::uint64_t h = hash_string(token, seed);
        const std::uint64_t sign_bits = hash_string(token, seed ^ 0x5bd1e9955bd1e995ULL);
        v[h % dimension] += (sign_bits & 1U) ? 1.0 : -1.0;
    }
    return v;
}

const Vector& EmbeddingTable::lookup(const std::string& key) const {
    auto it = rows.find(key);
    if (it == rows.end()) throw MissingEmbeddingError("no precomputed embedding for '" + key + "'");
    return it->second;
}

EmbeddingTable parse_embedding_table(const std::string& jsonl, const std::string& source) {
    using nlohmann::json;
    EmbeddingTable table;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start < jsonl.size()) {
        std::size_t end = jsonl.find('\n', start);
        if (end == std::string::npos) end = jsonl.size();
        std::string line = jsonl.substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("key") || !obj["key"].is_string() || !obj.contains("vector") ||
            !obj["vector"].is_array())
            throw ParseError(source, lineno, "expected {\"key\": string, \"vector\": [numbers]}");
        Vector v;
        for (const auto& x : obj["vector"]) {
            if (!x.is_number()) throw ParseError(source, lineno, "non-numeric vector entry");
            const double d = x.get<double>();
            if (!std::isfinite(d)) throw ParseError(source, lineno, "non-finite vector entry");
            v.push_back(d);
        }
        if (table.rows.empty()) table.dimension = v.size();
        if (v.size() != table.dimension)
            throw ParseError(source, lineno, "vector dimension " + std::to_string(v.size()) + " != " +
                                                 std::to_string(table.dimension));
        auto key = obj["key"].get<std::string>();
        if (!table.rows.emplace(key, std::move(v)).second)
            throw ParseError(source, lineno, "duplicate key '" + key + "'");
    }
    return table;
}

EmbeddingTable load_embedding_table(const std::string& path) {
    return parse_embedding_table(read_file(path), path);
}

std::size_t BaseFeaturizer::dimension() const {
    return std::visit([](const auto& f) { return f.dimension; }, impl_);
}

Vector BaseFeaturizer::featurize(std::string_view text) const {
    if (const auto* h = hashed()) return h->featurize(text);
    return table()->lookup(std::string(text));
}

Vector BaseFeaturizer::featurize_tool(const Tool& tool) const {
    if (const auto* h = hashed()) return h->featurize(tool.description);
    const auto* t = table();
    if (auto it = t->rows.find(tool.id); it != t->rows.end()) return it->second;
    return t->lookup(tool.description);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector Matrix::apply(std::span<const double> x) const {
    require_same_dim(cols_, x.size());
    Vector out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        const double* row = data_.data() + r * cols_;
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) s += row[c] * x[c];
        out[r] = s;
    }
    return out;
}

Encoder::Encoder(BaseFeaturizer base, Matrix head) : base_(std::move(base)), head_(std::move(head)) {
    require_same_dim(base_.dimension(), head_.cols());
    for (double w : head_.data())
        if (!std::isfinite(w)) throw ConfigError("encoder head has non-finite entries");
}

Encoder::Encoder(BaseFeaturizer base) : base_(std::move(base)), head_(Matrix::identity(base_.dimension())) {}

Vector Encoder::embed(std::string_view text) const { return head_.apply(base_.featurize(text)); }

Vector Encoder::embed_tool(const Tool& tool) const { return head_.apply(base_.featurize_tool(tool)); }

std::string serialize_head(const Encoder& encoder) {
    std::string out = "PTHD";
    const Matrix& w = encoder.head();
    put<std::uint32_t>(out, kHeadVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(w.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(w.cols()));
    const auto* hashed = encoder.base().hashed();
    put<std::uint8_t>(out, hashed ? 0 : 1);
    put<std::uint64_t>(out, hashed ? hashed->dimension : 0);
    put<std::uint64_t>(out, hashed ? hashed->seed : 0);
    for (double x : w.data()) put<double>(out, x);
    return out;
}

void save_head(const Encoder& encoder, const std::string& path) { write_file(path, serialize_head(encoder)); }

Encoder deserialize_head(const std::string& bytes, const EmbeddingTable* table) {
    Reader in(bytes, "head file");
    in.expect_magic("PTHD");
    if (in.get<std::uint32_t>() != kHeadVersion) throw FormatError("head file: unsupported version");
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    const auto kind = in.get<std::uint8_t>();
    const auto hash_dim = in.get<std::uint64_t>();
    const auto hash_seed = in.get<std::uint64_t>();
    Matrix w(rows, cols);
    for (double& x : w.data()) x = in.get<double>();
    if (!in.at_end()) throw FormatError("head file: trailing bytes");
    if (kind == 0) {
        if (hash_dim != cols) throw FormatError("head file: featurizer dimension does not match head");
        return Encoder(HashedBagOfWords{static_cast<std::size_t>(hash_dim), hash_seed}, std::move(w));
    }
    if (kind != 1) throw FormatError("head file: unknown featurizer kind");
    if (!table) throw ConfigError("head was trained on an embedding table; supply the table");
    return Encoder(*table, std::move(w));
}

Encoder load_head(const std::string& path, const EmbeddingTable* table) {
    return deserialize_head(read_file(path), table);
}

const char* to_string(Metric metric) { return metric == Metric::CosineDesc ? "cosine" : "l2"; }

Metric metric_from_string(const std::string& s) {
    if (s == "cosine" || s == "cosine-desc") return Metric::CosineDesc;
    if (s == "l2" || s == "l2-asc") return Metric::L2Asc;
    throw ConfigError("unknown metric '" + s + "'");
}

void VectorStore::add(const std::string& id, std::span<const double> values) {
    if (ids_.empty() && dimension_ == 0) dimension_ = values.size();
    require_same_dim(dimension_, values.size());
    if (id.empty()) throw CorpusError("vector store id must be nonempty");
    if (index_.count(id)) throw CorpusError("duplicate vector store id '" + id + "'");
    for (double x : values)
        if (!std::isfinite(x)) throw ConfigError("non-finite embedding for '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    for (double x : values) values_.push_back(static_cast<float>(x));
}

Vector VectorStore::vector(std::size_t i) const {
    auto r = row(i);
    return Vector(r.begin(), r.end());
}

Vector VectorStore::vector(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw CorpusError("vector store has no entry for '" + id + "'");
    return vector(it->second);
}

VectorStore build_store(const Encoder& encoder, const ToolCorpus& corpus) {
    VectorStore store(encoder.output_dimension());
    for (const auto& tool : corpus) store.add(tool.id, encoder.embed_tool(tool));
    return store;
}

std::vector<ScoredTool> nearest_topk(const VectorStore& store, std::span<const double> probe, std::size_t k,
                                     Metric metric, std::span<const std::string> exclude) {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (store.empty()) return {};
    require_same_dim(store.dimension(), probe.size());

    const double probe_norm = norm(probe);
    std::vector<ScoredTool> scored;
    scored.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& id = store.ids()[i];
        if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
        auto row = store.row(i);
        double score = 0.0;
        if (metric == Metric::CosineDesc) {
            double d = 0.0, rn = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                d += probe[j] * row[j];
                rn += static_cast<double>(row[j]) * row[j];
            }
            score = (probe_norm == 0.0 || rn == 0.0) ? 0.0 : std::clamp(d / (probe_norm * std::sqrt(rn)), -1.0, 1.0);
        } else {
            double s = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                const double diff = probe[j] - row[j];
                s += diff * diff;
            }
            score = std::sqrt(s);
        }
        scored.push_back({id, score});
    }
    auto better = [metric](const ScoredTool& a, const ScoredTool& b) {
        if (a.score != b.score) return metric == Metric::CosineDesc ? a.score > b.score : a.score < b.score;
        return a.id < b.id;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    scored.resize(n);
    return scored;
}

std::string serialize_store(const VectorStore& store) {
    std::string out = "PTVS";
    put<std::uint32_t>(out, kStoreVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dimension()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& id = store.ids()[i];
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out += id;
        for (float x : store.row(i)) put<float>(out, x);
    }
    return out;
}

void save_store(const VectorStore& store, const std::string& path) { write_file(path, serialize_store(store)); }

VectorStore deserialize_store(const std::string& bytes) {
    Reader in(bytes, "vector store");
    in.expect_magic("PTVS");
    if (in.get<std::uint32_t>() != kStoreVersion) throw FormatError("vector store: unsupported version");
    const auto dim = in.get<std::uint32_t>();
    const auto count = in.get<std::uint32_t>();
    VectorStore store(dim);
    std::vector<double> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = in.get<std::uint32_t>();
        std::string id = in.get_bytes(len);
        for (auto& x : row) x = static_cast<double>(in.get<float>());
        store.add(id, row);
    }
    if (!in.at_end()) throw FormatError("vector store: trailing bytes");
    return store;
}

VectorStore load_store(const std::string& path) { return deserialize_store(read_file(path)); }

}  // namespace protip

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "protip/corpus.hpp"
#include "protip/lexical.hpp"

namespace protip {

using Vector = std::vector<double>;

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);
// Zero when either vector has zero norm.
double cosine_similarity(std::span<const double> u, std::span<const double> v);
double l2_distance(std::span<const double> u, std::span<const double> v);

Vector add(std::span<const double> u, std::span<const double> v);
Vector subtract(std::span<const double> u, std::span<const double> v);

// Each token adds a signed unit to one of `dimension` buckets. Counts add,
// so featurize(a + " " + b) == featurize(a) + featurize(b).
struct HashedBagOfWords {
    std::size_t dimension = 64;
    std::uint64_t seed = 0;

    Vector featurize(std::string_view text) const;
};

// Precomputed vectors exported from an external encoder, keyed by text or
// tool id.
struct EmbeddingTable {
    std::size_t dimension = 0;
    std::unordered_map<std::string, Vector> rows;

    // Throws MissingEmbeddingError for an unknown key.
    const Vector& lookup(const std::string& key) const;
};

// JSONL rows of {"key": ..., "vector": [...]}.
EmbeddingTable load_embedding_table(const std::string& path);
EmbeddingTable parse_embedding_table(const std::string& jsonl, const std::string& source = "<memory>");

class BaseFeaturizer {
public:
    BaseFeaturizer(HashedBagOfWords hashed) : impl_(hashed) {}  // NOLINT(implicit)
    BaseFeaturizer(EmbeddingTable table) : impl_(std::move(table)) {}  // NOLINT(implicit)

    std::size_t dimension() const;
    Vector featurize(std::string_view text) const;
    // Tables are consulted by tool id first, then by description.
    Vector featurize_tool(const Tool& tool) const;

    const HashedBagOfWords* hashed() const { return std::get_if<HashedBagOfWords>(&impl_); }
    const EmbeddingTable* table() const { return std::get_if<EmbeddingTable>(&impl_); }

private:
    std::variant<HashedBagOfWords, EmbeddingTable> impl_;
};

// Row-major d_out x d_in matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Vector apply(std::span<const double> x) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// E_w(x) = W * base(x), no bias.
class Encoder {
public:
    Encoder(BaseFeaturizer base, Matrix head);
    // Identity head over the base dimension.
    explicit Encoder(BaseFeaturizer base);

    Vector embed(std::string_view text) const;
    Vector embed_tool(const Tool& tool) const;
    Vector project(std::span<const double> base_vector) const { return head_.apply(base_vector); }

    const BaseFeaturizer& base() const noexcept { return base_; }
    const Matrix& head() const noexcept { return head_; }
    std::size_t input_dimension() const noexcept { return head_.cols(); }
    std::size_t output_dimension() const noexcept { return head_.rows(); }

private:
    BaseFeaturizer base_;
    Matrix head_;
};

// Head file: "PTHD", u32 version, u32 rows, u32 cols, u8 featurizer kind,
// u64 hash dimension, u64 hash seed, then rows*cols little-endian f64.
void save_head(const Encoder& encoder, const std::string& path);
std::string serialize_head(const Encoder& encoder);
// Table featurizers are not persisted; pass the table to reattach it.
Encoder load_head(const std::string& path, const EmbeddingTable* table = nullptr);
Encoder deserialize_head(const std::string& bytes, const EmbeddingTable* table = nullptr);

enum class Metric { CosineDesc, L2Asc };

const char* to_string(Metric metric);
Metric metric_from_string(const std::string& s);

// Exhaustive store of one 32-bit float vector per tool id.
class VectorStore {
public:
    explicit VectorStore(std::size_t dimension = 0) : dimension_(dimension) {}

    // Values are rounded to float on insertion so that save/load is exact.
    void add(const std::string& id, std::span<const double> values);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::span<const float> row(std::size_t i) const { return {values_.data() + i * dimension_, dimension_}; }
    Vector vector(std::size_t i) const;
    // Throws CorpusError for an unknown id.
    Vector vector(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    bool operator==(const VectorStore& o) const {
        return dimension_ == o.dimension_ && ids_ == o.ids_ && values_ == o.values_;
    }

private:
    std::size_t dimension_;
    std::vector<std::string> ids_;
    std::vector<float> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

VectorStore build_store(const Encoder& encoder, const ToolCorpus& corpus);

// Exact ranking: cosine descending or L2 ascending, ties by ascending id.
// Ids in `exclude` are skipped.
std::vector<ScoredTool> nearest_topk(const VectorStore& store, std::span<const double> probe, std::size_t k,
                                     Metric metric, std::span<const std::string> exclude = {});

// Store file: "PTVS", u32 version, u32 dimension, u32 count, then per row a
// u32 id length, the id bytes, and dimension little-endian f32 values.
void save_store(const VectorStore& store, const std::string& path);
std::string serialize_store(const VectorStore& store);
VectorStore load_store(const std::string& path);
VectorStore deserialize_store(const std::string& bytes);

}  // namespace protip

#include "protip/training.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "protip/error.hpp"

namespace protip {

void TrainingConfig::validate() const {
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (batch_size < 2) throw ConfigError("batch size must be at least 2");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be a finite nonnegative number");
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (!(distance_epsilon > 0.0)) throw ConfigError("distance epsilon must be positive");
    if (grad_check_pairs > 0 && !(grad_check_step > 0.0)) throw ConfigError("grad-check step must be positive");
}

double contrastive_loss(double distance, int label, double margin) {
    if (label == 1) return 0.5 * distance * distance;
    const double hinge = std::max(0.0, margin - distance);
    return 0.5 * hinge * hinge;
}

namespace {

// dL/dD divided by D, i.e. the factor c in dL/dW = c * (W u) u^T.
double gradient_coefficient(double distance, int label, double margin, double epsilon) {
    if (label == 1) return 1.0;
    if (distance >= margin) return 0.0;
    return -(margin - distance) / std::max(distance, epsilon);
}

struct SparseDiff {
    std::vector<std::size_t> index;
    std::vector<double> value;
};

SparseDiff sparse_difference(const Vector& g, const Vector& h) {
    if (g.size() != h.size()) throw DimensionError("pair vectors differ in dimension");
    SparseDiff d;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g[i] - h[i];
        if (x != 0.0) {
            d.index.push_back(i);
            d.value.push_back(x);
        }
    }
    return d;
}

// Adds the pair gradient into `grad` (touching only the nonzero columns of
// u) and returns the pair loss.
double accumulate_pair(const ContrastivePair& pair, const Matrix& head, double margin, double epsilon,
                       Matrix& grad, std::vector<char>& touched) {
    if (pair.query_base.size() != head.cols())
        throw DimensionError("pair dimension " + std::to_string(pair.query_base.size()) + " != head input " +
                             std::to_string(head.cols()));
    const SparseDiff u = sparse_difference(pair.query_base, pair.tool_base);
    Vector z(head.rows(), 0.0);
    for (std::size_t r = 0; r < head.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < u.index.size(); ++j) s += head(r, u.index[j]) * u.value[j];
        z[r] = s;
    }
    const double distance = norm(z);
    const double loss = contrastive_loss(distance, pair.label, margin);
    const double coef = gradient_coefficient(distance, pair.label, margin, epsilon);
    if (coef != 0.0) {
        for (std::size_t r = 0; r < head.rows(); ++r) {
            const double zr = coef * z[r];
            for (std::size_t j = 0; j < u.index.size(); ++j) grad(r, u.index[j]) += zr * u.value[j];
        }
        for (std::size_t c : u.index) touched[c] = 1;
    }
    return loss;
}

void check_labels(const ContrastivePair& pair) {
    if (pair.label != 0 && pair.label != 1) throw ConfigError("pair label must be 0 or 1");
}

}  // namespace

LossAndGradient pair_loss_and_gradient(const ContrastivePair& pair, const Matrix& head, double margin,
                                       double epsilon) {
    check_labels(pair);
    const Vector u = subtract(pair.query_base, pair.tool_base);
    const Vector z = head.apply(u);
    const double distance = norm(z);
    LossAndGradient out{contrastive_loss(distance, pair.label, margin), Matrix(head.rows(), head.cols())};
    const double coef = gradient_coefficient(distance, pair.label, margin, epsilon);
    if (coef == 0.0) return out;
    for (std::size_t r = 0; r < head.rows(); ++r)
        for (std::size_t c = 0; c < head.cols(); ++c) out.gradient(r, c) = coef * z[r] * u[c];
    return out;
}

LossAndGradient batch_loss_and_gradient(const Batch& batch, const Matrix& head, double margin, double epsilon) {
    LossAndGradient out{0.0, Matrix(head.rows(), head.cols())};
    if (batch.empty()) return out;
    std::vector<char> touched(head.cols(), 0);
    for (const auto& pair : batch) {
        check_labels(pair);
        out.loss += accumulate_pair(pair, head, margin, epsilon, out.gradient, touched);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (double& g : out.gradient.data()) g *= inv;
    return out;
}

namespace {

struct BaseCache {
    std::vector<Vector> tools;  // corpus order
    std::vector<Vector> queries;
};

BaseCache cache_bases(const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus,
                      const BaseFeaturizer& base) {
    BaseCache cache;
    cache.tools.reserve(corpus.size());
    for (const auto& t : corpus) cache.tools.push_back(base.featurize_tool(t));
    cache.queries.reserve(queries.size());
    for (const auto& q : queries) cache.queries.push_back(base.featurize(q.text));
    return cache;
}

// Appends the batches of one query to `out`.
void append_query_batches(const ComplexQuery& query, const Vector& query_base, const ToolCorpus& corpus,
                          const BaseCache& cache, const std::unordered_map<std::string, std::size_t>& position,
                          const TrainingConfig& config, Rng& rng, std::vector<Batch>& out) {
    std::vector<std::size_t> plan;
    for (const auto& id : query.gt_plan) {
        auto it = position.find(id);
        if (it == position.end()) throw CorpusError("query '" + query.id + "' references unknown tool '" + id + "'");
        plan.push_back(it->second);
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (std::find(plan.begin(), plan.end(), i) == plan.end()) candidates.push_back(i);
    const std::size_t negatives = config.batch_size - 1;
    if (candidates.size() < negatives)
        throw ConfigError("query '" + query.id + "' leaves " + std::to_string(candidates.size()) +
                          " negative candidates, need " + std::to_string(negatives));

    Vector state = query_base;
    for (std::size_t step = 0; step < plan.size(); ++step) {
        Batch batch;
        batch.reserve(config.batch_size);
        const std::size_t pos = plan[step];
        batch.push_back({state, cache.tools[pos], 1, corpus.tools()[pos].id});
        // Partial Fisher-Yates: the first `negatives` slots become the sample.
        for (std::size_t i = 0; i < negatives; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_index(rng, candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
            const std::size_t neg = candidates[i];
            batch.push_back({state, cache.tools[neg], 0, corpus.tools()[neg].id});
        }
        out.push_back(std::move(batch));
        state = subtract(state, cache.tools[pos]);
    }
}

std::unordered_map<std::string, std::size_t> position_index(const ToolCorpus& corpus) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < corpus.size(); ++i) pos.emplace(corpus.tools()[i].id, i);
    return pos;
}

std::vector<Batch> batches_from_cache(const std::vector<ComplexQuery>& queries,
                                      const std::vector<std::size_t>& order, const ToolCorpus& corpus,
                                      const BaseCache& cache,
                                      const std::unordered_map<std::string, std::size_t>& position,
                                      const TrainingConfig& config, Rng& rng) {
    std::vector<Batch> out;
    for (std::size_t qi : order)
        append_query_batches(queries[qi], cache.queries[qi], corpus, cache, position, config, rng, out);
    return out;
}

}  // namespace

std::vector<Batch> build_batches(const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus,
                                 const BaseFeaturizer& base, const TrainingConfig& config, Rng& rng) {
    config.validate();
    if (corpus.size() < config.batch_size)
        throw ConfigError("corpus of " + std::to_string(corpus.size()) + " tools is smaller than batch size " +
                          std::to_string(config.batch_size));
    const BaseCache cache = cache_bases(queries, corpus, base);
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return batches_from_cache(queries, order, corpus, cache, position_index(corpus), config, rng);
}

Matrix initial_head(std::size_t input_dimension, const TrainingConfig& config) {
    const std::size_t out_dim = config.output_dimension == 0 ? input_dimension : config.output_dimension;
    if (out_dim == input_dimension) return Matrix::identity(input_dimension);
    Rng rng(derive_seed(config.seed, "head-init"));
    Matrix w(out_dim, input_dimension);
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dimension));
    for (double& x : w.data()) x = standard_normal(rng) * scale;
    return w;
}

TrainResult train(const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus, const BaseFeaturizer& base,
                  const TrainingConfig& config) {
    config.validate();
    if (queries.empty()) throw ConfigError("no training queries");
    if (corpus.size() < config.batch_size)
        throw ConfigError("corpus of " + std::to_string(corpus.size()) + " tools is smaller than batch size " +
                          std::to_string(config.batch_size));

    const BaseCache cache = cache_bases(queries, corpus, base);
    const auto position = position_index(corpus);
    Matrix head = initial_head(base.dimension(), config);
    Rng rng(config.seed);

    TrainReport report;
    std::vector<std::size_t> order(queries.size());
    std::vector<Batch> last_epoch;
    Matrix grad(head.rows(), head.cols());
    std::vector<char> touched(head.cols(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        std::vector<Batch> batches = batches_from_cache(queries, order, corpus, cache, position, config, rng);

        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& batch = batches[bi];
            double loss = 0.0;
            for (const auto& pair : batch)
                loss += accumulate_pair(pair, head, config.margin, config.distance_epsilon, grad, touched);
            const double inv = 1.0 / static_cast<double>(batch.size());
            loss *= inv;
            if (!std::isfinite(loss)) throw DivergenceError(epoch, bi, "non-finite training loss");
            epoch_loss += loss;

            const double step = config.learning_rate * inv;
            for (std::size_t c = 0; c < head.cols(); ++c) {
                if (!touched[c]) continue;
                for (std::size_t r = 0; r < head.rows(); ++r) {
                    head(r, c) -= step * grad(r, c);
                    grad(r, c) = 0.0;
                }
                touched[c] = 0;
            }
        }
        epoch_loss /= static_cast<double>(batches.size());
        if (!std::isfinite(epoch_loss)) throw DivergenceError(epoch, batches.size(), "non-finite epoch loss");
        report.epoch_losses.push_back(epoch_loss);
        if (epoch + 1 == config.epochs) last_epoch = std::move(batches);
    }

    if (config.grad_check_pairs > 0) {
        std::vector<ContrastivePair> sample;
        Rng pick(derive_seed(config.seed, "grad-check"));
        std::vector<ContrastivePair> all;
        for (auto& b : last_epoch)
            for (auto& p : b) all.push_back(std::move(p));
        shuffle(all, pick);
        all.resize(std::min(all.size(), config.grad_check_pairs));
        report.grad_check_max_rel_error =
            grad_check(all, head, config.margin, config.grad_check_step, &pair_loss_and_gradient,
                       config.distance_epsilon);
    }

    report.head = head;
    return {Encoder(base, std::move(head)), std::move(report)};
}

double grad_check(const std::vector<ContrastivePair>& pairs, const Matrix& head, double margin, double fd_step,
                  GradientFn gradient, double epsilon) {
    if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
    double worst = 0.0;
    Matrix probe = head;
    for (const auto& pair : pairs) {
        const LossAndGradient analytic = gradient(pair, head, margin, epsilon);
        auto loss_at = [&](const Matrix& w) {
            return contrastive_loss(norm(w.apply(subtract(pair.query_base, pair.tool_base))), pair.label, margin);
        };
        for (std::size_t r = 0; r < head.rows(); ++r) {
            for (std::size_t c = 0; c < head.cols(); ++c) {
                const double w0 = head(r, c);
                probe(r, c) = w0 + fd_step;
                const double up = loss_at(probe);
                probe(r, c) = w0 - fd_step;
                const double down = loss_at(probe);
                probe(r, c) = w0;
                const double numeric = (up - down) / (2.0 * fd_step);
                const double a = analytic.gradient(r, c);
                const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
                worst = std::max(worst, std::abs(a - numeric) / denom);
            }
        }
    }
    return worst;
}

std::string report_to_json(const TrainReport& report, const TrainingConfig& config) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["config"] = {{"margin", config.margin},
                   {"batch_size", config.batch_size},
                   {"learning_rate", config.learning_rate},
                   {"epochs", config.epochs},
                   {"seed", config.seed},
                   {"distance_epsilon", config.distance_epsilon},
                   {"output_dimension", config.output_dimension}};
    j["epoch_losses"] = report.epoch_losses;
    j["head_shape"] = {report.head.rows(), report.head.cols()};
    if (report.grad_check_max_rel_error)
        j["grad_check_max_rel_error"] = *report.grad_check_max_rel_error;
    else
        j["grad_check_max_rel_error"] = nullptr;
    return j.dump(2) + "\n";
}

}  // namespace protip

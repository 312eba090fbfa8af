#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "protip/corpus.hpp"
#include "protip/embedding.hpp"
#include "protip/random.hpp"

namespace protip {

// One (I1, I2) example in base-feature space. The query side is
// base(q) minus the base vectors of the ground-truth tools already handled.
struct ContrastivePair {
    Vector query_base;
    Vector tool_base;
    int label = 0;  // 1 = ground-truth tool for this step
    std::string tool_id;
};

using Batch = std::vector<ContrastivePair>;

struct TrainingConfig {
    double margin = 0.3;
    std::size_t batch_size = 8;  // one positive plus batch_size - 1 negatives
    double learning_rate = 0.007;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double distance_epsilon = 1e-12;
    // 0 keeps the base dimension and starts from the identity.
    std::size_t output_dimension = 0;
    // Pairs sampled from the last epoch for a finite-difference check; 0 skips it.
    std::size_t grad_check_pairs = 0;
    double grad_check_step = 1e-6;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    Matrix head;
    std::optional<double> grad_check_max_rel_error;

    bool operator==(const TrainReport&) const = default;
};

struct TrainResult {
    Encoder encoder;
    TrainReport report;
};

// L = 1/2 l D^2 + 1/2 (1 - l) max(0, m - D)^2
double contrastive_loss(double distance, int label, double margin);

struct LossAndGradient {
    double loss = 0.0;
    Matrix gradient;  // dL/dW, same shape as the head
};

LossAndGradient pair_loss_and_gradient(const ContrastivePair& pair, const Matrix& head, double margin,
                                       double epsilon = 1e-12);

// Pair-mean loss and gradient accumulated in pair order.
LossAndGradient batch_loss_and_gradient(const Batch& batch, const Matrix& head, double margin,
                                        double epsilon = 1e-12);

// One batch per (query, plan step) in query order, negatives drawn without
// replacement from tools outside the query's plan.
std::vector<Batch> build_batches(const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus,
                                 const BaseFeaturizer& base, const TrainingConfig& config, Rng& rng);

Matrix initial_head(std::size_t input_dimension, const TrainingConfig& config);

TrainResult train(const std::vector<ComplexQuery>& queries, const ToolCorpus& corpus, const BaseFeaturizer& base,
                  const TrainingConfig& config);

// Analytic-gradient signature used by grad_check, so a deliberately broken
// gradient can be checked too.
using GradientFn = LossAndGradient (*)(const ContrastivePair&, const Matrix&, double, double);

// Max over every head entry and pair of |a - f| / max(|a|, |f|, 1e-12),
// with f the central difference of the loss.
double grad_check(const std::vector<ContrastivePair>& pairs, const Matrix& head, double margin, double fd_step,
                  GradientFn gradient = &pair_loss_and_gradient, double epsilon = 1e-12);

std::string report_to_json(const TrainReport& report, const TrainingConfig& config);

}  // namespace protip

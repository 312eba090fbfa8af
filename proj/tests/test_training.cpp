#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "doctest.h"
#include "protip/error.hpp"
#include "protip/random.hpp"
#include "protip/synthdata.hpp"
#include "protip/training.hpp"

using namespace protip;

namespace {

Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (auto& x : v) x = scale * standard_normal(rng);
    return v;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& x : m.data()) x = standard_normal(rng) / std::sqrt(static_cast<double>(c));
    return m;
}

LossAndGradient doubled(const ContrastivePair& p, const Matrix& w, double m, double eps) {
    auto r = pair_loss_and_gradient(p, w, m, eps);
    for (auto& x : r.gradient.data()) x *= 2.0;
    return r;
}

SynthDataset small_synth(std::uint64_t seed) {
    SynthConfig c;
    c.n_tools = 30;
    c.n_queries = 20;
    c.seed = seed;
    return generate(c);
}

}  // namespace

TEST_CASE("contrastive loss point values") {
    CHECK(contrastive_loss(0.0, 1, 0.3) == 0.0);
    CHECK(contrastive_loss(0.5, 0, 0.3) == 0.0);
    CHECK(std::abs(contrastive_loss(0.5, 1, 0.3) - 0.125) < 1e-12);
    CHECK(std::abs(contrastive_loss(0.1, 0, 0.3) - 0.02) < 1e-12);
}

TEST_CASE("contrastive loss shape") {
    for (double d = 0.0; d < 2.0; d += 0.01) {
        CHECK(contrastive_loss(d, 0, 0.3) >= 0.0);
        CHECK(contrastive_loss(d, 1, 0.3) >= 0.0);
        CHECK(contrastive_loss(d + 0.01, 1, 0.3) > contrastive_loss(d, 1, 0.3));
        CHECK(contrastive_loss(d + 0.01, 0, 0.3) <= contrastive_loss(d, 0, 0.3));
    }
    CHECK(contrastive_loss(0.3 - 1e-9, 0, 0.3) < 1e-17);
    CHECK(contrastive_loss(0.3, 0, 0.3) == 0.0);
}

TEST_CASE("flat and zero gradient cases") {
    const Matrix w = Matrix::identity(3);
    const ContrastivePair far{{2, 0, 0}, {0, 0, 0}, 0, "x"};
    const auto r = pair_loss_and_gradient(far, w, 0.3);
    CHECK(r.loss == 0.0);
    for (double x : r.gradient.data()) CHECK(x == 0.0);

    const ContrastivePair same{{1, 2, 3}, {1, 2, 3}, 1, "x"};
    const auto s = pair_loss_and_gradient(same, w, 0.3);
    CHECK(s.loss == 0.0);
    for (double x : s.gradient.data()) CHECK(x == 0.0);

    // D = 0 on a negative pair stays finite thanks to the clamp.
    const ContrastivePair coincide{{1, 1, 1}, {1, 1, 1}, 0, "x"};
    const auto c = pair_loss_and_gradient(coincide, w, 0.3);
    CHECK(c.loss == doctest::Approx(0.045));
    for (double x : c.gradient.data()) CHECK(std::isfinite(x));
    CHECK_THROWS_AS(pair_loss_and_gradient({{1, 2}, {1, 2, 3}, 1, ""}, w, 0.3), DimensionError);
}

TEST_CASE("gradient check") {
    Rng rng(1234);
    const Matrix w = random_matrix(rng, 5, 7);
    std::vector<ContrastivePair> pairs;
    for (int i = 0; i < 20; ++i) {
        const auto g = random_vector(rng, 7);
        pairs.push_back({g, random_vector(rng, 7), 1, ""});
        // Hinge active: tool close to the query.
        pairs.push_back({g, add(g, random_vector(rng, 7, 0.03)), 0, ""});
    }
    CHECK(grad_check(pairs, w, 0.3, 1e-6) < 1e-5);

    const double planted = grad_check(pairs, w, 0.3, 1e-6, &doubled);
    CHECK(planted == doctest::Approx(0.5).epsilon(1e-4));

    std::vector<ContrastivePair> inactive;
    for (int i = 0; i < 10; ++i) inactive.push_back({random_vector(rng, 7, 5.0), random_vector(rng, 7, 5.0) , 0, ""});
    for (auto& p : inactive) p.query_base[0] += 50.0;
    CHECK(grad_check(inactive, w, 0.3, 1e-6) == 0.0);
    CHECK_THROWS_AS(grad_check(pairs, w, 0.3, 0.0), ConfigError);
}

TEST_CASE("batch mean is invariant to pair order") {
    Rng rng(77);
    const Matrix w = random_matrix(rng, 4, 6);
    Batch batch;
    for (int i = 0; i < 8; ++i) {
        const auto g = random_vector(rng, 6);
        batch.push_back({g, add(g, random_vector(rng, 6, i % 2 ? 0.05 : 1.0)), i == 0 ? 1 : 0, std::to_string(i)});
    }
    const auto ref = batch_loss_and_gradient(batch, w, 0.3);
    for (int t = 0; t < 20; ++t) {
        shuffle(batch, rng);
        const auto got = batch_loss_and_gradient(batch, w, 0.3);
        CHECK(std::abs(got.loss - ref.loss) < 1e-12);
        for (std::size_t i = 0; i < ref.gradient.data().size(); ++i)
            CHECK(std::abs(got.gradient.data()[i] - ref.gradient.data()[i]) < 1e-12);
    }
}

TEST_CASE("build_batches counts and negatives") {
    ToolCorpus c;
    for (int i = 0; i < 10; ++i) c.add({"t" + std::to_string(i), "", "w" + std::to_string(i)});
    const std::vector<ComplexQuery> qs{{"q", "w1 w2", {"t1", "t2"}}};
    const BaseFeaturizer base(HashedBagOfWords{32, 1});
    TrainingConfig cfg;
    cfg.batch_size = 4;
    Rng rng(5);
    const auto batches = build_batches(qs, c, base, cfg, rng);
    std::size_t pos = 0, neg = 0;
    for (const auto& b : batches)
        for (const auto& p : b) {
            (p.label ? pos : neg)++;
            if (!p.label) CHECK((p.tool_id != "t1" && p.tool_id != "t2"));
        }
    CHECK(pos == 2);
    CHECK(neg == 6);

    // Teacher forcing: step two subtracts the first ground-truth tool.
    REQUIRE(batches.size() == 2);
    CHECK(batches[1][0].query_base == subtract(base.featurize("w1 w2"), base.featurize("w1")));

    Rng a(9), b(9);
    const auto x = build_batches(qs, c, base, cfg, a);
    const auto y = build_batches(qs, c, base, cfg, b);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x[i].size(); ++j) CHECK(x[i][j].tool_id == y[i][j].tool_id);

    cfg.batch_size = 11;
    CHECK_THROWS_AS(build_batches(qs, c, base, cfg, rng), ConfigError);
}

TEST_CASE("training determinism and no-op updates") {
    const auto data = small_synth(3);
    const BaseFeaturizer base(HashedBagOfWords{32, 4});
    TrainingConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 11;
    const auto r1 = train(data.queries, data.corpus, base, cfg);
    const auto r2 = train(data.queries, data.corpus, base, cfg);
    CHECK(r1.report == r2.report);
    CHECK(r1.report.epoch_losses.size() == 3);
    CHECK(r1.report.head != Matrix::identity(32));

    cfg.learning_rate = 0.0;
    CHECK(train(data.queries, data.corpus, base, cfg).report.head == Matrix::identity(32));

    cfg.output_dimension = 8;
    const auto r3 = train(data.queries, data.corpus, base, cfg);
    CHECK(r3.report.head == initial_head(32, cfg));
    CHECK(r3.encoder.output_dimension() == 8);
}

TEST_CASE("positives at distance zero leave the head unchanged") {
    ToolCorpus c;
    for (int i = 0; i < 4; ++i) c.add({"t" + std::to_string(i), "", "w" + std::to_string(i)});
    // Every tool vector sits far from every query, so negatives are hinge-inactive.
    const BaseFeaturizer base(HashedBagOfWords{4096, 2});
    std::vector<ComplexQuery> qs{{"q", "w0", {"t0"}}};
    TrainingConfig cfg;
    cfg.batch_size = 2;
    cfg.learning_rate = 0.5;
    cfg.epochs = 2;
    const auto r = train(qs, c, base, cfg);
    CHECK(r.report.head == Matrix::identity(4096));
    CHECK(r.report.epoch_losses == std::vector<double>{0.0, 0.0});
}

TEST_CASE("training reduces the loss and runs the optional check") {
    const auto data = small_synth(8);
    const BaseFeaturizer base(HashedBagOfWords{64, 1});
    TrainingConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 2;
    cfg.grad_check_pairs = 10;
    const auto r = train(data.queries, data.corpus, base, cfg);
    CHECK(r.report.epoch_losses.back() < r.report.epoch_losses.front());
    REQUIRE(r.report.grad_check_max_rel_error.has_value());
    CHECK(*r.report.grad_check_max_rel_error < 1e-5);
    CHECK(report_to_json(r.report, cfg).find("\"epoch_losses\"") != std::string::npos);
}

TEST_CASE("divergence is reported with its location") {
    const auto data = small_synth(4);
    const BaseFeaturizer base(HashedBagOfWords{64, 1});
    TrainingConfig cfg;
    cfg.learning_rate = 1e6;
    try {
        train(data.queries, data.corpus, base, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.code() == 10);
    }
}

TEST_CASE("config validation") {
    TrainingConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

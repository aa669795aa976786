#include <algorithm>
#include <set>
#include <string>

#include <doctest.h>

#include "oodnorm/errors.hpp"
#include "oodnorm/rng.hpp"
#include "oodnorm/scoring.hpp"

using namespace oodnorm;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

Matrix shifted(Matrix m, double shift) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += shift;
    }
    return m;
}

FlowModel small_flow(std::uint64_t seed) {
    Rng rng(seed);
    ConditionerFlowOptions opts;
    opts.couplings = 1;
    opts.hidden = {5};
    return make_conditioner_flow(2, opts, rng);
}

StatisticConfig small_cfg() {
    StatisticConfig cfg;
    cfg.b = 6;
    cfg.r1 = 0.3;
    cfg.r2 = 0.9;
    cfg.mc_reps = 2;
    cfg.seed = 99;
    return cfg;
}

} // namespace

TEST_CASE("parallel scoring drivers match their serial references bit for bit") {
    const FlowModel model = small_flow(401);
    const Matrix train_pool = random_matrix(40, 2, 402);
    const Matrix ref_set = random_matrix(12, 2, 403);
    const Matrix test_pool = random_matrix(10, 2, 404);
    const StatisticConfig cfg = small_cfg();

    const Vector ll_par = eval_logliks(model, test_pool, true);
    const Vector ll_ser = serial::eval_logliks(model, test_pool);
    REQUIRE(ll_par.size() == ll_ser.size());
    for (std::size_t i = 0; i < ll_par.size(); ++i) CHECK(ll_par[i] == ll_ser[i]);

    const Vector rd_par = reference_deltas(model, train_pool, ref_set, cfg, true);
    const Vector rd_ser = serial::reference_deltas(model, train_pool, ref_set, cfg);
    REQUIRE(rd_par.size() == ref_set.rows());
    for (std::size_t i = 0; i < rd_par.size(); ++i) CHECK(rd_par[i] == rd_ser[i]);

    const Vector td_par = test_deltas(model, train_pool, test_pool, cfg, true);
    const Vector td_ser = serial::test_deltas(model, train_pool, test_pool, cfg);
    REQUIRE(td_par.size() == test_pool.rows());
    for (std::size_t i = 0; i < td_par.size(); ++i) CHECK(td_par[i] == td_ser[i]);
}

TEST_CASE("reference and test deltas use distinct RNG streams") {
    const FlowModel model = small_flow(405);
    const Matrix train_pool = random_matrix(40, 2, 406);
    const Matrix pool = random_matrix(8, 2, 407);
    const StatisticConfig cfg = small_cfg();
    // Same rows scored through both drivers: the draws must differ, otherwise
    // the reference population would be correlated with the test scores.
    const Vector as_ref = reference_deltas(model, train_pool, pool, cfg, false);
    const Vector as_test = test_deltas(model, train_pool, pool, cfg, false);
    REQUIRE(as_ref.size() == as_test.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < as_ref.size(); ++i) {
        if (as_ref[i] != as_test[i]) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("detection run produces labelled scores and per-statistic reports") {
    const FlowModel model = small_flow(408);
    const std::vector<FlowModel> ensemble = {small_flow(409), small_flow(410)};
    const Matrix train_pool = random_matrix(48, 2, 411);
    const Matrix ref_set = random_matrix(10, 2, 412);
    const Matrix negatives = random_matrix(6, 2, 413);
    const Matrix positives = shifted(random_matrix(5, 2, 414), 3.0);
    const StatisticConfig cfg = small_cfg();

    DetectionInputs inputs;
    inputs.model = &model;
    inputs.ensemble = ensemble;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref_set;
    inputs.negatives = &negatives;
    inputs.positives = &positives;

    const DetectionResult res = run_detection(inputs, cfg, false);
    CHECK(res.reference_deltas.size() == 10);

    // Four statistics over 11 pooled samples, negatives first.
    REQUIRE(res.scored.size() == 4 * 11);
    std::set<std::string> stats;
    for (const auto& s : res.scored) stats.insert(s.statistic);
    CHECK(stats == std::set<std::string>{"loglik", "perm", "rank", "waic"});
    for (const auto& s : res.scored) {
        if (s.sample_id.rfind("neg_", 0) == 0) CHECK(s.label == 0);
        if (s.sample_id.rfind("pos_", 0) == 0) CHECK(s.label == 1);
    }
    const auto neg_count = std::count_if(res.scored.begin(), res.scored.end(),
                                         [](const ScoredSample& s) { return s.label == 0; });
    CHECK(neg_count == 4 * 6);

    REQUIRE(res.reports.size() == 4);
    for (const auto& rep : res.reports) {
        CHECK(rep.n_pos == 5);
        CHECK(rep.n_neg == 6);
        CHECK(rep.auc >= 0.0);
        CHECK(rep.auc <= 1.0);
        CHECK(rep.ap >= 0.0);
        CHECK(rep.ap <= 1.0);
    }
}

TEST_CASE("detection without an ensemble skips the disagreement statistic") {
    const FlowModel model = small_flow(415);
    const Matrix train_pool = random_matrix(48, 2, 416);
    const Matrix ref_set = random_matrix(8, 2, 417);
    const Matrix negatives = random_matrix(5, 2, 418);
    const Matrix positives = shifted(random_matrix(5, 2, 419), 3.0);

    DetectionInputs inputs;
    inputs.model = &model;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref_set;
    inputs.negatives = &negatives;
    inputs.positives = &positives;

    const DetectionResult res = run_detection(inputs, small_cfg(), false);
    std::set<std::string> stats;
    for (const auto& s : res.scored) stats.insert(s.statistic);
    CHECK(stats == std::set<std::string>{"loglik", "perm", "rank"});
    CHECK(res.scored.size() == 3 * 10);
}

TEST_CASE("detection runs are reproducible") {
    const FlowModel model = small_flow(420);
    const Matrix train_pool = random_matrix(40, 2, 421);
    const Matrix ref_set = random_matrix(8, 2, 422);
    const Matrix negatives = random_matrix(5, 2, 423);
    const Matrix positives = shifted(random_matrix(5, 2, 424), 2.0);

    DetectionInputs inputs;
    inputs.model = &model;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref_set;
    inputs.negatives = &negatives;
    inputs.positives = &positives;

    const DetectionResult a = run_detection(inputs, small_cfg(), true);
    const DetectionResult b = run_detection(inputs, small_cfg(), true);
    REQUIRE(a.scored.size() == b.scored.size());
    for (std::size_t i = 0; i < a.scored.size(); ++i) {
        CHECK(a.scored[i].sample_id == b.scored[i].sample_id);
        CHECK(a.scored[i].score == b.scored[i].score);
    }
}

TEST_CASE("detection validates its inputs") {
    const FlowModel model = small_flow(425);
    const Matrix train_pool = random_matrix(40, 2, 426);
    const Matrix ref_set = random_matrix(8, 2, 427);
    const Matrix negatives = random_matrix(5, 2, 428);
    const Matrix positives = random_matrix(5, 2, 429);
    const StatisticConfig cfg = small_cfg();

    DetectionInputs inputs;
    inputs.model = &model;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref_set;
    inputs.negatives = &negatives;
    CHECK_THROWS_AS(run_detection(inputs, cfg, false), DataError); // positives missing

    inputs.positives = &positives;
    const std::vector<FlowModel> bad_dim = {[] {
        Rng rng(430);
        ConditionerFlowOptions opts;
        opts.couplings = 1;
        opts.hidden = {4};
        return make_conditioner_flow(3, opts, rng);
    }()};
    inputs.ensemble = bad_dim;
    CHECK_THROWS_AS(run_detection(inputs, cfg, false), ConfigError);
}

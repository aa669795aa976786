#include <cmath>

#include <doctest.h>

#include "oodnorm/errors.hpp"
#include "oodnorm/flow.hpp"
#include "oodnorm/rng.hpp"

using namespace oodnorm;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

FlowModel random_flow(std::size_t dim, std::size_t couplings, bool alternating,
                      std::uint64_t seed) {
    Rng rng(seed);
    ConditionerFlowOptions opts;
    opts.couplings = couplings;
    opts.hidden = {6};
    opts.alternating = alternating;
    return make_conditioner_flow(dim, opts, rng);
}

/// Conditioner flow whose transforms are exactly the identity: the final layer
/// of every s and t net is zeroed, so s = 1, t = 0 in both modes.
FlowModel zeroed_flow(std::size_t dim, std::size_t couplings = 1) {
    FlowModel m = random_flow(dim, couplings, false, derive_seed(77, couplings));
    for (CouplingLayer& layer : m.layers) {
        auto& a = std::get<AffineCoupling>(layer);
        for (Mlp* net : {&a.s_net, &a.t_net}) {
            MlpLayer& last = net->layers.back();
            for (std::size_t r = 0; r < last.W.rows(); ++r) {
                for (std::size_t c = 0; c < last.W.cols(); ++c) last.W(r, c) = 0.0;
            }
            for (double& b : last.b) b = 0.0;
        }
    }
    return m;
}

/// Numeric |det J| of the Evaluation-mode map at row 0 of X, dim-2 models.
double numeric_jacobian_det(const FlowModel& model, const Matrix& X) {
    const double h = 1e-6;
    double j[2][2];
    for (std::size_t c = 0; c < 2; ++c) {
        Matrix plus = X, minus = X;
        plus(0, c) += h;
        minus(0, c) -= h;
        const Matrix zp = flow_forward(model, plus, EvalMode::Evaluation).z;
        const Matrix zm = flow_forward(model, minus, EvalMode::Evaluation).z;
        for (std::size_t r = 0; r < 2; ++r) j[r][c] = (zp(0, r) - zm(0, r)) / (2.0 * h);
    }
    return std::abs(j[0][0] * j[1][1] - j[0][1] * j[1][0]);
}

} // namespace

TEST_CASE("zeroed conditioners give the identity map with zero log-det") {
    const FlowModel m = zeroed_flow(2, 2);
    const Matrix x = random_matrix(5, 2, 11);
    for (EvalMode mode : {EvalMode::Training, EvalMode::Evaluation}) {
        const FlowForward fwd = flow_forward(m, x, mode);
        CHECK(fwd.z == x);
        for (double ld : fwd.log_det) CHECK(ld == 0.0);
    }
}

TEST_CASE("identity-map log-likelihood at the origin is the prior constant") {
    const FlowModel m = zeroed_flow(2);
    Matrix origin(1, 2);
    const Vector ll = log_likelihood(m, origin, EvalMode::Evaluation);
    CHECK(ll[0] == doctest::Approx(-kLog2Pi).epsilon(1e-15));
}

TEST_CASE("bpd of the dim-1 prior constant") {
    CHECK(bpd(-0.9189385332046727, 1) == doctest::Approx(1.3257480647361593).epsilon(1e-15));
    // bpd is -loglik / (dim * ln 2)
    CHECK(bpd(-2.0, 2) == doctest::Approx(2.0 / (2.0 * std::log(2.0))));
}

TEST_CASE("inverse undoes the forward map in Evaluation mode") {
    for (std::size_t dim : {2ul, 3ul, 5ul}) {
        for (bool alternating : {false, true}) {
            const FlowModel m = random_flow(dim, 3, alternating, derive_seed(21, dim, alternating));
            const Matrix x = random_matrix(7, dim, derive_seed(22, dim, alternating));
            const FlowForward fwd = flow_forward(m, x, EvalMode::Evaluation);
            const Matrix back = flow_inverse(m, fwd.z);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    CHECK(back(r, c) == doctest::Approx(x(r, c)).epsilon(1e-10));
                }
            }
        }
    }
}

TEST_CASE("log-det matches a numeric Jacobian determinant") {
    for (std::uint64_t trial = 0; trial < 4; ++trial) {
        const FlowModel m = random_flow(2, 2, trial % 2 == 0, derive_seed(31, trial));
        const Matrix x = random_matrix(1, 2, derive_seed(32, trial));
        const FlowForward fwd = flow_forward(m, x, EvalMode::Evaluation);
        const double det = numeric_jacobian_det(m, x);
        CHECK(std::exp(fwd.log_det[0]) == doctest::Approx(det).epsilon(1e-5));
    }
}

TEST_CASE("log-det of a normalization coupling is log|gamma| in both modes") {
    FlowModel m = make_paired_bn_flow(2);
    auto& bn = std::get<BnCoupling>(m.layers[0]).bn;
    bn.gamma[0] = 1.7;
    bn.running_mean[0] = 0.4;
    bn.running_var[0] = 2.0;

    const Matrix x = random_matrix(4, 2, 51);
    const FlowForward eval = flow_forward(m, x, EvalMode::Evaluation);
    const FlowForward train = flow_forward(m, x, EvalMode::Training);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        CHECK(eval.log_det[r] == doctest::Approx(std::log(1.7)).epsilon(1e-15));
        CHECK(train.log_det[r] == doctest::Approx(std::log(1.7)).epsilon(1e-15));
    }
    // Eval-mode numeric Jacobian agrees.
    Matrix one(1, 2);
    one(0, 0) = 0.3;
    one(0, 1) = -0.2;
    CHECK(std::exp(flow_forward(m, one, EvalMode::Evaluation).log_det[0]) ==
          doctest::Approx(numeric_jacobian_det(m, one)).epsilon(1e-6));
}

TEST_CASE("paired normalization coupling: hand-computed training batch") {
    const FlowModel m = make_paired_bn_flow(2);
    Matrix x(2, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 5.0;
    x(1, 0) = 3.0;
    x(1, 1) = 7.0;
    const FlowForward fwd = flow_forward(m, x, EvalMode::Training);
    // Pass coord: column 0 (mean 2, unbiased var 2). Transformed column 1:
    // z = 1 * y + (x0 - 2) / sqrt(2 + eps).
    const double scale = 1.0 / std::sqrt(2.0 + 1e-5);
    CHECK(fwd.z(0, 0) == 1.0);
    CHECK(fwd.z(1, 0) == 3.0);
    CHECK(fwd.z(0, 1) == doctest::Approx(5.0 - scale).epsilon(1e-14));
    CHECK(fwd.z(1, 1) == doctest::Approx(7.0 + scale).epsilon(1e-14));
    CHECK(fwd.log_det[0] == 0.0);
    CHECK(fwd.log_det[1] == 0.0);
}

TEST_CASE("scale cap bounds the per-coordinate log-scale") {
    FlowModel m = random_flow(2, 1, false, 61);
    auto& a = std::get<AffineCoupling>(m.layers[0]);
    // Blow up the s-net output weights; the cap must still bound log s.
    MlpLayer& last = a.s_net.layers.back();
    for (std::size_t r = 0; r < last.W.rows(); ++r) {
        for (std::size_t c = 0; c < last.W.cols(); ++c) last.W(r, c) = 1e6;
    }
    for (double& b : last.b) b = 1e6;
    const Matrix x = random_matrix(6, 2, 62);
    const FlowForward fwd = flow_forward(m, x, EvalMode::Evaluation);
    const double max_ld = a.scale_cap * 1.0; // one transformed coordinate
    for (double ld : fwd.log_det) {
        CHECK(ld <= max_ld + 1e-12);
        CHECK(ld >= -max_ld - 1e-12);
    }
}

TEST_CASE("model validation rejects malformed couplings") {
    FlowModel empty;
    empty.dim = 2;
    CHECK_THROWS_AS(validate_model(empty), DataError);

    FlowModel all_pass = random_flow(2, 1, false, 71);
    std::get<AffineCoupling>(all_pass.layers[0]).mask = {1, 1};
    CHECK_THROWS_AS(validate_model(all_pass), DataError);

    FlowModel bad_pair = make_paired_bn_flow(4);
    std::get<BnCoupling>(bad_pair.layers[0]).mask = {1, 1, 1, 0};
    CHECK_THROWS_AS(validate_model(bad_pair), DataError);
}

TEST_CASE("forward rejects bad inputs") {
    const FlowModel m = random_flow(2, 1, false, 81);
    Matrix one(1, 2);
    CHECK_THROWS_AS(flow_forward(m, one, EvalMode::Training), DataError);
    Matrix wrong(2, 3);
    CHECK_THROWS_AS(flow_forward(m, wrong, EvalMode::Evaluation), DataError);
    Matrix bad(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(flow_forward(m, bad, EvalMode::Evaluation), DataError);
}

TEST_CASE("training-mode likelihood of a duplicated row batch is well-defined") {
    const FlowModel m = random_flow(2, 2, false, 91);
    Matrix x(3, 2);
    for (std::size_t r = 0; r < 3; ++r) {
        x(r, 0) = 0.4;
        x(r, 1) = -1.1;
    }
    const Vector ll = log_likelihood(m, x, EvalMode::Training);
    for (double v : ll) CHECK(std::isfinite(v));
    CHECK(ll[0] == ll[1]);
    CHECK(ll[1] == ll[2]);
}

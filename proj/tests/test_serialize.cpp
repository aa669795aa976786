#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "oodnorm/errors.hpp"
#include "oodnorm/rng.hpp"
#include "oodnorm/serialize.hpp"

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

/// A model exercising every serialized field: affine couplings with hidden
/// batch norm, a norm coupling, and perturbed running statistics.
FlowModel messy_model() {
    Rng rng(601);
    ConditionerFlowOptions opts;
    opts.couplings = 2;
    opts.hidden = {5, 3};
    opts.alternating = true;
    FlowModel m = make_conditioner_flow(4, opts, rng);
    m.layers.push_back([&] {
        BnCoupling c;
        c.mask = {1, 0, 1, 0};
        c.bn = BatchNormState::identity(2);
        c.bn.gamma[0] = 0.734;
        c.bn.beta[0] = -1.25;
        c.bn.running_mean[0] = 0.001953125; // exact binary fraction
        c.bn.running_var[0] = 2.718281828459045;
        return c;
    }());
    // Perturb a hidden batch-norm site so running stats are not all identity.
    auto& first = std::get<AffineCoupling>(m.layers[0]);
    auto& bn = *first.s_net.layers[0].bn;
    for (std::size_t i = 0; i < bn.width(); ++i) {
        bn.running_mean[i] = 0.1 * static_cast<double>(i) - 0.3;
        bn.running_var[i] = 1.0 + 0.01 * static_cast<double>(i);
        bn.gamma[i] = 1.0 - 0.05 * static_cast<double>(i);
    }
    return m;
}

} // namespace

TEST_CASE("model text round-trips bit-exactly") {
    const FlowModel m = messy_model();
    const std::string text = model_to_text(m);
    const FlowModel back = model_from_text(text);

    // Textual fixpoint implies every double survived exactly.
    CHECK(model_to_text(back) == text);

    // And the round-tripped model computes identical likelihoods in both modes.
    const Matrix batch = random_matrix(5, 4, 602);
    for (EvalMode mode : {EvalMode::Training, EvalMode::Evaluation}) {
        const Vector a = log_likelihood(m, batch, mode);
        const Vector b = log_likelihood(back, batch, mode);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("model files round-trip through disk") {
    namespace fs = std::filesystem;
    const FlowModel m = messy_model();
    const fs::path path = fs::temp_directory_path() / "oodnorm_serialize_test.json";
    save_model(m, path.string());
    const FlowModel back = load_model(path.string());
    CHECK(model_to_text(back) == model_to_text(m));
    fs::remove(path);

    CHECK_THROWS_AS(load_model((fs::temp_directory_path() / "missing_model.json").string()),
                    DataError);
}

TEST_CASE("loader rejects malformed model text") {
    CHECK_THROWS_AS(model_from_text("not json at all"), DataError);
    CHECK_THROWS_AS(model_from_text("{}"), DataError);
    CHECK_THROWS_AS(model_from_text(R"({"format":"other","dim":2,"layers":[]})"), DataError);

    // Structurally valid JSON that fails model validation: the declared
    // dimension no longer matches the coupling masks.
    const FlowModel m = messy_model();
    std::string text = model_to_text(m);
    const std::string from = "\"dim\": 4";
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), "\"dim\": 5");
    CHECK_THROWS_AS(model_from_text(text), DataError);
}

TEST_CASE("extreme doubles survive the text encoding") {
    FlowModel m = make_paired_bn_flow(2);
    auto& bn = std::get<BnCoupling>(m.layers[0]).bn;
    bn.running_mean[0] = 1e-300;
    bn.running_var[0] = 1e300;
    bn.beta[0] = -0.0;
    bn.gamma[0] = 1.0 / 3.0;
    const FlowModel back = model_from_text(model_to_text(m));
    const auto& bback = std::get<BnCoupling>(back.layers[0]).bn;
    CHECK(bback.running_mean[0] == 1e-300);
    CHECK(bback.running_var[0] == 1e300);
    CHECK(bback.gamma[0] == 1.0 / 3.0);
    CHECK(std::signbit(bback.beta[0]));
}

#include <cmath>

#include <doctest.h>

#include "oodnorm/errors.hpp"
#include "oodnorm/rng.hpp"
#include "oodnorm/synth.hpp"

using namespace oodnorm;

namespace {

double mean_of(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double var_of(const Vector& v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

ScenarioSpec spec_of(const std::string& name, std::size_t n, std::uint64_t seed) {
    ScenarioSpec s;
    s.name = name;
    s.n = n;
    s.seed = seed;
    return s;
}

} // namespace

TEST_CASE("two-mode mixture: closed-form moments") {
    ScenarioSpec s = spec_of("gauss_mixture_1d", 100000, 1);
    s.params["sigma"] = 0.1;
    const Dataset ds = sample(s);
    CHECK(ds.data.cols() == 1);
    CHECK(ds.data.rows() == 100000);
    const Vector xs = column(ds.data, 0);
    // Mixture of N(-1, sigma^2) and N(+1, sigma^2): mean 0, variance 1 + sigma^2.
    CHECK(std::abs(mean_of(xs)) < 0.02);
    CHECK(std::abs(var_of(xs) - 1.01) < 0.03);
    // Both modes are populated.
    std::size_t lo = 0;
    for (double x : xs) lo += x < 0 ? 1 : 0;
    CHECK(lo > 45000);
    CHECK(lo < 55000);
}

TEST_CASE("planar mixture adds a tight second coordinate") {
    ScenarioSpec s = spec_of("bimodal_2d", 20000, 2);
    s.params["sigma"] = 0.05;
    s.params["slab_var"] = 1e-6;
    const Dataset ds = sample(s);
    CHECK(ds.data.cols() == 2);
    const Vector x1 = column(ds.data, 1);
    CHECK(std::abs(var_of(x1) - 1e-6) < 2e-7);
    CHECK(std::abs(mean_of(x1)) < 1e-4);
}

TEST_CASE("uniform scenario respects its interval") {
    ScenarioSpec s = spec_of("uniform_q", 20000, 3);
    s.params["a"] = -0.5;
    s.params["b"] = 0.5;
    const Dataset ds = sample(s);
    const Vector xs = column(ds.data, 0);
    for (double x : xs) {
        CHECK(x > -0.5);
        CHECK(x < 0.5);
    }
    // Uniform(-1/2, 1/2) variance is 1/12.
    CHECK(std::abs(var_of(xs) - 1.0 / 12.0) < 0.005);
}

TEST_CASE("saddle-point scenario concentrates between the modes") {
    ScenarioSpec s = spec_of("mode_trap", 20000, 4);
    const Dataset ds = sample(s);
    const Vector xs = column(ds.data, 0);
    CHECK(std::abs(mean_of(xs)) < 0.001);
    CHECK(std::abs(var_of(xs) - 1e-4) < 1e-5);
}

TEST_CASE("sampling is a pure function of the seed") {
    ScenarioSpec s = spec_of("bimodal_2d", 64, 9);
    const Dataset a = sample(s);
    const Dataset b = sample(s);
    CHECK(a.data == b.data);
    s.seed = 10;
    const Dataset c = sample(s);
    CHECK_FALSE(a.data == c.data);
}

TEST_CASE("unknown scenarios and parameters are config errors") {
    CHECK_THROWS_AS(sample(spec_of("no_such_scenario", 8, 0)), ConfigError);
    ScenarioSpec s = spec_of("gauss_mixture_1d", 8, 0);
    s.params["slab_var"] = 1.0; // not a parameter of this scenario
    CHECK_THROWS_AS(sample(s), ConfigError);
    ScenarioSpec bad_sigma = spec_of("mode_trap", 8, 0);
    bad_sigma.params["sigma"] = -1.0;
    CHECK_THROWS_AS(sample(bad_sigma), ConfigError);
    CHECK_THROWS_AS(sample(spec_of("bimodal_2d", 0, 0)), ConfigError);
    // Model-based scenario without a model.
    CHECK_THROWS_AS(sample(spec_of("flow_temperature", 8, 0)), ConfigError);
}

TEST_CASE("temperature sampling scales the latent radius") {
    Rng rng(derive_seed(11, 0));
    ConditionerFlowOptions opts;
    opts.couplings = 1;
    opts.hidden = {4};
    const FlowModel model = make_conditioner_flow(2, opts, rng);

    const Dataset hot = sample_temperature(model, 4000, 1.0, 5);
    const Dataset cold = sample_temperature(model, 4000, 0.05, 5);
    // Samples at tiny temperature collapse toward the map of the origin.
    const double spread_hot = var_of(column(hot.data, 0)) + var_of(column(hot.data, 1));
    const double spread_cold = var_of(column(cold.data, 0)) + var_of(column(cold.data, 1));
    CHECK(spread_cold < 0.05 * spread_hot);

    CHECK_THROWS_AS(sample_temperature(model, 10, 0.0, 5), ConfigError);
    CHECK_THROWS_AS(sample_temperature(model, 0, 1.0, 5), ConfigError);

    // The scenario wrapper produces the same draw.
    ScenarioSpec s = spec_of("flow_temperature", 4000, 5);
    s.params["temperature"] = 1.0;
    const Dataset via_spec = sample(s, &model);
    CHECK(via_spec.data == hot.data);
}

TEST_CASE("single-Gaussian fit reproduces closed-form moments") {
    const Vector xs = {1.0, 2.0, 3.0, 6.0};
    const GaussianFit1D fit = GaussianFit1D::fit(xs);
    CHECK(fit.mean == doctest::Approx(3.0));
    CHECK(fit.var == doctest::Approx(3.5)); // population variance
    // At the mean the density is 1/sqrt(2 pi var).
    CHECK(fit.loglik(3.0) ==
          doctest::Approx(-0.5 * std::log(2.0 * 3.141592653589793238 * 3.5)).epsilon(1e-12));
    CHECK_THROWS_AS(GaussianFit1D::fit({1.0}), DataError);
    CHECK_THROWS_AS(GaussianFit1D::fit({2.0, 2.0}), DataError);
}

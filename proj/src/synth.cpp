#include "oodnorm/synth.hpp"

#include <cmath>
#include <set>

#include "oodnorm/errors.hpp"
#include "oodnorm/rng.hpp"

namespace oodnorm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_params(const ScenarioSpec& spec, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : spec.params) {
        (void)value;
        if (!allowed.contains(key)) {
            throw ConfigError("scenario '" + spec.name + "' does not take parameter '" + key + "'");
        }
    }
}

double positive_param(const ScenarioSpec& spec, const std::string& key, double fallback) {
    const double v = spec.param(key, fallback);
    if (!(v > 0.0)) {
        throw ConfigError("scenario '" + spec.name + "': parameter '" + key + "' must be positive");
    }
    return v;
}

} // namespace

double ScenarioSpec::param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

Dataset sample(const ScenarioSpec& spec, const FlowModel* model) {
    if (spec.n == 0) {
        throw ConfigError("scenario '" + spec.name + "': sample count must be positive");
    }
    Rng rng(derive_seed(spec.seed, 0x5ce9));

    if (spec.name == "gauss_mixture_1d") {
        check_params(spec, {"sigma"});
        const double sigma = positive_param(spec, "sigma", 0.1);
        Matrix out(spec.n, 1);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const double center = rng.uniform01() < 0.5 ? -1.0 : 1.0;
            out(i, 0) = center + sigma * rng.normal();
        }
        return {std::move(out), spec.name};
    }
    if (spec.name == "bimodal_2d") {
        check_params(spec, {"sigma", "slab_var"});
        const double sigma = positive_param(spec, "sigma", 0.05);
        const double slab_sd = std::sqrt(positive_param(spec, "slab_var", 1e-6));
        Matrix out(spec.n, 2);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const double center = rng.uniform01() < 0.5 ? -1.0 : 1.0;
            out(i, 0) = center + sigma * rng.normal();
            out(i, 1) = slab_sd * rng.normal();
        }
        return {std::move(out), spec.name};
    }
    if (spec.name == "uniform_q") {
        check_params(spec, {"a", "b", "slab_var"});
        const double a = spec.param("a", -0.5);
        const double b = spec.param("b", 0.5);
        if (!(b > a)) {
            throw ConfigError("scenario 'uniform_q': requires b > a");
        }
        const double slab_sd = std::sqrt(positive_param(spec, "slab_var", 1e-6));
        Matrix out(spec.n, 2);
        for (std::size_t i = 0; i < spec.n; ++i) {
            out(i, 0) = rng.uniform(a, b);
            out(i, 1) = slab_sd * rng.normal();
        }
        return {std::move(out), spec.name};
    }
    if (spec.name == "mode_trap") {
        check_params(spec, {"sigma", "slab_var"});
        const double sigma = positive_param(spec, "sigma", 0.01);
        const double slab_sd = std::sqrt(positive_param(spec, "slab_var", 1e-6));
        Matrix out(spec.n, 2);
        for (std::size_t i = 0; i < spec.n; ++i) {
            out(i, 0) = sigma * rng.normal();
            out(i, 1) = slab_sd * rng.normal();
        }
        return {std::move(out), spec.name};
    }
    if (spec.name == "flow_temperature") {
        check_params(spec, {"temperature"});
        const double temperature = positive_param(spec, "temperature", 1.0);
        if (model == nullptr) {
            throw ConfigError("scenario 'flow_temperature' requires a model");
        }
        Dataset out = sample_temperature(*model, spec.n, temperature, spec.seed);
        return out;
    }
    throw ConfigError("unknown scenario '" + spec.name + "'");
}

Dataset sample_temperature(const FlowModel& model, std::size_t n, double temperature,
                           std::uint64_t seed) {
    if (n == 0) {
        throw ConfigError("sample_temperature: sample count must be positive");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("sample_temperature: temperature must be positive");
    }
    Rng rng(derive_seed(seed, 0x7e3a));
    Matrix z(n, model.dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < model.dim; ++j) {
            z(i, j) = temperature * rng.normal();
        }
    }
    return {flow_inverse(model, z), "flow_temperature"};
}

GaussianFit1D GaussianFit1D::fit(const Vector& xs) {
    if (xs.size() < 2) {
        throw DataError("GaussianFit1D::fit: needs at least two points");
    }
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    if (!(var > 0.0)) {
        throw DataError("GaussianFit1D::fit: degenerate sample variance");
    }
    return {mean, var};
}

double GaussianFit1D::loglik(double x) const {
    const double d = x - mean;
    return -0.5 * (d * d / var + std::log(var) + kLog2Pi);
}

Vector column(const Matrix& m, std::size_t j) {
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, j);
    return out;
}

} // namespace oodnorm

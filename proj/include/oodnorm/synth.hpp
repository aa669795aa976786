#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "oodnorm/flow.hpp"

namespace oodnorm {

/// A named synthetic data source plus its parameters. Sampling is a pure
/// function of (name, params, n, seed).
struct ScenarioSpec {
    std::string name;
    std::map<std::string, double> params;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    double param(const std::string& key, double fallback) const;
};

struct Dataset {
    Matrix data;
    std::string scenario;
};

/// Scenarios:
///   gauss_mixture_1d  even mixture of N(-1, sigma^2) and N(+1, sigma^2); dim 1.
///   bimodal_2d       (gauss_mixture_1d draw, N(0, slab_var)); dim 2.
///   uniform_q         (Uniform(a, b), N(0, slab_var)); dim 2.
///   mode_trap         (N(0, sigma^2) at the inter-mode saddle, N(0, slab_var)); dim 2.
///   flow_temperature  model samples with latents scaled by T; needs `model`.
/// Unknown names or parameters raise ConfigError. All draws use the project's
/// own Gaussian transform so streams are reproducible across platforms.
Dataset sample(const ScenarioSpec& spec, const FlowModel* model = nullptr);

/// x = flow_inverse(T * z) with z standard normal; equivalently latents from
/// N(0, T^2 I). T must be positive.
Dataset sample_temperature(const FlowModel& model, std::size_t n, double temperature,
                           std::uint64_t seed);

/// Closed-form single-Gaussian fit to a 1-d sample (moment matching); the
/// mode-covering baseline the saddle-point scenario is designed to fool.
struct GaussianFit1D {
    double mean = 0.0;
    double var = 1.0;

    static GaussianFit1D fit(const Vector& xs);
    double loglik(double x) const;
};

/// Column j of a dataset as a vector.
Vector column(const Matrix& m, std::size_t j);

} // namespace oodnorm

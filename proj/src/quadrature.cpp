#include "oodnorm/quadrature.hpp"

#include <cmath>

#include "oodnorm/errors.hpp"
#include "oodnorm/parallel.hpp"

namespace oodnorm {

namespace {

std::size_t grid_points(const QuadratureSpec& spec) {
    if (!(spec.hi > spec.lo)) throw ConfigError("quadrature: requires hi > lo");
    if (!(spec.step > 0.0)) throw ConfigError("quadrature: step must be positive");
    const auto n = static_cast<std::size_t>(std::llround((spec.hi - spec.lo) / spec.step));
    if (n == 0) throw ConfigError("quadrature: grid is empty");
    return n;
}

/// Density mass of grid column i: sum over the second coordinate of the probe
/// row's conditional density. The inner loop stays serial so the per-column
/// value has a fixed summation order.
double column_mass(const FlowModel& model, const Matrix& companions, const QuadratureSpec& spec,
                   std::size_t n, std::size_t i) {
    Matrix batch(companions.rows() + 1, 2);
    for (std::size_t r = 0; r < companions.rows(); ++r) {
        batch(r, 0) = companions(r, 0);
        batch(r, 1) = companions(r, 1);
    }
    const std::size_t probe = companions.rows();
    const double x = spec.lo + (static_cast<double>(i) + 0.5) * spec.step;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        batch(probe, 0) = x;
        batch(probe, 1) = spec.lo + (static_cast<double>(j) + 0.5) * spec.step;
        const Vector ll = log_likelihood(model, batch, EvalMode::Training);
        acc += std::exp(ll[probe]);
    }
    return acc;
}

void validate_quadrature_inputs(const FlowModel& model, const Matrix& companions) {
    if (model.dim != 2) throw ConfigError("quadrature: only dim-2 models are supported");
    if (companions.rows() == 0 || companions.cols() != 2) {
        throw DataError("quadrature: companion batch is empty or has the wrong width");
    }
}

} // namespace

double conditional_quadrature(const FlowModel& model, const Matrix& companions,
                              const QuadratureSpec& spec, bool parallel) {
    validate_quadrature_inputs(model, companions);
    const std::size_t n = grid_points(spec);
    const Vector masses = parallel_map(
        n, parallel, [&](std::size_t i) { return column_mass(model, companions, spec, n, i); });
    double total = 0.0;
    for (double m : masses) total += m;
    return total * spec.step * spec.step;
}

namespace serial {
double conditional_quadrature(const FlowModel& model, const Matrix& companions,
                              const QuadratureSpec& spec) {
    validate_quadrature_inputs(model, companions);
    const std::size_t n = grid_points(spec);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += column_mass(model, companions, spec, n, i);
    return total * spec.step * spec.step;
}
} // namespace serial

} // namespace oodnorm

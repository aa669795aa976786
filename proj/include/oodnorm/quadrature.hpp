#pragma once

#include "oodnorm/flow.hpp"

namespace oodnorm {

/// Midpoint grid over [lo, hi]^2 (dim-2 models only).
struct QuadratureSpec {
    double lo = -8.0;
    double hi = 8.0;
    double step = 0.02;
};

/// Integral over the grid of the probe sample's Training-mode conditional
/// density given a fixed companion batch: each grid point is scored inside
/// the batch [companions; point]. For a well-formed model this integrates to
/// one even though the normalization statistics depend on the probe itself.
double conditional_quadrature(const FlowModel& model, const Matrix& companions,
                              const QuadratureSpec& spec, bool parallel = true);

namespace serial {
double conditional_quadrature(const FlowModel& model, const Matrix& companions,
                              const QuadratureSpec& spec);
} // namespace serial

} // namespace oodnorm

#include "oodnorm/batchnorm.hpp"

#include <cmath>

#include "oodnorm/errors.hpp"

namespace oodnorm {

Matrix bn_forward(const BatchNormState& state, const Matrix& in, EvalMode mode, BnCache* cache,
                  BnStats* used) {
    const std::size_t b = in.rows();
    const std::size_t f = in.cols();
    if (f != state.width()) throw DataError("bn_forward: feature width mismatch");

    Vector mean(f, 0.0), var(f, 0.0);
    if (mode == EvalMode::Training) {
        if (b < 2) throw DataError("bn_forward: Training mode needs a batch of at least 2 rows");
        for (std::size_t c = 0; c < f; ++c) {
            double m = 0.0;
            for (std::size_t r = 0; r < b; ++r) m += in(r, c);
            m /= static_cast<double>(b);
            double v = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
                const double d = in(r, c) - m;
                v += d * d;
            }
            v /= static_cast<double>(b - 1); // unbiased batch variance
            mean[c] = m;
            var[c] = v;
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    Matrix out(b, f);
    Vector inv_std(f);
    for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
    if (cache) {
        cache->xhat = Matrix(b, f);
        cache->inv_std = inv_std;
        cache->rows = b;
    }
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
            const double xh = (in(r, c) - mean[c]) * inv_std[c];
            if (cache) cache->xhat(r, c) = xh;
            out(r, c) = xh * state.gamma[c] + state.beta[c];
        }
    }
    if (used) {
        used->mean = std::move(mean);
        used->var = std::move(var);
    }
    return out;
}

Matrix bn_backward(const BatchNormState& state, const BnCache& cache, const Matrix& dout,
                   Vector& dgamma, Vector& dbeta) {
    const std::size_t b = cache.rows;
    const std::size_t f = state.width();
    Matrix din(b, f);
    for (std::size_t c = 0; c < f; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t r = 0; r < b; ++r) {
            sum_dy += dout(r, c);
            sum_dy_xhat += dout(r, c) * cache.xhat(r, c);
        }
        dgamma[c] += sum_dy_xhat;
        dbeta[c] += sum_dy;
        // dxhat = dout * gamma; the variance path divides by (b-1) because the
        // forward pass used the unbiased batch variance.
        const double g = state.gamma[c];
        const double mean_dxhat = g * sum_dy / static_cast<double>(b);
        const double var_coeff = g * sum_dy_xhat / static_cast<double>(b - 1);
        for (std::size_t r = 0; r < b; ++r) {
            const double dxhat = dout(r, c) * g;
            din(r, c) = (dxhat - mean_dxhat - cache.xhat(r, c) * var_coeff) * cache.inv_std[c];
        }
    }
    return din;
}

std::pair<Matrix, BnStats> batchnorm_forward(const BatchNormState& state, const Matrix& in,
                                             EvalMode mode) {
    if (!in.all_finite()) throw DataError("batchnorm_forward: non-finite input");
    BnStats used;
    Matrix out = bn_forward(state, in, mode, nullptr, &used);
    return {std::move(out), std::move(used)};
}

} // namespace oodnorm

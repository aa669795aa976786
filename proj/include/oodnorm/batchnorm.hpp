#pragma once

#include "oodnorm/matrix.hpp"

namespace oodnorm {

/// Whether batch statistics come from the current batch or from running averages.
enum class EvalMode { Training, Evaluation };

/// Per-feature affine normalization state. In Training mode features are centered
/// and scaled with the current batch mean and the unbiased (1/(b-1)) batch variance;
/// in Evaluation mode the stored running statistics are used instead.
struct BatchNormState {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    std::size_t width() const { return gamma.size(); }

    static BatchNormState identity(std::size_t width, double eps = 1e-5,
                                   double momentum = 0.1) {
        BatchNormState s;
        s.gamma.assign(width, 1.0);
        s.beta.assign(width, 0.0);
        s.running_mean.assign(width, 0.0);
        s.running_var.assign(width, 1.0);
        s.eps = eps;
        s.momentum = momentum;
        return s;
    }

    /// EMA update from the statistics of one training batch.
    void update_running(const Vector& batch_mean, const Vector& batch_var) {
        for (std::size_t f = 0; f < width(); ++f) {
            running_mean[f] = (1.0 - momentum) * running_mean[f] + momentum * batch_mean[f];
            running_var[f] = (1.0 - momentum) * running_var[f] + momentum * batch_var[f];
        }
    }
};

/// The (mean, variance) pair a forward pass actually normalized with.
struct BnStats {
    Vector mean;
    Vector var;
};

/// Forward-pass byproducts needed by the training-mode backward pass.
struct BnCache {
    Matrix xhat;      // normalized pre-scale values
    Vector inv_std;   // 1 / sqrt(var + eps) per feature
    std::size_t rows = 0;
};

/// Normalizes `in` (rows = batch, cols = features). Training mode requires at least
/// two rows; the stats used are written to `used` when non-null, and `cache` is
/// filled for the backward pass when non-null.
Matrix bn_forward(const BatchNormState& state, const Matrix& in, EvalMode mode,
                  BnCache* cache = nullptr, BnStats* used = nullptr);

/// Input/parameter gradients of the Training-mode forward pass. `dout` is the loss
/// gradient with respect to the forward output; gradients are accumulated into
/// dgamma/dbeta, and the input gradient is returned.
Matrix bn_backward(const BatchNormState& state, const BnCache& cache, const Matrix& dout,
                   Vector& dgamma, Vector& dbeta);

/// Convenience wrapper matching the public operation contract: validates input
/// finiteness and returns the normalized batch together with the stats used.
std::pair<Matrix, BnStats> batchnorm_forward(const BatchNormState& state, const Matrix& in,
                                             EvalMode mode);

} // namespace oodnorm

#pragma once

#include <optional>
#include <vector>

#include "oodnorm/batchnorm.hpp"
#include "oodnorm/matrix.hpp"
#include "oodnorm/rng.hpp"

namespace oodnorm {

enum class Activation { Tanh, Identity };

/// One dense layer: Y = act(norm(X * W + b)). Normalization sits before the
/// activation and is optional; the final layer of a network carries neither.
struct MlpLayer {
    Matrix W; // (in, out)
    Vector b; // (out)
    std::optional<BatchNormState> bn;
    Activation act = Activation::Identity;

    std::size_t in_dim() const { return W.rows(); }
    std::size_t out_dim() const { return W.cols(); }
};

struct Mlp {
    std::vector<MlpLayer> layers;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
};

/// Fully-connected net: hidden layers get normalization plus tanh, the output
/// layer is affine. Weights start uniform in +-1/sqrt(fan_in), biases at zero.
Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
             bool hidden_bn = true, double bn_eps = 1e-5, double bn_momentum = 0.1);

struct MlpLayerCache {
    Matrix input;    // layer input X
    Matrix lin;      // X * W + b (kept only when a bn follows)
    BnCache bn;      // filled when the layer normalizes
    Matrix pre_act;  // value fed to the activation
};

struct MlpCache {
    std::vector<MlpLayerCache> layers;
    std::vector<BnStats> bn_stats; // stats used by each normalizing layer, in order
};

struct MlpLayerGrad {
    Matrix dW;
    Vector db;
    Vector dgamma; // empty when the layer has no normalization
    Vector dbeta;
};

struct MlpGrad {
    std::vector<MlpLayerGrad> layers;
};

MlpGrad make_zero_grad(const Mlp& net);

/// Forward over a batch (rows = samples). `cache` enables the backward pass and
/// records the normalization stats each training-mode layer used.
Matrix mlp_forward(const Mlp& net, const Matrix& X, EvalMode mode, MlpCache* cache = nullptr);

/// Backward for a cached Training-mode forward; accumulates into `grad` and
/// returns the loss gradient with respect to the input batch.
Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dY, MlpGrad& grad);

} // namespace oodnorm

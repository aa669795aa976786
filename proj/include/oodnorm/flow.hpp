#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "oodnorm/mlp.hpp"

namespace oodnorm {

/// Affine coupling: pass-through coordinates x are copied, transformed
/// coordinates become y' = s(x) * y + t(x). The log-scale is cap * tanh(raw)
/// so per-coordinate scales stay inside [exp(-cap), exp(cap)].
struct AffineCoupling {
    std::vector<std::uint8_t> mask; // 1 = pass-through, 0 = transformed
    Mlp s_net;                      // pass_dim -> trans_dim
    Mlp t_net;                      // pass_dim -> trans_dim
    double scale_cap = 3.0;
};

/// Normalization coupling: transformed coordinate k becomes
/// y'_k = gamma_k * y_k + BN_k(x_k), pairing pass and transformed coordinates
/// one to one. The BN scale gamma doubles as the coupling scale, so the
/// per-coordinate log-det contribution is log|gamma_k| and the scale earns
/// likelihood credit the same way an s-branch would.
struct BnCoupling {
    std::vector<std::uint8_t> mask; // pass count must equal transformed count
    BatchNormState bn;              // width = transformed count
};

using CouplingLayer = std::variant<AffineCoupling, BnCoupling>;

struct FlowModel {
    std::size_t dim = 0;
    std::vector<CouplingLayer> layers;
};

std::vector<std::size_t> mask_pass_indices(const std::vector<std::uint8_t>& mask);
std::vector<std::size_t> mask_trans_indices(const std::vector<std::uint8_t>& mask);
void validate_model(const FlowModel& model);

struct FlowForward {
    Matrix z;
    Vector log_det; // per sample
};

struct AffineCouplingCache {
    Matrix P, Y;     // pass / transformed inputs
    Matrix raw_s, T; // conditioner outputs
    MlpCache s, t;
};

struct BnCouplingCache {
    Matrix P, Y;
    BnCache bn;
};

struct FlowCache {
    std::vector<std::variant<AffineCouplingCache, BnCouplingCache>> layers;
    std::vector<BnStats> bn_stats; // all normalization sites, traversal order
};

/// Maps a batch to latent space. Training mode computes normalization stats from
/// the batch itself (rows >= 2); Evaluation mode uses running stats and treats
/// each row independently.
FlowForward flow_forward(const FlowModel& model, const Matrix& X, EvalMode mode,
                         FlowCache* cache = nullptr);

/// Latents back to data space; Evaluation mode only.
Matrix flow_inverse(const FlowModel& model, const Matrix& Z);

/// Per-sample log-density under the standard-normal latent prior.
Vector log_likelihood(const FlowModel& model, const Matrix& X, EvalMode mode);

/// Bits per dimension of one log-likelihood value.
double bpd(double loglik, std::size_t dim);

struct AffineCouplingGrad {
    MlpGrad s, t;
};
struct BnCouplingGrad {
    Vector dgamma, dbeta;
};
using CouplingGrad = std::variant<AffineCouplingGrad, BnCouplingGrad>;

struct FlowGrad {
    std::vector<CouplingGrad> layers;
};

FlowGrad make_zero_grad(const FlowModel& model);

/// Backward pass for a cached Training-mode forward. `dZ` is the loss gradient
/// at the latents and `dlogdet` the (per-sample, per-coordinate) loss gradient
/// of the log-det term. Returns the gradient with respect to the input batch.
Matrix flow_backward(const FlowModel& model, const FlowCache& cache, const Matrix& dZ,
                     double dlogdet, FlowGrad& grad);

/// Pointers to every trainable parameter, in a fixed traversal order. The
/// matching grad pointers use the same order. Running statistics are not
/// trainable and are excluded.
std::vector<double*> param_ptrs(FlowModel& model);
std::vector<const double*> param_ptrs(const FlowModel& model);
std::vector<double*> grad_ptrs(FlowGrad& grad);

/// Every normalization site, in the same order the forward pass reports stats.
std::vector<BatchNormState*> bn_sites(FlowModel& model);

/// --- builders ---

/// Pairs coordinate 2k (pass) with 2k+1 (transformed) under one BnCoupling:
/// z_odd = gamma * x_odd + BN(x_even). The dim-2 instance is the minimal
/// normalization-aware flow used throughout the synthetic studies.
FlowModel make_paired_bn_flow(std::size_t dim, double eps = 1e-5, double momentum = 0.1);

struct ConditionerFlowOptions {
    std::size_t couplings = 1;
    std::vector<std::size_t> hidden = {16, 16};
    double scale_cap = 3.0;
    bool alternating = false; // false: every layer conditions on the same coords
    bool hidden_bn = true;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

/// Stack of affine couplings. With alternating=false the first ceil(dim/2)
/// coordinates are never transformed, which keeps the per-sample conditional
/// density exactly normalized even in Training mode.
FlowModel make_conditioner_flow(std::size_t dim, const ConditionerFlowOptions& opts, Rng& rng);

} // namespace oodnorm

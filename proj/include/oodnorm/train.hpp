#pragma once

#include <cstdint>
#include <vector>

#include "oodnorm/flow.hpp"

namespace oodnorm {

struct TrainConfig {
    std::size_t steps = 3000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double holdout_fraction = 0.1; // split off for the per-step evaluation column
    std::size_t max_holdout = 512;

    void validate() const;
};

/// Mean negative Training-mode log-likelihood of one batch, with gradients for
/// every trainable parameter and the normalization stats each site used.
struct LossAndGrad {
    double loss = 0.0;
    FlowGrad grad;
    std::vector<BnStats> bn_stats;
};

LossAndGrad loss_and_grad(const FlowModel& model, const Matrix& batch);

/// Same loss with gradients replaced by central finite differences; test oracle.
Vector finite_difference_grad(FlowModel model, const Matrix& batch, double step = 1e-5);

struct TrainLogRow {
    std::size_t step = 0;       // 1-based
    double train_loss = 0.0;    // nats
    double eval_bpd = 0.0;      // holdout mean, Evaluation mode
};

struct TrainResult {
    FlowModel model;
    std::vector<TrainLogRow> log;
};

/// Adam on the mean negative Training-mode log-likelihood. Batches are drawn
/// without replacement per step from a seeded stream; normalization running
/// stats track the batch stats by EMA. Non-finite loss or gradients raise
/// TrainingError with the failing step.
TrainResult train_mle(FlowModel model, const Matrix& data, const TrainConfig& cfg);

struct EnsembleSpec {
    std::size_t k = 5;
    std::uint64_t base_seed = 0; // member i trains with seed base_seed + i
};

/// Independently trained copies of the same architecture; members differ only
/// in their training seed (batch order and nothing else when the initial model
/// is shared, which it is here).
std::vector<FlowModel> train_ensemble(const FlowModel& init, const Matrix& data,
                                      const TrainConfig& cfg, const EnsembleSpec& spec);

} // namespace oodnorm

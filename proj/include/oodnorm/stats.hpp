#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oodnorm/flow.hpp"

namespace oodnorm {

/// Shared knobs for the batch-composition statistics. `b` is the mixed batch
/// size (the scored sample occupies one slot, companions fill the rest),
/// `r1 < r2` are the two contamination ratios compared by the delta statistic,
/// and `mc_reps` Monte Carlo replicates average out companion-draw noise.
struct StatisticConfig {
    std::size_t b = 64;
    double r1 = 0.1;
    double r2 = 0.9;
    std::size_t mc_reps = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Slot split of a size-b batch at ratio r: n_q = max(floor(r*b) - 1, 0)
/// companions from the query-side pool, n_p = b - 1 - n_q from the training
/// pool, plus the scored sample itself.
struct BatchComposition {
    std::size_t n_p = 0;
    std::size_t n_q = 0;
};
BatchComposition composition_for(double r, std::size_t b);

/// Training-mode log-likelihood of test_batch row j evaluated inside the
/// concatenated batch [ref_batch; test_batch]. With an empty ref_batch this
/// is exactly the Training-mode log-likelihood entry j of test_batch.
double mixed_conditional_loglik(const FlowModel& model, const Matrix& test_batch,
                                const Matrix& ref_batch, std::size_t j);

/// Negative Evaluation-mode log-likelihood (higher = more anomalous).
double stat_loglik(const FlowModel& model, std::span<const double> x);

/// |#{train logliks <= ll} - N/2|: distance of the sample's likelihood rank
/// from the middle of the training population.
double t_perm(double x_loglik, const Vector& train_logliks);
double stat_perm(const FlowModel& model, std::span<const double> x, const Vector& train_logliks);

/// Ensemble disagreement score: -mean + population variance of the members'
/// Evaluation-mode logliks.
double stat_waic(std::span<const FlowModel> ensemble, std::span<const double> x);

/// Companion sources for the batch-composition statistics. `exclude_*` marks
/// a row that must never be drawn (the scored sample itself when it lives in
/// one of the pools).
struct CompanionPools {
    const Matrix* p_pool = nullptr;
    const Matrix* q_pool = nullptr;
    std::size_t exclude_p = static_cast<std::size_t>(-1);
    std::size_t exclude_q = static_cast<std::size_t>(-1);
};

/// S_{b,r}(x): Monte Carlo average over mc_reps companion draws of x's
/// Training-mode conditional log-likelihood in batches composed at ratio r.
/// `stream` tags the RNG stream so different samples draw independently while
/// runs stay reproducible.
double stat_S(const FlowModel& model, std::span<const double> x, const CompanionPools& pools,
              double r, const StatisticConfig& cfg, std::uint64_t stream);

/// Delta(x) = |S_{b,r1}(x) - S_{b,r2}(x)| with common random numbers: each
/// replicate draws one companion prefix per pool and both ratios consume
/// prefixes of it, so the difference isolates the composition effect.
double stat_delta(const FlowModel& model, std::span<const double> x, const CompanionPools& pools,
                  const StatisticConfig& cfg, std::uint64_t stream);

/// #{reference deltas <= delta}: rank of the sample's delta inside the
/// reference population (higher = more anomalous).
double t_rank(double delta, const Vector& reference_deltas);

struct SweepRow {
    double r = 0.0;
    double mean_bpd = 0.0;
    double stderr_bpd = 0.0;
};

/// Mean (and standard error across samples) of BPD(S_{b,r}) over a test pool,
/// one row per requested ratio. Query-side companions come from the test pool
/// itself minus the scored sample.
std::vector<SweepRow> sweep_ratio(const FlowModel& model, const Matrix& test_pool,
                                  const Matrix& p_pool, const Vector& ratios,
                                  const StatisticConfig& cfg, bool parallel = true);

struct AttackConfig {
    double t_lo = 0.25;
    double t_hi = 1.5;
    std::size_t n_samples = 256;
    std::size_t max_iters = 30;
    double tol_bpd = 0.05;
    std::uint64_t seed = 0;
};

struct AttackResult {
    double tuned_temperature = 1.0;
    double median_gap_bpd = 0.0;
    /// ROC AUC of the likelihood-rank statistic on tuned samples vs holdout.
    double fooled_auc = 0.5;
    std::size_t iters = 0;
    Matrix attacked;
};

/// Tune the sampling temperature of q_model by bisection until the median
/// Evaluation-mode BPD of its samples under p_model matches the median BPD of
/// p_holdout to tol_bpd. One fixed latent set serves every temperature, so
/// the objective is a continuous function of T; a non-monotone bracket is a
/// ConfigError, failure to converge a TrainingError.
AttackResult attack_tune_temperature(const FlowModel& p_model, const FlowModel& q_model,
                                     const Vector& train_logliks, const Matrix& p_holdout,
                                     const AttackConfig& cfg);

} // namespace oodnorm

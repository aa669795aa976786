#pragma once

#include <span>

#include "oodnorm/metrics.hpp"
#include "oodnorm/stats.hpp"

namespace oodnorm {

/// Evaluation-mode log-likelihood per row.
Vector eval_logliks(const FlowModel& model, const Matrix& pool, bool parallel = true);

/// Delta for every row of ref_set, scored exactly the way a test pool is
/// scored: training companions from p_pool, query-side companions from
/// ref_set minus the row. ref_set is held-out in-distribution data owned by
/// the detector, so these deltas are the null population the rank statistic
/// compares against.
Vector reference_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& ref_set,
                        const StatisticConfig& cfg, bool parallel = true);

/// Delta for every row of test_pool (query-side companions from test_pool
/// minus the row, training companions from p_pool).
Vector test_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& test_pool,
                   const StatisticConfig& cfg, bool parallel = true);

/// Straight-line single-thread implementations of the drivers above; the
/// parallel versions must match them byte for byte.
namespace serial {
Vector eval_logliks(const FlowModel& model, const Matrix& pool);
Vector reference_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& ref_set,
                        const StatisticConfig& cfg);
Vector test_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& test_pool,
                   const StatisticConfig& cfg);
} // namespace serial

struct DetectionInputs {
    const FlowModel* model = nullptr;
    std::span<const FlowModel> ensemble; // enables the ensemble statistic when non-empty
    const Matrix* train_pool = nullptr;  // companion source and likelihood-rank population
    const Matrix* ref_set = nullptr;     // held-out in-distribution rows for reference deltas
    const Matrix* negatives = nullptr;   // fresh in-distribution rows, label 0
    const Matrix* positives = nullptr;   // candidate out-of-distribution rows, label 1
};

struct DetectionResult {
    std::vector<ScoredSample> scored;
    std::vector<DetectionReport> reports;
    Vector reference_deltas;
};

/// Score negatives (label 0) and positives (label 1) with every applicable
/// statistic and aggregate per-statistic AUC / AP. Each pool is scored
/// against itself: a sample's query-side companions come from the pool it
/// arrived with, mirroring how the reference deltas are built. Emitted
/// statistics: "loglik", "perm", "rank", and "waic" when an ensemble is
/// supplied.
DetectionResult run_detection(const DetectionInputs& inputs, const StatisticConfig& cfg,
                              bool parallel = true);

} // namespace oodnorm

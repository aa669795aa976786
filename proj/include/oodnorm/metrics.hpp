#pragma once

#include <string>
#include <vector>

#include "oodnorm/matrix.hpp"

namespace oodnorm {

/// One (sample, statistic) score. label: 1 = out-of-distribution, 0 = in.
struct ScoredSample {
    std::string sample_id;
    std::string statistic;
    double score = 0.0;
    int label = 0;
};

/// Mann-Whitney ROC AUC: ties between a positive and a negative score count
/// one half. Rank-based O(n log n); requires both classes present.
double roc_auc(const Vector& scores, const std::vector<int>& labels);

/// Average precision over the descending-score ordering; ties broken by
/// ascending original index so the value is deterministic.
double average_precision(const Vector& scores, const std::vector<int>& labels);

struct DetectionReport {
    std::string statistic;
    double auc = 0.0;
    double ap = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

/// Group scored samples by statistic (first-appearance order) and compute
/// AUC and AP per group.
std::vector<DetectionReport> build_report(const std::vector<ScoredSample>& scored);

} // namespace oodnorm

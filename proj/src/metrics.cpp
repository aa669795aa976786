#include "oodnorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {

void check_inputs(const Vector& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DataError("metrics: scores and labels differ in length");
    }
    if (scores.empty()) {
        throw DataError("metrics: empty input");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw DataError("metrics: non-finite score");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) throw DataError("metrics: labels must be 0 or 1");
    }
}

} // namespace

double roc_auc(const Vector& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks: tied scores share the average of the ranks they span.
    std::size_t n_pos = 0;
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j); // (i+1 + j) / 2
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                ++n_pos;
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("roc_auc: needs both a positive and a negative sample");
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const Vector& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);
    if (n_pos == 0) {
        throw DataError("average_precision: needs at least one positive sample");
    }

    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[order[k]] == 1) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(n_pos);
}

std::vector<DetectionReport> build_report(const std::vector<ScoredSample>& scored) {
    std::vector<std::string> names;
    for (const auto& s : scored) {
        if (std::find(names.begin(), names.end(), s.statistic) == names.end()) {
            names.push_back(s.statistic);
        }
    }
    std::vector<DetectionReport> out;
    for (const auto& name : names) {
        Vector scores;
        std::vector<int> labels;
        for (const auto& s : scored) {
            if (s.statistic != name) continue;
            scores.push_back(s.score);
            labels.push_back(s.label);
        }
        DetectionReport rep;
        rep.statistic = name;
        rep.auc = roc_auc(scores, labels);
        rep.ap = average_precision(scores, labels);
        for (int l : labels) {
            if (l == 1) ++rep.n_pos; else ++rep.n_neg;
        }
        out.push_back(std::move(rep));
    }
    return out;
}

} // namespace oodnorm

#include "oodnorm/scoring.hpp"

#include <string>

#include "oodnorm/errors.hpp"
#include "oodnorm/parallel.hpp"

namespace oodnorm {

namespace {

constexpr std::size_t kNoExclude = static_cast<std::size_t>(-1);
// Stream namespaces keep reference, negative, and positive companion draws
// independent of each other.
constexpr std::uint64_t kRefStream = 1ULL << 32;
constexpr std::uint64_t kTestStream = 2ULL << 32;
constexpr std::uint64_t kPosStream = 3ULL << 32;

double row_loglik(const FlowModel& model, const Matrix& pool, std::size_t i) {
    Matrix one(1, pool.cols());
    for (std::size_t j = 0; j < pool.cols(); ++j) one(0, j) = pool(i, j);
    return log_likelihood(model, one, EvalMode::Evaluation)[0];
}

double delta_kernel(const FlowModel& model, const Matrix& p_pool, const Matrix& own_pool,
                    const StatisticConfig& cfg, std::size_t i, std::uint64_t stream_base) {
    CompanionPools pools;
    pools.p_pool = &p_pool;
    pools.q_pool = &own_pool;
    pools.exclude_p = kNoExclude;
    pools.exclude_q = i;
    return stat_delta(model, own_pool.row(i), pools, cfg, stream_base + i);
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    for (std::size_t r = 0; r < top.rows(); ++r) {
        for (std::size_t c = 0; c < top.cols(); ++c) out(r, c) = top(r, c);
    }
    for (std::size_t r = 0; r < bottom.rows(); ++r) {
        for (std::size_t c = 0; c < bottom.cols(); ++c) out(top.rows() + r, c) = bottom(r, c);
    }
    return out;
}

void require_pool_matrix(const Matrix* m, std::size_t dim, const char* name) {
    if (m == nullptr || m->rows() == 0) {
        throw DataError(std::string("detection: ") + name + " pool is missing or empty");
    }
    if (m->cols() != dim) {
        throw DataError(std::string("detection: ") + name + " pool width does not match model");
    }
}

} // namespace

Vector eval_logliks(const FlowModel& model, const Matrix& pool, bool parallel) {
    return parallel_map(pool.rows(), parallel,
                        [&](std::size_t i) { return row_loglik(model, pool, i); });
}

Vector reference_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& ref_set,
                        const StatisticConfig& cfg, bool parallel) {
    return parallel_map(ref_set.rows(), parallel, [&](std::size_t i) {
        return delta_kernel(model, p_pool, ref_set, cfg, i, kRefStream);
    });
}

Vector test_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& test_pool,
                   const StatisticConfig& cfg, bool parallel) {
    return parallel_map(test_pool.rows(), parallel, [&](std::size_t i) {
        return delta_kernel(model, p_pool, test_pool, cfg, i, kTestStream);
    });
}

namespace serial {

Vector eval_logliks(const FlowModel& model, const Matrix& pool) {
    Vector out(pool.rows());
    for (std::size_t i = 0; i < pool.rows(); ++i) out[i] = row_loglik(model, pool, i);
    return out;
}

Vector reference_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& ref_set,
                        const StatisticConfig& cfg) {
    Vector out(ref_set.rows());
    for (std::size_t i = 0; i < ref_set.rows(); ++i) {
        out[i] = delta_kernel(model, p_pool, ref_set, cfg, i, kRefStream);
    }
    return out;
}

Vector test_deltas(const FlowModel& model, const Matrix& p_pool, const Matrix& test_pool,
                   const StatisticConfig& cfg) {
    Vector out(test_pool.rows());
    for (std::size_t i = 0; i < test_pool.rows(); ++i) {
        out[i] = delta_kernel(model, p_pool, test_pool, cfg, i, kTestStream);
    }
    return out;
}

} // namespace serial

DetectionResult run_detection(const DetectionInputs& inputs, const StatisticConfig& cfg,
                              bool parallel) {
    cfg.validate();
    if (inputs.model == nullptr) throw ConfigError("detection: no model");
    const FlowModel& model = *inputs.model;
    require_pool_matrix(inputs.train_pool, model.dim, "training");
    require_pool_matrix(inputs.ref_set, model.dim, "reference");
    require_pool_matrix(inputs.negatives, model.dim, "negative");
    require_pool_matrix(inputs.positives, model.dim, "positive");
    for (const FlowModel& member : inputs.ensemble) {
        if (member.dim != model.dim) {
            throw ConfigError("detection: ensemble member dimension mismatch");
        }
    }

    const Matrix test_pool = vstack(*inputs.negatives, *inputs.positives);
    const std::size_t n_neg = inputs.negatives->rows();
    const std::size_t n_test = test_pool.rows();
    std::vector<int> labels(n_test, 0);
    std::vector<std::string> ids(n_test);
    for (std::size_t i = 0; i < n_test; ++i) {
        const bool pos = i >= n_neg;
        labels[i] = pos ? 1 : 0;
        ids[i] = (pos ? "pos_" + std::to_string(i - n_neg) : "neg_" + std::to_string(i));
    }

    const Vector train_lls = eval_logliks(model, *inputs.train_pool, parallel);
    const Vector test_lls = eval_logliks(model, test_pool, parallel);

    std::vector<Vector> member_lls;
    member_lls.reserve(inputs.ensemble.size());
    for (const FlowModel& member : inputs.ensemble) {
        member_lls.push_back(eval_logliks(member, test_pool, parallel));
    }

    DetectionResult result;
    result.reference_deltas =
        reference_deltas(model, *inputs.train_pool, *inputs.ref_set, cfg, parallel);

    // Each test pool is scored against itself: a sample's query-side
    // companions come from the pool it arrived with, matching how the
    // reference population is built. Mixing the pools would let the
    // negatives' batches inherit the positives' statistics and vice versa,
    // which dilutes and can even invert the delta signal.
    const Matrix& negatives = *inputs.negatives;
    const Matrix& positives = *inputs.positives;
    Vector deltas = parallel_map(n_test, parallel, [&](std::size_t i) {
        if (i < n_neg) {
            return delta_kernel(model, *inputs.train_pool, negatives, cfg, i, kTestStream);
        }
        return delta_kernel(model, *inputs.train_pool, positives, cfg, i - n_neg, kPosStream);
    });

    for (std::size_t i = 0; i < n_test; ++i) {
        result.scored.push_back({ids[i], "loglik", -test_lls[i], labels[i]});
    }
    for (std::size_t i = 0; i < n_test; ++i) {
        result.scored.push_back({ids[i], "perm", t_perm(test_lls[i], train_lls), labels[i]});
    }
    if (!member_lls.empty()) {
        for (std::size_t i = 0; i < n_test; ++i) {
            double mean = 0.0;
            for (const Vector& lls : member_lls) mean += lls[i];
            mean /= static_cast<double>(member_lls.size());
            double var = 0.0;
            for (const Vector& lls : member_lls) var += (lls[i] - mean) * (lls[i] - mean);
            var /= static_cast<double>(member_lls.size());
            result.scored.push_back({ids[i], "waic", -mean + var, labels[i]});
        }
    }
    for (std::size_t i = 0; i < n_test; ++i) {
        result.scored.push_back(
            {ids[i], "rank", t_rank(deltas[i], result.reference_deltas), labels[i]});
    }
    result.reports = build_report(result.scored);
    return result;
}

} // namespace oodnorm

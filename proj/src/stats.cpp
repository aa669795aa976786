#include "oodnorm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "oodnorm/errors.hpp"
#include "oodnorm/metrics.hpp"
#include "oodnorm/parallel.hpp"
#include "oodnorm/rng.hpp"

namespace oodnorm {

namespace {

Matrix single_row(std::span<const double> x) {
    Matrix m(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) m(0, j) = x[j];
    return m;
}

double median(Vector v) {
    if (v.empty()) throw DataError("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Training-mode conditional log-likelihood of x inside the batch
/// [q companions; p companions; x].
double composed_conditional(const FlowModel& model, std::span<const double> x,
                            const CompanionPools& pools, std::span<const std::size_t> q_idx,
                            std::span<const std::size_t> p_idx) {
    const std::size_t d = x.size();
    Matrix batch(q_idx.size() + p_idx.size() + 1, d);
    std::size_t r = 0;
    for (std::size_t qi : q_idx) {
        const auto row = pools.q_pool->row(qi);
        for (std::size_t j = 0; j < d; ++j) batch(r, j) = row[j];
        ++r;
    }
    for (std::size_t pi : p_idx) {
        const auto row = pools.p_pool->row(pi);
        for (std::size_t j = 0; j < d; ++j) batch(r, j) = row[j];
        ++r;
    }
    for (std::size_t j = 0; j < d; ++j) batch(r, j) = x[j];
    const Vector ll = log_likelihood(model, batch, EvalMode::Training);
    return ll[r];
}

void require_pool(const Matrix* pool, std::size_t needed, const char* which) {
    if (needed > 0 && pool == nullptr) {
        throw ConfigError(std::string("batch statistic: composition needs companions from the ") +
                          which + " pool but none was given");
    }
}

} // namespace

void StatisticConfig::validate() const {
    if (b < 2) throw ConfigError("statistic config: batch size must be at least 2");
    if (mc_reps == 0) throw ConfigError("statistic config: mc_reps must be positive");
    if (!(r1 > 0.0) || !(r2 <= 1.0) || !(r1 < r2)) {
        throw ConfigError("statistic config: ratios must satisfy 0 < r1 < r2 <= 1");
    }
}

BatchComposition composition_for(double r, std::size_t b) {
    if (!(r > 0.0) || !(r <= 1.0)) {
        throw ConfigError("batch composition: ratio must lie in (0, 1]");
    }
    if (b < 2) throw ConfigError("batch composition: batch size must be at least 2");
    const auto scaled = static_cast<std::size_t>(std::floor(r * static_cast<double>(b)));
    BatchComposition comp;
    comp.n_q = scaled == 0 ? 0 : scaled - 1;
    if (comp.n_q > b - 1) comp.n_q = b - 1;
    comp.n_p = b - 1 - comp.n_q;
    return comp;
}

double mixed_conditional_loglik(const FlowModel& model, const Matrix& test_batch,
                                const Matrix& ref_batch, std::size_t j) {
    if (j >= test_batch.rows()) {
        throw ConfigError("mixed_conditional_loglik: row index out of range");
    }
    if (!ref_batch.empty() && ref_batch.cols() != test_batch.cols()) {
        throw ConfigError("mixed_conditional_loglik: reference and test widths differ");
    }
    if (ref_batch.empty()) {
        const Vector ll = log_likelihood(model, test_batch, EvalMode::Training);
        return ll[j];
    }
    Matrix combined(ref_batch.rows() + test_batch.rows(), test_batch.cols());
    for (std::size_t r = 0; r < ref_batch.rows(); ++r) {
        for (std::size_t c = 0; c < combined.cols(); ++c) combined(r, c) = ref_batch(r, c);
    }
    for (std::size_t r = 0; r < test_batch.rows(); ++r) {
        for (std::size_t c = 0; c < combined.cols(); ++c) {
            combined(ref_batch.rows() + r, c) = test_batch(r, c);
        }
    }
    const Vector ll = log_likelihood(model, combined, EvalMode::Training);
    return ll[ref_batch.rows() + j];
}

double stat_loglik(const FlowModel& model, std::span<const double> x) {
    const Vector ll = log_likelihood(model, single_row(x), EvalMode::Evaluation);
    return -ll[0];
}

double t_perm(double x_loglik, const Vector& train_logliks) {
    if (train_logliks.empty()) throw DataError("t_perm: empty training population");
    std::size_t count = 0;
    for (double ll : train_logliks) {
        if (ll <= x_loglik) ++count;
    }
    return std::abs(static_cast<double>(count) -
                    0.5 * static_cast<double>(train_logliks.size()));
}

double stat_perm(const FlowModel& model, std::span<const double> x, const Vector& train_logliks) {
    const Vector ll = log_likelihood(model, single_row(x), EvalMode::Evaluation);
    return t_perm(ll[0], train_logliks);
}

double stat_waic(std::span<const FlowModel> ensemble, std::span<const double> x) {
    if (ensemble.empty()) throw DataError("stat_waic: empty ensemble");
    const Matrix xm = single_row(x);
    Vector lls(ensemble.size());
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
        lls[k] = log_likelihood(ensemble[k], xm, EvalMode::Evaluation)[0];
    }
    double mean = 0.0;
    for (double v : lls) mean += v;
    mean /= static_cast<double>(lls.size());
    double var = 0.0;
    for (double v : lls) var += (v - mean) * (v - mean);
    var /= static_cast<double>(lls.size());
    return -mean + var;
}

double stat_S(const FlowModel& model, std::span<const double> x, const CompanionPools& pools,
              double r, const StatisticConfig& cfg, std::uint64_t stream) {
    cfg.validate();
    const BatchComposition comp = composition_for(r, cfg.b);
    require_pool(pools.q_pool, comp.n_q, "query-side");
    require_pool(pools.p_pool, comp.n_p, "training");
    double acc = 0.0;
    for (std::size_t rep = 0; rep < cfg.mc_reps; ++rep) {
        Rng rng(derive_seed(cfg.seed, 0x51a7, stream, rep));
        std::vector<std::size_t> q_idx, p_idx;
        if (comp.n_q > 0) {
            q_idx = rng.draw_without_replacement(pools.q_pool->rows(), comp.n_q, pools.exclude_q);
        }
        if (comp.n_p > 0) {
            p_idx = rng.draw_without_replacement(pools.p_pool->rows(), comp.n_p, pools.exclude_p);
        }
        acc += composed_conditional(model, x, pools, q_idx, p_idx);
    }
    return acc / static_cast<double>(cfg.mc_reps);
}

double stat_delta(const FlowModel& model, std::span<const double> x, const CompanionPools& pools,
                  const StatisticConfig& cfg, std::uint64_t stream) {
    cfg.validate();
    const BatchComposition comp1 = composition_for(cfg.r1, cfg.b);
    const BatchComposition comp2 = composition_for(cfg.r2, cfg.b);
    const std::size_t nq_draw = std::max(comp1.n_q, comp2.n_q);
    const std::size_t np_draw = std::max(comp1.n_p, comp2.n_p);
    require_pool(pools.q_pool, nq_draw, "query-side");
    require_pool(pools.p_pool, np_draw, "training");
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t rep = 0; rep < cfg.mc_reps; ++rep) {
        // One draw per pool per replicate; both ratios consume prefixes of it
        // (common random numbers), so Delta measures only the ratio effect.
        Rng rng(derive_seed(cfg.seed, 0xde17, stream, rep));
        std::vector<std::size_t> q_idx, p_idx;
        if (nq_draw > 0) {
            q_idx = rng.draw_without_replacement(pools.q_pool->rows(), nq_draw, pools.exclude_q);
        }
        if (np_draw > 0) {
            p_idx = rng.draw_without_replacement(pools.p_pool->rows(), np_draw, pools.exclude_p);
        }
        const std::span<const std::size_t> q_all(q_idx), p_all(p_idx);
        s1 += composed_conditional(model, x, pools, q_all.subspan(0, comp1.n_q),
                                   p_all.subspan(0, comp1.n_p));
        s2 += composed_conditional(model, x, pools, q_all.subspan(0, comp2.n_q),
                                   p_all.subspan(0, comp2.n_p));
    }
    return std::abs(s1 - s2) / static_cast<double>(cfg.mc_reps);
}

double t_rank(double delta, const Vector& reference_deltas) {
    if (reference_deltas.empty()) throw DataError("t_rank: empty reference population");
    std::size_t count = 0;
    for (double d : reference_deltas) {
        if (d <= delta) ++count;
    }
    return static_cast<double>(count);
}

std::vector<SweepRow> sweep_ratio(const FlowModel& model, const Matrix& test_pool,
                                  const Matrix& p_pool, const Vector& ratios,
                                  const StatisticConfig& cfg, bool parallel) {
    cfg.validate();
    if (test_pool.rows() == 0) throw DataError("sweep_ratio: empty test pool");
    if (ratios.empty()) throw ConfigError("sweep_ratio: no ratios given");
    std::vector<SweepRow> out;
    out.reserve(ratios.size());
    for (double r : ratios) {
        (void)composition_for(r, cfg.b); // validate before spawning work
        const Vector bpds = parallel_map(test_pool.rows(), parallel, [&](std::size_t i) {
            CompanionPools pools;
            pools.p_pool = &p_pool;
            pools.q_pool = &test_pool;
            pools.exclude_q = i;
            const double s = stat_S(model, test_pool.row(i), pools, r, cfg,
                                    static_cast<std::uint64_t>(i));
            return bpd(s, test_pool.cols());
        });

        SweepRow row;
        row.r = r;
        double mean = 0.0;
        for (double v : bpds) mean += v;
        mean /= static_cast<double>(bpds.size());
        double var = 0.0;
        for (double v : bpds) var += (v - mean) * (v - mean);
        row.mean_bpd = mean;
        row.stderr_bpd =
            bpds.size() > 1
                ? std::sqrt(var / static_cast<double>(bpds.size() - 1)) /
                      std::sqrt(static_cast<double>(bpds.size()))
                : 0.0;
        out.push_back(row);
    }
    return out;
}

AttackResult attack_tune_temperature(const FlowModel& p_model, const FlowModel& q_model,
                                     const Vector& train_logliks, const Matrix& p_holdout,
                                     const AttackConfig& cfg) {
    if (!(cfg.t_lo > 0.0) || !(cfg.t_hi > cfg.t_lo)) {
        throw ConfigError("attack: temperature bracket must satisfy 0 < t_lo < t_hi");
    }
    if (cfg.n_samples < 2) throw ConfigError("attack: needs at least two samples");
    if (cfg.max_iters == 0) throw ConfigError("attack: max_iters must be positive");
    if (!(cfg.tol_bpd > 0.0)) throw ConfigError("attack: tolerance must be positive");
    if (p_model.dim != q_model.dim) {
        throw ConfigError("attack: sampler and target models differ in dimension");
    }
    if (p_holdout.rows() == 0 || p_holdout.cols() != p_model.dim) {
        throw DataError("attack: holdout set is empty or has the wrong width");
    }

    Vector holdout_bpd(p_holdout.rows());
    {
        const Vector ll = log_likelihood(p_model, p_holdout, EvalMode::Evaluation);
        for (std::size_t i = 0; i < ll.size(); ++i) holdout_bpd[i] = bpd(ll[i], p_model.dim);
    }
    const double target = median(holdout_bpd);

    // One latent set serves every temperature, so the objective is a
    // continuous deterministic function of T.
    Matrix latents(cfg.n_samples, q_model.dim);
    {
        Rng rng(derive_seed(cfg.seed, 0xa77c));
        for (std::size_t i = 0; i < latents.rows(); ++i) {
            for (std::size_t j = 0; j < latents.cols(); ++j) latents(i, j) = rng.normal();
        }
    }

    auto samples_at = [&](double t) {
        Matrix z = latents;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) *= t;
        }
        Matrix x = flow_inverse(q_model, z);
        if (!x.all_finite()) {
            throw TrainingError("attack: non-finite samples at temperature " + std::to_string(t),
                                0);
        }
        return x;
    };
    auto gap_at = [&](double t) {
        const Matrix x = samples_at(t);
        const Vector ll = log_likelihood(p_model, x, EvalMode::Evaluation);
        Vector bpds(ll.size());
        for (std::size_t i = 0; i < ll.size(); ++i) {
            if (!std::isfinite(ll[i])) {
                throw TrainingError("attack: non-finite likelihood at temperature " +
                                        std::to_string(t),
                                    0);
            }
            bpds[i] = bpd(ll[i], p_model.dim);
        }
        return median(bpds) - target;
    };

    double lo = cfg.t_lo, hi = cfg.t_hi;
    double g_lo = gap_at(lo), g_hi = gap_at(hi);
    double mid = 0.5 * (lo + hi);
    double g_mid = gap_at(mid);
    const bool rising = g_lo <= g_mid && g_mid <= g_hi;
    const bool falling = g_lo >= g_mid && g_mid >= g_hi;
    if (!rising && !falling) {
        throw ConfigError("attack: median bpd is not monotone over the temperature bracket");
    }

    AttackResult result;
    bool done = false;
    if (std::abs(g_lo) <= cfg.tol_bpd) {
        result.tuned_temperature = lo;
        result.median_gap_bpd = g_lo;
        done = true;
    } else if (std::abs(g_hi) <= cfg.tol_bpd) {
        result.tuned_temperature = hi;
        result.median_gap_bpd = g_hi;
        done = true;
    } else if (g_lo * g_hi > 0.0) {
        throw ConfigError("attack: temperature bracket does not straddle the target bpd");
    }

    std::size_t iters = 0;
    while (!done) {
        ++iters;
        if (std::abs(g_mid) <= cfg.tol_bpd) {
            result.tuned_temperature = mid;
            result.median_gap_bpd = g_mid;
            done = true;
            break;
        }
        if (iters >= cfg.max_iters) {
            throw TrainingError("attack: bisection did not reach the bpd tolerance", iters);
        }
        if ((g_mid > 0.0) == (g_hi > 0.0)) {
            hi = mid;
            g_hi = g_mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
        mid = 0.5 * (lo + hi);
        g_mid = gap_at(mid);
    }
    result.iters = iters;

    result.attacked = samples_at(result.tuned_temperature);
    const Vector attacked_ll = log_likelihood(p_model, result.attacked, EvalMode::Evaluation);
    const Vector holdout_ll = log_likelihood(p_model, p_holdout, EvalMode::Evaluation);
    Vector scores;
    std::vector<int> labels;
    for (double ll : holdout_ll) {
        scores.push_back(t_perm(ll, train_logliks));
        labels.push_back(0);
    }
    for (double ll : attacked_ll) {
        scores.push_back(t_perm(ll, train_logliks));
        labels.push_back(1);
    }
    result.fooled_auc = roc_auc(scores, labels);
    return result;
}

} // namespace oodnorm

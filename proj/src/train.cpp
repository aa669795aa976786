#include "oodnorm/train.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void TrainConfig::validate() const {
    if (steps == 0) throw ConfigError("train: steps must be positive");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("train: Adam betas must lie in [0, 1)");
    if (adam_eps <= 0) throw ConfigError("train: adam_eps must be positive");
    if (holdout_fraction < 0 || holdout_fraction >= 1)
        throw ConfigError("train: holdout_fraction must lie in [0, 1)");
}

LossAndGrad loss_and_grad(const FlowModel& model, const Matrix& batch) {
    const std::size_t n = batch.rows();
    const std::size_t d = model.dim;
    FlowCache cache;
    FlowForward fwd = flow_forward(model, batch, EvalMode::Training, &cache);

    double loss = 0.0;
    Matrix dZ(n, d);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        double q = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            q += fwd.z(r, c) * fwd.z(r, c);
            dZ(r, c) = inv_n * fwd.z(r, c); // d(-loglik)/dz = z
        }
        loss -= (-0.5 * q - 0.5 * static_cast<double>(d) * kLog2Pi + fwd.log_det[r]) * inv_n;
    }

    LossAndGrad out;
    out.loss = loss;
    out.grad = make_zero_grad(model);
    flow_backward(model, cache, dZ, -inv_n, out.grad);
    out.bn_stats = std::move(cache.bn_stats);
    return out;
}

Vector finite_difference_grad(FlowModel model, const Matrix& batch, double step) {
    auto loss_of = [&](const FlowModel& m) {
        Vector ll = log_likelihood(m, batch, EvalMode::Training);
        double acc = 0.0;
        for (double v : ll) acc += v;
        return -acc / static_cast<double>(ll.size());
    };
    std::vector<double*> params = param_ptrs(model);
    Vector g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + step;
        const double up = loss_of(model);
        *params[i] = saved - step;
        const double down = loss_of(model);
        *params[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

namespace {

struct Adam {
    Vector m, v;
    std::size_t t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(const TrainConfig& cfg, std::vector<double*>& params,
              const std::vector<double*>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = *grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            *params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
};

double holdout_mean_bpd(const FlowModel& model, const Matrix& holdout) {
    Vector ll = log_likelihood(model, holdout, EvalMode::Evaluation);
    double acc = 0.0;
    for (double v : ll) acc += bpd(v, model.dim);
    return acc / static_cast<double>(ll.size());
}

} // namespace

TrainResult train_mle(FlowModel model, const Matrix& data, const TrainConfig& cfg) {
    cfg.validate();
    validate_model(model);
    if (data.rows() < cfg.batch_size) throw DataError("train: dataset smaller than batch_size");
    if (!data.all_finite()) throw DataError("train: non-finite training data");

    // Deterministic split: a seeded shuffle, holdout taken from the tail.
    Rng split_rng(derive_seed(cfg.seed, 0x5917));
    std::vector<std::size_t> perm =
        split_rng.draw_without_replacement(data.rows(), data.rows(), data.rows());
    std::size_t n_holdout = static_cast<std::size_t>(
        cfg.holdout_fraction * static_cast<double>(data.rows()));
    n_holdout = std::min(n_holdout, cfg.max_holdout);
    if (data.rows() - n_holdout < cfg.batch_size) n_holdout = 0;
    const std::size_t n_train = data.rows() - n_holdout;
    Matrix train_rows =
        data.select_rows(std::span<const std::size_t>(perm.data(), n_train));
    Matrix holdout_rows = n_holdout
        ? data.select_rows(std::span<const std::size_t>(perm.data() + n_train, n_holdout))
        : Matrix();

    std::vector<double*> params = param_ptrs(model);
    Adam adam(params.size());
    TrainResult result;
    result.log.reserve(cfg.steps);

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Rng batch_rng(derive_seed(cfg.seed, 0xba7c4, step));
        const std::vector<std::size_t> idx =
            batch_rng.draw_without_replacement(n_train, cfg.batch_size, n_train);
        Matrix batch = train_rows.select_rows(idx);

        LossAndGrad lg = loss_and_grad(model, batch);
        if (!std::isfinite(lg.loss))
            throw TrainingError("train: non-finite loss", step);

        FlowGrad grad = std::move(lg.grad);
        std::vector<double*> grads = grad_ptrs(grad);
        for (double* g : grads)
            if (!std::isfinite(*g)) throw TrainingError("train: non-finite gradient", step);

        adam.step(cfg, params, grads);

        // Track batch statistics after the parameter update, matching the order
        // in which the forward pass visited the sites.
        std::vector<BatchNormState*> sites = bn_sites(model);
        if (sites.size() != lg.bn_stats.size())
            throw TrainingError("train: normalization site bookkeeping mismatch", step);
        for (std::size_t i = 0; i < sites.size(); ++i)
            sites[i]->update_running(lg.bn_stats[i].mean, lg.bn_stats[i].var);

        TrainLogRow row;
        row.step = step;
        row.train_loss = lg.loss;
        row.eval_bpd = n_holdout ? holdout_mean_bpd(model, holdout_rows)
                                 : bpd(-lg.loss, model.dim);
        result.log.push_back(row);
    }

    result.model = std::move(model);
    return result;
}

std::vector<FlowModel> train_ensemble(const FlowModel& init, const Matrix& data,
                                      const TrainConfig& cfg, const EnsembleSpec& spec) {
    if (spec.k == 0) throw ConfigError("ensemble: k must be positive");
    std::vector<FlowModel> members(spec.k);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(spec.k); ++i) {
        try {
            TrainConfig member_cfg = cfg;
            member_cfg.seed = spec.base_seed + static_cast<std::uint64_t>(i);
            members[static_cast<std::size_t>(i)] =
                train_mle(init, data, member_cfg).model;
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return members;
}

} // namespace oodnorm

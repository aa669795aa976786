#include "oodnorm/flow.hpp"

#include <cmath>

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLn2 = 0.6931471805599453094;
} // namespace

std::vector<std::size_t> mask_pass_indices(const std::vector<std::uint8_t>& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> mask_trans_indices(const std::vector<std::uint8_t>& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) idx.push_back(i);
    return idx;
}

void validate_model(const FlowModel& model) {
    if (model.dim == 0) throw DataError("flow model: dimension must be positive");
    if (model.layers.empty()) throw DataError("flow model: needs at least one coupling");
    for (const CouplingLayer& layer : model.layers) {
        const auto& mask = std::visit([](const auto& l) -> const std::vector<std::uint8_t>& {
            return l.mask;
        }, layer);
        if (mask.size() != model.dim) throw DataError("coupling mask length != model dim");
        const std::size_t n_pass = mask_pass_indices(mask).size();
        const std::size_t n_trans = mask.size() - n_pass;
        if (n_pass == 0 || n_trans == 0)
            throw DataError("coupling mask needs both pass-through and transformed coords");
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            if (a->s_net.in_dim() != n_pass || a->t_net.in_dim() != n_pass ||
                a->s_net.out_dim() != n_trans || a->t_net.out_dim() != n_trans)
                throw DataError("coupling conditioner dims do not match mask");
            if (a->scale_cap <= 0) throw DataError("scale_cap must be positive");
        } else {
            const auto& b = std::get<BnCoupling>(layer);
            if (n_pass != n_trans)
                throw DataError("normalization coupling pairs coords: pass count != trans count");
            if (b.bn.width() != n_trans)
                throw DataError("normalization coupling width != transformed count");
        }
    }
}

FlowForward flow_forward(const FlowModel& model, const Matrix& X, EvalMode mode,
                         FlowCache* cache) {
    if (X.cols() != model.dim) throw DataError("flow_forward: input width != model dim");
    if (!X.all_finite()) throw DataError("flow_forward: non-finite input");
    if (mode == EvalMode::Training && X.rows() < 2)
        throw DataError("flow_forward: Training mode needs a batch of at least 2 rows");

    const std::size_t n = X.rows();
    FlowForward out;
    out.z = X;
    out.log_det.assign(n, 0.0);
    if (cache) {
        cache->layers.clear();
        cache->bn_stats.clear();
    }

    for (const CouplingLayer& layer : model.layers) {
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            const auto pass = mask_pass_indices(a->mask);
            const auto trans = mask_trans_indices(a->mask);
            Matrix P = out.z.select_cols(pass);
            Matrix Y = out.z.select_cols(trans);

            AffineCouplingCache lc;
            MlpCache* sc = cache ? &lc.s : nullptr;
            MlpCache* tc = cache ? &lc.t : nullptr;
            Matrix raw_s = mlp_forward(a->s_net, P, mode, sc);
            Matrix T = mlp_forward(a->t_net, P, mode, tc);
            if (cache) {
                for (auto& st : lc.s.bn_stats) cache->bn_stats.push_back(std::move(st));
                for (auto& st : lc.t.bn_stats) cache->bn_stats.push_back(std::move(st));
            }

            Matrix Zt(n, trans.size());
            for (std::size_t r = 0; r < n; ++r) {
                double ld = 0.0;
                for (std::size_t k = 0; k < trans.size(); ++k) {
                    const double ls = a->scale_cap * std::tanh(raw_s(r, k));
                    Zt(r, k) = std::exp(ls) * Y(r, k) + T(r, k);
                    ld += ls;
                }
                out.log_det[r] += ld;
            }
            out.z.place_cols(Zt, trans);
            if (cache) {
                lc.P = std::move(P);
                lc.Y = std::move(Y);
                lc.raw_s = std::move(raw_s);
                lc.T = std::move(T);
                cache->layers.emplace_back(std::move(lc));
            }
        } else {
            const auto& bcl = std::get<BnCoupling>(layer);
            const auto pass = mask_pass_indices(bcl.mask);
            const auto trans = mask_trans_indices(bcl.mask);
            Matrix P = out.z.select_cols(pass);
            Matrix Y = out.z.select_cols(trans);

            BnCouplingCache lc;
            BnStats used;
            Matrix bnout = bn_forward(bcl.bn, P, mode, cache ? &lc.bn : nullptr,
                                      cache ? &used : nullptr);
            if (cache) cache->bn_stats.push_back(std::move(used));

            double ld = 0.0;
            for (std::size_t k = 0; k < trans.size(); ++k)
                ld += std::log(std::abs(bcl.bn.gamma[k]));
            Matrix Zt(n, trans.size());
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t k = 0; k < trans.size(); ++k)
                    Zt(r, k) = bcl.bn.gamma[k] * Y(r, k) + bnout(r, k);
                out.log_det[r] += ld;
            }
            out.z.place_cols(Zt, trans);
            if (cache) {
                lc.P = std::move(P);
                lc.Y = std::move(Y);
                cache->layers.emplace_back(std::move(lc));
            }
        }
    }
    return out;
}

Matrix flow_inverse(const FlowModel& model, const Matrix& Z) {
    if (Z.cols() != model.dim) throw DataError("flow_inverse: input width != model dim");
    if (!Z.all_finite()) throw DataError("flow_inverse: non-finite latents");
    const std::size_t n = Z.rows();
    Matrix x = Z;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const CouplingLayer& layer = model.layers[li];
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            const auto pass = mask_pass_indices(a->mask);
            const auto trans = mask_trans_indices(a->mask);
            Matrix P = x.select_cols(pass);
            Matrix raw_s = mlp_forward(a->s_net, P, EvalMode::Evaluation);
            Matrix T = mlp_forward(a->t_net, P, EvalMode::Evaluation);
            Matrix Y(n, trans.size());
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < trans.size(); ++k) {
                    const double ls = a->scale_cap * std::tanh(raw_s(r, k));
                    Y(r, k) = (x(r, trans[k]) - T(r, k)) * std::exp(-ls);
                }
            x.place_cols(Y, trans);
        } else {
            const auto& bcl = std::get<BnCoupling>(layer);
            const auto pass = mask_pass_indices(bcl.mask);
            const auto trans = mask_trans_indices(bcl.mask);
            Matrix P = x.select_cols(pass);
            Matrix bnout = bn_forward(bcl.bn, P, EvalMode::Evaluation);
            for (std::size_t k = 0; k < trans.size(); ++k)
                if (std::abs(bcl.bn.gamma[k]) < 1e-12)
                    throw DataError("flow_inverse: normalization coupling scale is ~0");
            Matrix Y(n, trans.size());
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < trans.size(); ++k)
                    Y(r, k) = (x(r, trans[k]) - bnout(r, k)) / bcl.bn.gamma[k];
            x.place_cols(Y, trans);
        }
    }
    return x;
}

Vector log_likelihood(const FlowModel& model, const Matrix& X, EvalMode mode) {
    FlowForward f = flow_forward(model, X, mode);
    const std::size_t n = X.rows(), d = model.dim;
    Vector ll(n);
    for (std::size_t r = 0; r < n; ++r) {
        double q = 0.0;
        for (std::size_t c = 0; c < d; ++c) q += f.z(r, c) * f.z(r, c);
        ll[r] = -0.5 * q - 0.5 * static_cast<double>(d) * kLog2Pi + f.log_det[r];
    }
    return ll;
}

double bpd(double loglik, std::size_t dim) {
    return -loglik / (static_cast<double>(dim) * kLn2);
}

FlowGrad make_zero_grad(const FlowModel& model) {
    FlowGrad g;
    for (const CouplingLayer& layer : model.layers) {
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            AffineCouplingGrad ag;
            ag.s = make_zero_grad(a->s_net);
            ag.t = make_zero_grad(a->t_net);
            g.layers.emplace_back(std::move(ag));
        } else {
            const auto& b = std::get<BnCoupling>(layer);
            BnCouplingGrad bg;
            bg.dgamma.assign(b.bn.width(), 0.0);
            bg.dbeta.assign(b.bn.width(), 0.0);
            g.layers.emplace_back(std::move(bg));
        }
    }
    return g;
}

Matrix flow_backward(const FlowModel& model, const FlowCache& cache, const Matrix& dZ,
                     double dlogdet, FlowGrad& grad) {
    Matrix dcur = dZ;
    const std::size_t n = dZ.rows();
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const CouplingLayer& layer = model.layers[li];
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            const auto& lc = std::get<AffineCouplingCache>(cache.layers[li]);
            auto& lg = std::get<AffineCouplingGrad>(grad.layers[li]);
            const auto pass = mask_pass_indices(a->mask);
            const auto trans = mask_trans_indices(a->mask);
            Matrix dZt = dcur.select_cols(trans);
            Matrix dP = dcur.select_cols(pass);

            Matrix dY(n, trans.size());
            Matrix draw(n, trans.size());
            Matrix dT = dZt;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < trans.size(); ++k) {
                    const double th = std::tanh(lc.raw_s(r, k));
                    const double s = std::exp(a->scale_cap * th);
                    dY(r, k) = dZt(r, k) * s;
                    const double dls = dZt(r, k) * s * lc.Y(r, k) + dlogdet;
                    draw(r, k) = dls * a->scale_cap * (1.0 - th * th);
                }
            Matrix dPs = mlp_backward(a->s_net, lc.s, draw, lg.s);
            Matrix dPt = mlp_backward(a->t_net, lc.t, dT, lg.t);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < pass.size(); ++k) dP(r, k) += dPs(r, k) + dPt(r, k);
            dcur.place_cols(dP, pass);
            dcur.place_cols(dY, trans);
        } else {
            const auto& bcl = std::get<BnCoupling>(layer);
            const auto& lc = std::get<BnCouplingCache>(cache.layers[li]);
            auto& lg = std::get<BnCouplingGrad>(grad.layers[li]);
            const auto pass = mask_pass_indices(bcl.mask);
            const auto trans = mask_trans_indices(bcl.mask);
            Matrix dZt = dcur.select_cols(trans);
            Matrix dP = dcur.select_cols(pass);

            Matrix dY(n, trans.size());
            for (std::size_t k = 0; k < trans.size(); ++k) {
                const double g = bcl.bn.gamma[k];
                double dg = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    dY(r, k) = dZt(r, k) * g;
                    dg += dZt(r, k) * lc.Y(r, k); // scale path
                }
                // log-det path: every sample contributes dlogdet * d(log|g|)/dg.
                lg.dgamma[k] += dg + static_cast<double>(n) * dlogdet / g;
            }
            Matrix dPbn = bn_backward(bcl.bn, lc.bn, dZt, lg.dgamma, lg.dbeta);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < pass.size(); ++k) dP(r, k) += dPbn(r, k);
            dcur.place_cols(dP, pass);
            dcur.place_cols(dY, trans);
        }
    }
    return dcur;
}

namespace {

void collect_mlp_params(Mlp& net, std::vector<double*>& out) {
    for (MlpLayer& layer : net.layers) {
        for (std::size_t i = 0; i < layer.W.rows(); ++i)
            for (std::size_t j = 0; j < layer.W.cols(); ++j) out.push_back(&layer.W(i, j));
        for (double& v : layer.b) out.push_back(&v);
        if (layer.bn) {
            for (double& v : layer.bn->gamma) out.push_back(&v);
            for (double& v : layer.bn->beta) out.push_back(&v);
        }
    }
}

void collect_mlp_grads(MlpGrad& g, std::vector<double*>& out) {
    for (MlpLayerGrad& lg : g.layers) {
        for (std::size_t i = 0; i < lg.dW.rows(); ++i)
            for (std::size_t j = 0; j < lg.dW.cols(); ++j) out.push_back(&lg.dW(i, j));
        for (double& v : lg.db) out.push_back(&v);
        for (double& v : lg.dgamma) out.push_back(&v);
        for (double& v : lg.dbeta) out.push_back(&v);
    }
}

} // namespace

std::vector<double*> param_ptrs(FlowModel& model) {
    std::vector<double*> out;
    for (CouplingLayer& layer : model.layers) {
        if (auto* a = std::get_if<AffineCoupling>(&layer)) {
            collect_mlp_params(a->s_net, out);
            collect_mlp_params(a->t_net, out);
        } else {
            auto& b = std::get<BnCoupling>(layer);
            for (double& v : b.bn.gamma) out.push_back(&v);
            for (double& v : b.bn.beta) out.push_back(&v);
        }
    }
    return out;
}

std::vector<const double*> param_ptrs(const FlowModel& model) {
    auto ptrs = param_ptrs(const_cast<FlowModel&>(model));
    return {ptrs.begin(), ptrs.end()};
}

std::vector<double*> grad_ptrs(FlowGrad& grad) {
    std::vector<double*> out;
    for (CouplingGrad& layer : grad.layers) {
        if (auto* a = std::get_if<AffineCouplingGrad>(&layer)) {
            collect_mlp_grads(a->s, out);
            collect_mlp_grads(a->t, out);
        } else {
            auto& b = std::get<BnCouplingGrad>(layer);
            for (double& v : b.dgamma) out.push_back(&v);
            for (double& v : b.dbeta) out.push_back(&v);
        }
    }
    return out;
}

std::vector<BatchNormState*> bn_sites(FlowModel& model) {
    std::vector<BatchNormState*> out;
    for (CouplingLayer& layer : model.layers) {
        if (auto* a = std::get_if<AffineCoupling>(&layer)) {
            for (MlpLayer& l : a->s_net.layers)
                if (l.bn) out.push_back(&*l.bn);
            for (MlpLayer& l : a->t_net.layers)
                if (l.bn) out.push_back(&*l.bn);
        } else {
            out.push_back(&std::get<BnCoupling>(layer).bn);
        }
    }
    return out;
}

FlowModel make_paired_bn_flow(std::size_t dim, double eps, double momentum) {
    if (dim == 0 || dim % 2 != 0)
        throw ConfigError("make_paired_bn_flow: dimension must be even and positive");
    FlowModel m;
    m.dim = dim;
    BnCoupling c;
    c.mask.assign(dim, 0);
    for (std::size_t i = 0; i < dim; i += 2) c.mask[i] = 1;
    c.bn = BatchNormState::identity(dim / 2, eps, momentum);
    m.layers.emplace_back(std::move(c));
    validate_model(m);
    return m;
}

FlowModel make_conditioner_flow(std::size_t dim, const ConditionerFlowOptions& opts, Rng& rng) {
    if (dim < 2) throw ConfigError("make_conditioner_flow: dimension must be >= 2");
    if (opts.couplings == 0) throw ConfigError("make_conditioner_flow: needs >= 1 coupling");
    FlowModel m;
    m.dim = dim;
    for (std::size_t l = 0; l < opts.couplings; ++l) {
        AffineCoupling c;
        c.mask.assign(dim, 0);
        if (opts.alternating) {
            for (std::size_t i = 0; i < dim; ++i) c.mask[i] = (i % 2 == l % 2) ? 1 : 0;
        } else {
            for (std::size_t i = 0; i < (dim + 1) / 2; ++i) c.mask[i] = 1;
        }
        const std::size_t n_pass = mask_pass_indices(c.mask).size();
        const std::size_t n_trans = dim - n_pass;
        c.s_net = make_mlp(n_pass, opts.hidden, n_trans, rng, opts.hidden_bn, opts.bn_eps,
                           opts.bn_momentum);
        c.t_net = make_mlp(n_pass, opts.hidden, n_trans, rng, opts.hidden_bn, opts.bn_eps,
                           opts.bn_momentum);
        c.scale_cap = opts.scale_cap;
        m.layers.emplace_back(std::move(c));
    }
    validate_model(m);
    return m;
}

} // namespace oodnorm

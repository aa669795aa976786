#include "oodnorm/mlp.hpp"

#include <cmath>

#include "oodnorm/errors.hpp"

namespace oodnorm {

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
             bool hidden_bn, double bn_eps, double bn_momentum) {
    Mlp net;
    std::vector<std::size_t> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        MlpLayer layer;
        layer.W = Matrix(dims[l], dims[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (std::size_t i = 0; i < dims[l]; ++i)
            for (std::size_t j = 0; j < dims[l + 1]; ++j)
                layer.W(i, j) = rng.uniform(-bound, bound);
        layer.b.assign(dims[l + 1], 0.0);
        const bool last = (l + 2 == dims.size());
        if (!last) {
            if (hidden_bn) layer.bn = BatchNormState::identity(dims[l + 1], bn_eps, bn_momentum);
            layer.act = Activation::Tanh;
        } else {
            layer.act = Activation::Identity;
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

MlpGrad make_zero_grad(const Mlp& net) {
    MlpGrad g;
    for (const MlpLayer& layer : net.layers) {
        MlpLayerGrad lg;
        lg.dW = Matrix(layer.W.rows(), layer.W.cols());
        lg.db.assign(layer.b.size(), 0.0);
        if (layer.bn) {
            lg.dgamma.assign(layer.bn->width(), 0.0);
            lg.dbeta.assign(layer.bn->width(), 0.0);
        }
        g.layers.push_back(std::move(lg));
    }
    return g;
}

namespace {

Matrix linear_forward(const MlpLayer& layer, const Matrix& X) {
    const std::size_t n = X.rows(), in = layer.in_dim(), out = layer.out_dim();
    Matrix Y(n, out);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < out; ++j) {
            double acc = layer.b[j];
            for (std::size_t i = 0; i < in; ++i) acc += X(r, i) * layer.W(i, j);
            Y(r, j) = acc;
        }
    }
    return Y;
}

} // namespace

Matrix mlp_forward(const Mlp& net, const Matrix& X, EvalMode mode, MlpCache* cache) {
    if (X.cols() != net.in_dim()) throw DataError("mlp_forward: input width mismatch");
    if (cache) {
        cache->layers.clear();
        cache->layers.resize(net.layers.size());
        cache->bn_stats.clear();
    }
    Matrix cur = X;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const MlpLayer& layer = net.layers[l];
        MlpLayerCache* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) lc->input = cur;
        Matrix lin = linear_forward(layer, cur);
        Matrix pre;
        if (layer.bn) {
            BnStats used;
            pre = bn_forward(*layer.bn, lin, mode, lc ? &lc->bn : nullptr,
                             cache ? &used : nullptr);
            if (cache) cache->bn_stats.push_back(std::move(used));
            if (lc) lc->lin = std::move(lin);
        } else {
            pre = std::move(lin);
        }
        if (lc) lc->pre_act = pre;
        if (layer.act == Activation::Tanh) {
            for (std::size_t r = 0; r < pre.rows(); ++r)
                for (std::size_t c = 0; c < pre.cols(); ++c) pre(r, c) = std::tanh(pre(r, c));
        }
        cur = std::move(pre);
    }
    return cur;
}

Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dY, MlpGrad& grad) {
    Matrix dcur = dY;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const MlpLayer& layer = net.layers[li];
        const MlpLayerCache& lc = cache.layers[li];
        MlpLayerGrad& lg = grad.layers[li];
        const std::size_t n = dcur.rows();

        if (layer.act == Activation::Tanh) {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < dcur.cols(); ++c) {
                    const double t = std::tanh(lc.pre_act(r, c));
                    dcur(r, c) *= 1.0 - t * t;
                }
        }
        if (layer.bn) dcur = bn_backward(*layer.bn, lc.bn, dcur, lg.dgamma, lg.dbeta);

        // dcur now holds the gradient at X*W + b.
        const std::size_t in = layer.in_dim(), out = layer.out_dim();
        for (std::size_t j = 0; j < out; ++j) {
            double db = 0.0;
            for (std::size_t r = 0; r < n; ++r) db += dcur(r, j);
            lg.db[j] += db;
        }
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < out; ++j) {
                double dw = 0.0;
                for (std::size_t r = 0; r < n; ++r) dw += lc.input(r, i) * dcur(r, j);
                lg.dW(i, j) += dw;
            }
        Matrix din(n, in);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < in; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < out; ++j) acc += dcur(r, j) * layer.W(i, j);
                din(r, i) = acc;
            }
        dcur = std::move(din);
    }
    return dcur;
}

} // namespace oodnorm

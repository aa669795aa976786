#include "oodnorm/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "oodnorm/errors.hpp"

namespace oodnorm {

namespace {

using nlohmann::json;

// Stored as a JSON float so the dump uses shortest-round-trip formatting;
// routing through a decimal string would turn -0.0 into integer zero.
json num(double v) { return json(v); }

json vec_to_json(const Vector& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

Vector vec_from_json(const json& a) {
    Vector v;
    v.reserve(a.size());
    for (const auto& x : a) v.push_back(x.get<double>());
    return v;
}

json mat_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(num(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix mat_from_json(const json& rows) {
    const std::size_t nr = rows.size();
    const std::size_t nc = nr ? rows.at(0).size() : 0;
    Matrix m(nr, nc);
    for (std::size_t r = 0; r < nr; ++r) {
        const auto& row = rows.at(r);
        if (row.size() != nc) throw DataError("model file: ragged weight matrix");
        for (std::size_t c = 0; c < nc; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
}

json bn_to_json(const BatchNormState& bn) {
    return json{{"gamma", vec_to_json(bn.gamma)},
                {"beta", vec_to_json(bn.beta)},
                {"running_mean", vec_to_json(bn.running_mean)},
                {"running_var", vec_to_json(bn.running_var)},
                {"eps", num(bn.eps)},
                {"momentum", num(bn.momentum)}};
}

BatchNormState bn_from_json(const json& j) {
    BatchNormState bn;
    bn.gamma = vec_from_json(j.at("gamma"));
    bn.beta = vec_from_json(j.at("beta"));
    bn.running_mean = vec_from_json(j.at("running_mean"));
    bn.running_var = vec_from_json(j.at("running_var"));
    bn.eps = j.at("eps").get<double>();
    bn.momentum = j.at("momentum").get<double>();
    if (bn.beta.size() != bn.gamma.size() || bn.running_mean.size() != bn.gamma.size() ||
        bn.running_var.size() != bn.gamma.size())
        throw DataError("model file: inconsistent normalization widths");
    return bn;
}

json mlp_to_json(const Mlp& net) {
    json layers = json::array();
    for (const MlpLayer& l : net.layers) {
        json jl{{"w", mat_to_json(l.W)},
                {"b", vec_to_json(l.b)},
                {"act", l.act == Activation::Tanh ? "tanh" : "identity"}};
        jl["bn"] = l.bn ? bn_to_json(*l.bn) : json(nullptr);
        layers.push_back(std::move(jl));
    }
    return json{{"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
    Mlp net;
    for (const auto& jl : j.at("layers")) {
        MlpLayer l;
        l.W = mat_from_json(jl.at("w"));
        l.b = vec_from_json(jl.at("b"));
        const std::string act = jl.at("act").get<std::string>();
        if (act == "tanh")
            l.act = Activation::Tanh;
        else if (act == "identity")
            l.act = Activation::Identity;
        else
            throw DataError("model file: unknown activation '" + act + "'");
        if (!jl.at("bn").is_null()) l.bn = bn_from_json(jl.at("bn"));
        net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) throw DataError("model file: empty network");
    return net;
}

json mask_to_json(const std::vector<std::uint8_t>& mask) {
    json a = json::array();
    for (std::uint8_t m : mask) a.push_back(static_cast<int>(m));
    return a;
}

std::vector<std::uint8_t> mask_from_json(const json& a) {
    std::vector<std::uint8_t> mask;
    for (const auto& x : a) mask.push_back(x.get<int>() ? 1 : 0);
    return mask;
}

} // namespace

std::string model_to_text(const FlowModel& model) {
    json layers = json::array();
    for (const CouplingLayer& layer : model.layers) {
        if (const auto* a = std::get_if<AffineCoupling>(&layer)) {
            layers.push_back(json{{"type", "affine"},
                                  {"mask", mask_to_json(a->mask)},
                                  {"scale_cap", num(a->scale_cap)},
                                  {"s_net", mlp_to_json(a->s_net)},
                                  {"t_net", mlp_to_json(a->t_net)}});
        } else {
            const auto& b = std::get<BnCoupling>(layer);
            layers.push_back(json{{"type", "norm"},
                                  {"mask", mask_to_json(b.mask)},
                                  {"bn", bn_to_json(b.bn)}});
        }
    }
    json root{{"format", "oodnorm-flow-v1"}, {"dim", model.dim}, {"layers", std::move(layers)}};
    return root.dump(2) + "\n";
}

FlowModel model_from_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: parse failure: ") + e.what());
    }
    try {
        if (root.at("format").get<std::string>() != "oodnorm-flow-v1")
            throw DataError("model file: unknown format tag");
        FlowModel m;
        m.dim = root.at("dim").get<std::size_t>();
        for (const auto& jl : root.at("layers")) {
            const std::string type = jl.at("type").get<std::string>();
            if (type == "affine") {
                AffineCoupling c;
                c.mask = mask_from_json(jl.at("mask"));
                c.scale_cap = jl.at("scale_cap").get<double>();
                c.s_net = mlp_from_json(jl.at("s_net"));
                c.t_net = mlp_from_json(jl.at("t_net"));
                m.layers.emplace_back(std::move(c));
            } else if (type == "norm") {
                BnCoupling c;
                c.mask = mask_from_json(jl.at("mask"));
                c.bn = bn_from_json(jl.at("bn"));
                m.layers.emplace_back(std::move(c));
            } else {
                throw DataError("model file: unknown coupling type '" + type + "'");
            }
        }
        validate_model(m);
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: bad structure: ") + e.what());
    }
}

void save_model(const FlowModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open model file for writing: " + path);
    out << model_to_text(model);
    if (!out) throw DataError("failed writing model file: " + path);
}

FlowModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_text(text);
}

} // namespace oodnorm

#include "voltguard/nn/mlp.hpp"

#include "voltguard/error.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace voltguard::nn {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<LayerSpec> layer_stack(int in, std::span<const int> hidden, int out, Activation hidden_act,
                                   Activation out_act) {
    std::vector<LayerSpec> specs;
    int prev = in;
    for (int h : hidden) {
        specs.push_back({prev, h, hidden_act});
        prev = h;
    }
    specs.push_back({prev, out, out_act});
    return specs;
}

namespace {

void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
    switch (a) {
        case Activation::Relu: out = pre.cwiseMax(0.0); break;
        case Activation::Tanh: out = pre.array().tanh().matrix(); break;
        case Activation::Identity: out = pre; break;
    }
}

// Multiplies the upstream gradient by the activation derivative in place.
void activation_backward(Activation a, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, Eigen::MatrixXd& g) {
    switch (a) {
        case Activation::Relu: g = (pre.array() > 0.0).select(g, 0.0); break;
        case Activation::Tanh: g.array() *= 1.0 - post.array().square(); break;
        case Activation::Identity: break;
    }
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

Mlp Mlp::initialize(std::span<const LayerSpec> specs, Rng& rng) {
    if (specs.empty()) throw DimensionError("network needs at least one layer");
    std::vector<Layer> layers;
    layers.reserve(specs.size());
    for (const auto& s : specs) {
        if (s.in <= 0 || s.out <= 0) throw DimensionError("layer widths must be positive");
        const double stddev = s.activation == Activation::Relu ? std::sqrt(2.0 / s.in) : std::sqrt(2.0 / (s.in + s.out));
        Layer layer;
        layer.activation = s.activation;
        layer.w.resize(s.out, s.in);
        for (int c = 0; c < s.in; ++c) {
            for (int r = 0; r < s.out; ++r) layer.w(r, c) = stddev * standard_normal(rng);
        }
        layer.b = Eigen::VectorXd::Zero(s.out);
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

int Mlp::input_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().w.cols()); }
int Mlp::output_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().w.rows()); }

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
}

void Mlp::validate() const {
    if (layers_.empty()) throw DimensionError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.w.rows() <= 0 || l.w.cols() <= 0) throw DimensionError("layer widths must be positive");
        if (l.b.size() != l.w.rows()) throw DimensionError("bias length differs from layer output width");
        if (i > 0 && l.w.cols() != layers_[i - 1].w.rows()) {
            throw DimensionError("layer " + std::to_string(i) + " input width does not match previous output");
        }
        if (!l.w.allFinite() || !l.b.allFinite()) throw NumericalError("non-finite network parameter");
    }
}

Gradients Gradients::zeros_like(const Mlp& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
        g.dw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
        g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.dw.size() != dw.size()) throw DimensionError("gradient layouts differ");
    for (std::size_t i = 0; i < dw.size(); ++i) {
        dw[i] += other.dw[i];
        db[i] += other.db[i];
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& w : dw) w *= s;
    for (auto& b : db) b *= s;
    return *this;
}

bool Gradients::all_finite() const {
    for (const auto& w : dw) {
        if (!w.allFinite()) return false;
    }
    for (const auto& b : db) {
        if (!b.allFinite()) return false;
    }
    return true;
}

double Gradients::squared_norm() const {
    double s = 0.0;
    for (const auto& w : dw) s += w.squaredNorm();
    for (const auto& b : db) s += b.squaredNorm();
    return s;
}

Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x, ForwardTape* tape) {
    if (net.depth() == 0) throw DimensionError("empty network");
    if (x.rows() != net.input_size()) {
        throw DimensionError("input width " + std::to_string(x.rows()) + " != " + std::to_string(net.input_size()));
    }
    if (tape != nullptr) {
        tape->activations.assign(1, x);
        tape->pre.clear();
    }
    Eigen::MatrixXd h = x;
    Eigen::MatrixXd out;
    for (const auto& l : net.layers()) {
        Eigen::MatrixXd pre = l.w * h;
        pre.colwise() += l.b;
        apply_activation(l.activation, pre, out);
        if (tape != nullptr) {
            tape->pre.push_back(std::move(pre));
            tape->activations.push_back(out);
        }
        h.swap(out);
    }
    return h;
}

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& x, ForwardTape* tape) {
    return forward_batch(net, x, tape).col(0);
}

Eigen::MatrixXd backward(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent,
                         Gradients* accumulate) {
    const std::size_t depth = net.depth();
    if (tape.pre.size() != depth || tape.activations.size() != depth + 1) {
        throw DimensionError("tape layer count does not match network");
    }
    if (cotangent.rows() != net.output_size() || cotangent.cols() != tape.output().cols()) {
        throw DimensionError("cotangent shape does not match network output");
    }
    if (accumulate != nullptr && accumulate->dw.size() != depth) *accumulate = Gradients::zeros_like(net);
    Eigen::MatrixXd g = cotangent;
    for (std::size_t i = depth; i-- > 0;) {
        const auto& l = net.layer(i);
        activation_backward(l.activation, tape.pre[i], tape.activations[i + 1], g);
        if (accumulate != nullptr) {
            accumulate->dw[i].noalias() += g * tape.activations[i].transpose();
            accumulate->db[i] += g.rowwise().sum();
        }
        g = l.w.transpose() * g;
    }
    return g;
}

Eigen::MatrixXd grad_input(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent) {
    return backward(net, tape, cotangent, nullptr);
}

Gradients grad_params(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent) {
    Gradients g = Gradients::zeros_like(net);
    backward(net, tape, cotangent, &g);
    return g;
}

AdamState AdamState::for_network(const Mlp& net) {
    return {Gradients::zeros_like(net), Gradients::zeros_like(net), 0};
}

void adam_update(Mlp& params, const Gradients& grads, const AdamHyper& hyper, AdamState& state) {
    if (grads.dw.size() != params.depth() || grads.db.size() != params.depth()) {
        throw DimensionError("gradient layer count does not match network");
    }
    for (std::size_t i = 0; i < params.depth(); ++i) {
        const auto& l = params.layer(i);
        if (grads.dw[i].rows() != l.w.rows() || grads.dw[i].cols() != l.w.cols() || grads.db[i].size() != l.b.size()) {
            throw DimensionError("gradient shape does not match layer " + std::to_string(i));
        }
    }
    if (!grads.all_finite()) throw NumericalError("non-finite gradient rejected");
    if (state.m.dw.size() != params.depth()) state = AdamState::for_network(params);

    ++state.step;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    auto step = [&](auto& p, auto& m, auto& v, const auto& g) {
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
        p.array() -= hyper.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.eps);
    };
    for (std::size_t i = 0; i < params.depth(); ++i) {
        auto& l = params.layer(i);
        step(l.w, state.m.dw[i], state.v.dw[i], grads.dw[i]);
        step(l.b, state.m.db[i], state.v.db[i], grads.db[i]);
    }
    params.bump_version();
}

double spectral_norm(const Eigen::MatrixXd& w, int max_iterations, double tolerance) {
    if (w.size() == 0) return 0.0;
    const double frob = w.norm();
    if (frob == 0.0) return 0.0;
    // deterministic start with a component along every right singular vector in general position
    Eigen::VectorXd v(w.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i % 7);
    v.normalize();
    double sigma = 0.0;
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd u = w * v;
        Eigen::VectorXd next = w.transpose() * u;
        const double n = next.norm();
        if (n == 0.0) break;
        const double estimate = std::sqrt(n);
        next /= n;
        v = next;
        if (std::abs(estimate - sigma) <= tolerance * estimate) {
            sigma = estimate;
            converged = true;
            break;
        }
        sigma = estimate;
    }
    if (converged) return std::min(sigma, frob);
    // clustered leading singular values: power iteration stalls, use the full decomposition
    return Eigen::BDCSVD<Eigen::MatrixXd>(w).singularValues()(0);
}

double lipschitz_bound(const Mlp& net) {
    double bound = 1.0;
    for (const auto& l : net.layers()) bound *= spectral_norm(l.w);
    return bound;
}

nlohmann::json to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.w.size()));
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
        }
        layers.push_back({{"in", l.w.cols()},
                          {"out", l.w.rows()},
                          {"activation", to_string(l.activation)},
                          {"weights", w},
                          {"bias", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
    }
    return {{"schema_version", kCheckpointSchemaVersion}, {"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
            throw ConfigError("unsupported checkpoint schema_version");
        }
        std::vector<Layer> layers;
        for (const auto& jl : j.at("layers")) {
            const int in = jl.at("in").get<int>();
            const int out = jl.at("out").get<int>();
            if (in <= 0 || out <= 0) throw DimensionError("checkpoint layer widths must be positive");
            const auto w = jl.at("weights").get<std::vector<double>>();
            const auto b = jl.at("bias").get<std::vector<double>>();
            if (w.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out) ||
                b.size() != static_cast<std::size_t>(out)) {
                throw DimensionError("checkpoint array sizes do not match layer widths");
            }
            Layer l;
            l.activation = activation_from_string(jl.at("activation").get<std::string>());
            l.w.resize(out, in);
            for (int r = 0; r < out; ++r) {
                for (int c = 0; c < in; ++c) l.w(r, c) = w[static_cast<std::size_t>(r * in + c)];
            }
            l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
            layers.push_back(std::move(l));
        }
        return Mlp(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace voltguard::nn

#pragma once

#include "voltguard/util/random.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace voltguard::nn {

enum class Activation { Relu, Tanh, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation activation = Activation::Relu;
};

struct Layer {
    Eigen::MatrixXd w;  ///< out x in
    Eigen::VectorXd b;
    Activation activation = Activation::Relu;

    [[nodiscard]] LayerSpec spec() const {
        return {static_cast<int>(w.cols()), static_cast<int>(w.rows()), activation};
    }
};

/// Specs for in -> hidden... -> out with one activation for every hidden layer.
std::vector<LayerSpec> layer_stack(int in, std::span<const int> hidden, int out, Activation hidden_act,
                                   Activation out_act = Activation::Identity);

/// Feedforward chain of affine + activation layers (the network parameters).
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Layer> layers);

    /// He-style normal init for rectifier layers, Xavier-style otherwise; zero biases.
    static Mlp initialize(std::span<const LayerSpec> specs, Rng& rng);

    [[nodiscard]] int input_size() const;
    [[nodiscard]] int output_size() const;
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::size_t depth() const { return layers_.size(); }
    [[nodiscard]] std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }

    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Layer>& layers() { return layers_; }
    [[nodiscard]] const Layer& layer(std::size_t i) const { return layers_[i]; }
    [[nodiscard]] Layer& layer(std::size_t i) { return layers_[i]; }

    /// Throws DimensionError on incompatible adjacent layers, NumericalError on non-finite entries.
    void validate() const;

private:
    std::vector<Layer> layers_;
    std::uint64_t version_ = 0;
};

/// Everything the backward pass needs from one (batched) forward pass.
struct ForwardTape {
    std::vector<Eigen::MatrixXd> activations;  ///< [0] = input, [l + 1] = output of layer l
    std::vector<Eigen::MatrixXd> pre;          ///< pre-activation of layer l

    [[nodiscard]] const Eigen::MatrixXd& output() const { return activations.back(); }
};

/// Parameter gradients with the same layout as the network.
struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;

    static Gradients zeros_like(const Mlp& net);
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] double squared_norm() const;
};

/// Inputs are columns of `x`; returns outputs as columns.
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x, ForwardTape* tape = nullptr);
Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& x, ForwardTape* tape = nullptr);

/// Reverse pass: returns d(cotangent . output)/d(input) for every column and, when
/// `accumulate` is given, adds the parameter gradients (summed over columns) to it.
Eigen::MatrixXd backward(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent,
                         Gradients* accumulate = nullptr);

Eigen::MatrixXd grad_input(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent);
Gradients grad_params(const Mlp& net, const ForwardTape& tape, const Eigen::MatrixXd& cotangent);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Gradients m;
    Gradients v;
    long step = 0;

    static AdamState for_network(const Mlp& net);
};

/// One bias-corrected adaptive-moment step. A non-finite gradient throws
/// NumericalError and leaves both the parameters and the state untouched.
void adam_update(Mlp& params, const Gradients& grads, const AdamHyper& hyper, AdamState& state);

/// Largest singular value by power iteration on W^T W; an SVD settles it when the iteration does not converge.
double spectral_norm(const Eigen::MatrixXd& w, int max_iterations = 100, double tolerance = 1e-9);

/// Product of per-layer spectral norms: an upper bound on the Euclidean Lipschitz
/// constant when every activation is 1-Lipschitz (all three supported ones are).
double lipschitz_bound(const Mlp& net);

inline constexpr int kCheckpointSchemaVersion = 1;

/// `{"schema_version", "layers": [{"in", "out", "activation", "weights" (row-major), "bias"}]}`
nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace voltguard::nn

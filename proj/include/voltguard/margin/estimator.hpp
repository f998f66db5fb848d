#pragma once

#include "voltguard/margin/dataset.hpp"
#include "voltguard/nn/mlp.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace voltguard::margin {

/// Per-feature affine normalisation of observations.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer identity(int n);
    static Standardizer fit(const std::vector<Eigen::VectorXd>& observations);
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct EstimatorShape {
    int hidden = 64;
    int encoder_layers = 2;
    int advantage_layers = 2;  ///< hidden layers + output layer of the advantage head

    static EstimatorShape desk() { return {}; }
    static EstimatorShape paper_scale() { return {256, 2, 2}; }
};

struct TrainOptions {
    nn::AdamHyper adam{};
    int batch_size = 64;
    int steps = 4000;
    std::uint64_t seed = 1;
};

/// C(s, a) = C1(s) - (C2(s, a) - C2(s, a_zero)) over a shared state encoder.
class DuelingEstimator {
public:
    DuelingEstimator() = default;
    DuelingEstimator(int obs_size, int action_size, const EstimatorShape& shape, std::uint64_t seed,
                     Standardizer standardizer = {});

    [[nodiscard]] int observation_size() const { return obs_size_; }
    [[nodiscard]] int action_size() const { return action_size_; }
    [[nodiscard]] const Eigen::VectorXd& a_zero() const { return a_zero_; }
    void set_a_zero(Eigen::VectorXd a);

    [[nodiscard]] double estimate(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;
    [[nodiscard]] double state_value(const Eigen::VectorXd& obs) const;  ///< C1(s)
    [[nodiscard]] double advantage(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;  ///< C2(s, a)

    /// Discrete branch: the smallest estimate over a finite action set.
    [[nodiscard]] double estimate_min(const Eigen::VectorXd& obs, std::span<const Eigen::VectorXd> actions) const;

    /// dC/da at (s, a).
    [[nodiscard]] Eigen::VectorXd action_gradient(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;
    /// dC/ds at (s, a) with respect to the raw observation.
    [[nodiscard]] Eigen::VectorXd observation_gradient(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;

    /// Upper bound on the Lipschitz constant of a -> C(s, a) for any fixed s.
    [[nodiscard]] double action_lipschitz_bound() const;

    /// Columns of `obs` and `actions` are samples.
    [[nodiscard]] Eigen::VectorXd estimate_batch(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const;

    /// One optimiser step on mean squared error; returns the batch loss before the step.
    double train_step(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions, const Eigen::VectorXd& targets,
                      const nn::AdamHyper& hyper);

    [[nodiscard]] const Standardizer& standardizer() const { return standardizer_; }
    [[nodiscard]] const nn::Mlp& encoder() const { return encoder_; }
    [[nodiscard]] const nn::Mlp& value_head() const { return value_; }
    [[nodiscard]] const nn::Mlp& advantage_head() const { return advantage_; }
    [[nodiscard]] nn::Mlp& encoder() { return encoder_; }
    [[nodiscard]] nn::Mlp& value_head() { return value_; }
    [[nodiscard]] nn::Mlp& advantage_head() { return advantage_; }
    [[nodiscard]] std::uint64_t version() const { return encoder_.version() + value_.version() + advantage_.version(); }

private:
    [[nodiscard]] Eigen::VectorXd encode(const Eigen::VectorXd& obs) const;
    [[nodiscard]] Eigen::VectorXd joint(const Eigen::VectorXd& z, const Eigen::VectorXd& action) const;
    void check(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;

    int obs_size_ = 0;
    int action_size_ = 0;
    Standardizer standardizer_;
    nn::Mlp encoder_;
    nn::Mlp value_;
    nn::Mlp advantage_;
    Eigen::VectorXd a_zero_;
    nn::AdamState adam_encoder_, adam_value_, adam_advantage_;
};

nlohmann::json to_json(const DuelingEstimator& est);
DuelingEstimator estimator_from_json(const nlohmann::json& j);

/// U_r = 1 / max(|m|, 1e-6).
double uncertainty_from_margin(double estimated_margin);
double uncertainty(const DuelingEstimator& est, const MarginSample& sample);

/// Packs samples into column matrices.
void pack(const std::vector<LabeledSample>& samples, Eigen::MatrixXd& obs, Eigen::MatrixXd& actions,
          Eigen::VectorXd& targets);

/// Continues training an existing estimator for `options.steps` minibatch steps.
void fit(DuelingEstimator& est, const std::vector<LabeledSample>& samples, const TrainOptions& options);

/// Fresh estimator (standardizer fit on the set) trained on every sample.
DuelingEstimator full_train(const std::vector<LabeledSample>& samples, const EstimatorShape& shape = {},
                            const TrainOptions& options = {});

struct EstimatorMetrics {
    double accuracy = 0.0;
    double specificity = 0.0;  ///< truly unstable samples predicted unstable
    double mae = 0.0;
    std::size_t n = 0;
};

/// Class "stable" means margin > class_threshold, for both the estimate and the label
/// (threshold 0 reproduces the stable flag).
EstimatorMetrics evaluate_estimator(const DuelingEstimator& est, const std::vector<LabeledSample>& test,
                                    double class_threshold = 0.0);

}  // namespace voltguard::margin

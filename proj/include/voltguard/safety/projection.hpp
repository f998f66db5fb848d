#pragma once

#include "voltguard/margin/estimator.hpp"
#include "voltguard/margin/oracle.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <string_view>
#include <vector>

namespace voltguard::safety {

enum class Fallback { UniformEscalation, AllOnes };

std::string_view to_string(Fallback f);
Fallback fallback_from_string(std::string_view name);

struct SafetyConfig {
    double epsilon = 0.1;
    int max_iterations = 1000;  ///< K
    double lambda_min = 1e-3;
    double box_lo = 0.0;
    double box_hi = 1.0;
    Fallback fallback = Fallback::UniformEscalation;
    double escalation_step = 0.05;  ///< fraction of the remaining headroom added per escalation step
    bool normalize_direction = false;
    bool record_trace = false;

    void validate() const;
};

/// Margin of actions for one fixed observation.
class BoundMargin {
public:
    virtual ~BoundMargin() = default;
    [[nodiscard]] virtual double margin(const Eigen::VectorXd& action) const = 0;
    [[nodiscard]] virtual Eigen::VectorXd gradient(const Eigen::VectorXd& action) const = 0;
};

/// Anything that scores (observation, action) pairs with a differentiable margin.
class MarginModel {
public:
    virtual ~MarginModel() = default;
    [[nodiscard]] virtual int action_dim() const = 0;
    /// Upper bound on the Lipschitz constant of the margin in the action.
    [[nodiscard]] virtual double lipschitz() const = 0;
    [[nodiscard]] virtual std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd& observation) const = 0;
};

/// The dueling estimator, with its state encoding computed once per bind.
class EstimatorMargin final : public MarginModel {
public:
    explicit EstimatorMargin(const margin::DuelingEstimator& est);
    [[nodiscard]] int action_dim() const override { return est_->action_size(); }
    [[nodiscard]] double lipschitz() const override { return lipschitz_; }
    [[nodiscard]] std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd& observation) const override;
    /// Recomputes the cached bound after the estimator was retrained in place.
    void refresh() { lipschitz_ = est_->action_lipschitz_bound(); }

private:
    const margin::DuelingEstimator* est_;
    double lipschitz_;
};

/// The ground-truth oracle for one scenario; the observation passed to bind is ignored.
class OracleMargin final : public MarginModel {
public:
    OracleMargin(const margin::DasmOracle& oracle, grid::ScenarioConfig scenario);
    [[nodiscard]] int action_dim() const override;
    [[nodiscard]] double lipschitz() const override;
    [[nodiscard]] std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd& observation) const override;

private:
    const margin::DasmOracle* oracle_;
    grid::ScenarioConfig scenario_;
};

/// d estimate / d action, with no contribution through the state input.
Eigen::VectorXd margin_gradient(const margin::DuelingEstimator& est, const Eigen::VectorXd& observation,
                                const Eigen::VectorXd& action);

/// |epsilon - D| / (2 n_a L^2), floored at lambda_min.
double step_size(double margin, double epsilon, int n_a, double lipschitz, double lambda_min);

struct TracePoint {
    int k = 0;
    double margin = 0.0;
    Eigen::VectorXd action;
};

struct CorrectionResult {
    Eigen::VectorXd action;
    int iterations = 0;
    double initial_margin = 0.0;
    double final_margin = 0.0;
    bool converged = false;
    bool fallback_used = false;
    std::vector<TracePoint> trace;
};

/// Gradient ascent on the margin with box clipping until margin >= epsilon; falls back to
/// shedding more when the iteration budget runs out. Always returns an action in the box.
CorrectionResult correct_action(const MarginModel& model, const Eigen::VectorXd& observation, const Eigen::VectorXd& a0,
                                const SafetyConfig& config = {});

/// CSV `k,margin,a_0..a_m`.
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);

}  // namespace voltguard::safety

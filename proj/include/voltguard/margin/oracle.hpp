#pragma once

#include "voltguard/env/scmdp.hpp"
#include "voltguard/grid/simulator.hpp"

#include <Eigen/Dense>

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace voltguard::margin {

/// Settings for the minimal-shed search along one direction in action space.
struct BoundaryOptions {
    double tolerance = 0.005;
    Eigen::VectorXd direction;  ///< components in [0, 1] with max 1; empty means uniform
    grid::SimOptions sim;

    void validate(int n_devices) const;
    [[nodiscard]] Eigen::VectorXd resolved_direction(int n_devices) const;
};

/// Minimal stabilising shed t along `direction`: the action t * direction.
struct ActionBoundary {
    double fraction = 0.0;  ///< t, the smallest bracketed stable value
    Eigen::VectorXd point;  ///< t * direction
    Eigen::VectorXd direction;
    int simulations = 0;
};

/// Bisection on the shed fraction. Throws NoFeasibleAction when full shedding along the
/// direction still collapses, InfeasibleScenario when there is no pre-fault equilibrium.
ActionBoundary feasible_action_boundary(const grid::ScenarioConfig& scenario, const BoundaryOptions& options = {});

/// Stable on the traversal grid {0, step, ..., 1} of uniform shedding: the smallest grid point that holds.
/// Returns nullopt when no grid point is stable.
std::optional<double> traversal_boundary(const grid::ScenarioConfig& scenario, double step = 0.02,
                                         const grid::SimOptions& sim = {});

/// One point P_C of the dynamic security region boundary found by scaling every load
/// by k until the uncontrolled fault response collapses or the operating point disappears.
struct DsrPoint {
    double k_stable = 1.0;    ///< largest bracketed scaling that survives
    double k_unstable = 1.0;  ///< smallest bracketed scaling that fails
    Eigen::VectorXd p_c;      ///< [P_load, Q_load] per load entry at the midpoint scaling
    double distance = 0.0;    ///< Euclidean pu distance from the operating point to p_c
};

/// Points found so far for one fault, and the metric they were measured in.
struct DsrBoundary {
    grid::FaultSpec fault;
    std::string metric = "euclidean-pq";
    std::vector<DsrPoint> points;
};

struct RayOptions {
    double step = 0.1;            ///< initial scaling increment
    double bracket_pu = 0.01;     ///< final bracket width in pu distance
    double max_scaling = 4.0;
    grid::SimOptions sim;
};

/// Ray search toward uniform load increase. Requires the scenario to be stable without control;
/// otherwise the operating point already lies outside the region and the distance is 0.
DsrPoint dsr_ray_search(const grid::ScenarioConfig& scenario, const RayOptions& options = {});

/// Load vector [P_1..P_m, Q_1..Q_m] of the operating point (one entry pair per load).
Eigen::VectorXd load_vector(const grid::ScenarioConfig& scenario);

struct OracleConfig {
    double state_term_scale = 1.0;
    BoundaryOptions boundary;
    RayOptions ray;
};

/// Everything the oracle needs about one scenario, independent of the action.
struct ScenarioMargin {
    ActionBoundary boundary;
    double state_term = 0.0;  ///< dis(P, boundary of the region), 0 when control is required
    bool stable_without_control = false;
};

/// Signed action-jointed margin d(s, a) = state term + (projection of a on the boundary ray - boundary).
/// d > 0 exactly when the action is judged stabilising; a tie counts as unstable.
/// Per-scenario searches are cached; the cache is safe to share across threads.
class DasmOracle {
public:
    explicit DasmOracle(OracleConfig config = {});

    [[nodiscard]] const OracleConfig& config() const { return config_; }

    /// Throws NoFeasibleAction or InfeasibleScenario from the underlying searches.
    const ScenarioMargin& scenario_margin(const grid::ScenarioConfig& scenario) const;

    [[nodiscard]] double margin(const grid::ScenarioConfig& scenario, const Eigen::VectorXd& action) const;

    /// d is affine in the action with this constant gradient.
    [[nodiscard]] Eigen::VectorXd action_gradient(const grid::ScenarioConfig& scenario) const;

    [[nodiscard]] std::size_t cached() const;
    void clear();

private:
    OracleConfig config_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, ScenarioMargin> cache_;
};

/// Free-function form; each call runs its own searches.
double dasm_oracle(const grid::ScenarioConfig& scenario, const Eigen::VectorXd& action, const OracleConfig& config = {});

/// Tie-break rule shared by labels and evaluation.
inline bool margin_is_stable(double d) { return d > 0.0; }

}  // namespace voltguard::margin

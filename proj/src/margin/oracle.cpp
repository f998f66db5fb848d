#include "voltguard/margin/oracle.hpp"

#include "voltguard/error.hpp"
#include "voltguard/grid/scenario_io.hpp"

#include <cmath>
#include <string>

namespace voltguard::margin {

void BoundaryOptions::validate(int n_devices) const {
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw ConfigError("boundary tolerance must lie in (0, 1)");
    if (direction.size() != 0) {
        if (direction.size() != n_devices) throw DimensionError("boundary direction length differs from device count");
        if (!(direction.minCoeff() >= 0.0) || std::abs(direction.maxCoeff() - 1.0) > 1e-12) {
            throw ConfigError("boundary direction components must lie in [0, 1] with maximum 1");
        }
    }
    sim.validate();
}

Eigen::VectorXd BoundaryOptions::resolved_direction(int n_devices) const {
    return direction.size() == 0 ? Eigen::VectorXd::Ones(n_devices) : direction;
}

namespace {

bool episode_stable(const grid::ScenarioConfig& scenario, const Eigen::VectorXd& action, const grid::SimOptions& sim) {
    grid::SimOptions opts = sim;
    opts.record_trajectory = false;
    const std::vector<double> a(action.data(), action.data() + action.size());
    return grid::simulate_episode(scenario, a, opts).stable;
}

}  // namespace

ActionBoundary feasible_action_boundary(const grid::ScenarioConfig& scenario, const BoundaryOptions& options) {
    const auto& net = grid::shipped_system(scenario.system);
    const int n_d = net.n_devices();
    if (n_d == 0) throw NoFeasibleAction("system '" + scenario.system + "' has no shedding devices");
    options.validate(n_d);

    ActionBoundary out;
    out.direction = options.resolved_direction(n_d);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n_d);
    ++out.simulations;
    if (episode_stable(scenario, zero, options.sim)) {
        out.fraction = 0.0;
        out.point = zero;
        return out;
    }
    ++out.simulations;
    if (!episode_stable(scenario, out.direction, options.sim)) {
        throw NoFeasibleAction("scenario '" + scenario.id + "' collapses even with full shedding");
    }
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > options.tolerance) {
        const double mid = 0.5 * (lo + hi);
        ++out.simulations;
        if (episode_stable(scenario, mid * out.direction, options.sim)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    out.fraction = hi;
    out.point = hi * out.direction;
    return out;
}

std::optional<double> traversal_boundary(const grid::ScenarioConfig& scenario, double step, const grid::SimOptions& sim) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("traversal step must lie in (0, 1]");
    const int n_d = grid::shipped_system(scenario.system).n_devices();
    const long n = std::lround(1.0 / step);
    for (long i = 0; i <= n; ++i) {
        const double t = std::min(1.0, static_cast<double>(i) * step);
        if (episode_stable(scenario, Eigen::VectorXd::Constant(n_d, t), sim)) return t;
    }
    return std::nullopt;
}

Eigen::VectorXd load_vector(const grid::ScenarioConfig& scenario) {
    const auto op = grid::operating_network(grid::shipped_system(scenario.system), scenario);
    const auto m = static_cast<Eigen::Index>(op.loads.size());
    Eigen::VectorXd v(2 * m);
    for (Eigen::Index i = 0; i < m; ++i) {
        v(i) = op.loads[static_cast<std::size_t>(i)].p;
        v(m + i) = op.loads[static_cast<std::size_t>(i)].q;
    }
    return v;
}

DsrPoint dsr_ray_search(const grid::ScenarioConfig& scenario, const RayOptions& options) {
    if (!(options.step > 0.0 && options.bracket_pu > 0.0 && options.max_scaling > 1.0)) {
        throw ConfigError("invalid ray search options");
    }
    const int n_d = grid::shipped_system(scenario.system).n_devices();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n_d);
    const Eigen::VectorXd p0 = load_vector(scenario);
    const double norm = p0.norm();

    auto survives = [&](double k) {
        try {
            return episode_stable(grid::scale_loads(scenario, k), zero, options.sim);
        } catch (const InfeasibleScenario&) {
            return false;
        }
    };

    DsrPoint pt;
    if (!survives(1.0)) {
        pt.p_c = p0;
        return pt;
    }
    double lo = 1.0;
    double hi = 1.0 + options.step;
    while (survives(hi)) {
        lo = hi;
        if (hi >= options.max_scaling) break;
        hi = std::min(options.max_scaling, hi + options.step);
    }
    if (lo < hi) {
        while ((hi - lo) * norm > options.bracket_pu) {
            const double mid = 0.5 * (lo + hi);
            if (survives(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    pt.k_stable = lo;
    pt.k_unstable = hi;
    const double k_c = 0.5 * (lo + hi);
    pt.p_c = k_c * p0;
    pt.distance = (k_c - 1.0) * norm;
    return pt;
}

DasmOracle::DasmOracle(OracleConfig config) : config_(std::move(config)) {
    if (!(config_.state_term_scale >= 0.0)) throw ConfigError("state_term_scale must be non-negative");
}

const ScenarioMargin& DasmOracle::scenario_margin(const grid::ScenarioConfig& scenario) const {
    const std::string key = nlohmann::json(scenario).dump();
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    ScenarioMargin sm;
    sm.boundary = feasible_action_boundary(scenario, config_.boundary);
    sm.stable_without_control = sm.boundary.fraction == 0.0;
    if (sm.stable_without_control) {
        RayOptions ray = config_.ray;
        ray.sim = config_.boundary.sim;
        sm.state_term = dsr_ray_search(scenario, ray).distance;
    }
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(sm)).first->second;
}

double DasmOracle::margin(const grid::ScenarioConfig& scenario, const Eigen::VectorXd& action) const {
    const auto& sm = scenario_margin(scenario);
    const auto& dir = sm.boundary.direction;
    if (action.size() != dir.size()) throw DimensionError("action length differs from device count");
    const double along = action.dot(dir) / dir.squaredNorm();
    return config_.state_term_scale * sm.state_term + (along - sm.boundary.fraction);
}

Eigen::VectorXd DasmOracle::action_gradient(const grid::ScenarioConfig& scenario) const {
    const auto& dir = scenario_margin(scenario).boundary.direction;
    return dir / dir.squaredNorm();
}

std::size_t DasmOracle::cached() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

void DasmOracle::clear() {
    std::lock_guard lock(mutex_);
    cache_.clear();
}

double dasm_oracle(const grid::ScenarioConfig& scenario, const Eigen::VectorXd& action, const OracleConfig& config) {
    return DasmOracle(config).margin(scenario, action);
}

}  // namespace voltguard::margin

#include "voltguard/agent/baselines.hpp"

#include "voltguard/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace voltguard::agent {

TypicalLsController::TypicalLsController(const grid::NetworkModel& network, TypicalLsConfig config, double dt)
    : config_(config), hold_samples_(std::max(1L, std::lround(config.hold_s / dt))) {
    if (!(config.tranche > 0.0 && config.tranche <= 1.0) || config.max_rounds < 0 || !(config.hold_s > 0.0)) {
        throw ConfigError("invalid typical load-shedding settings");
    }
    const int n_d = network.n_devices();
    device_buses_.resize(static_cast<std::size_t>(n_d));
    for (const auto& l : network.loads) {
        if (l.device >= 0) device_buses_[static_cast<std::size_t>(l.device)].push_back(l.bus);
    }
    below_.assign(static_cast<std::size_t>(n_d), 0);
    rounds_.assign(static_cast<std::size_t>(n_d), 0);
}

bool TypicalLsController::update(long k, double, const grid::Timeline& timeline, std::span<const double> measured,
                                 std::vector<double>& shed) {
    if (k < timeline.fault_on || measured.empty()) return false;
    bool changed = false;
    for (std::size_t d = 0; d < device_buses_.size(); ++d) {
        double v = 1e9;
        for (int b : device_buses_[d]) v = std::min(v, measured[static_cast<std::size_t>(b)]);
        below_[d] = v < config_.v_threshold ? below_[d] + 1 : 0;
        if (below_[d] >= hold_samples_ && rounds_[d] < config_.max_rounds) {
            shed[d] = std::min(1.0, shed[d] + config_.tranche);
            ++rounds_[d];
            below_[d] = 0;
            changed = true;
        }
    }
    return changed;
}

int TypicalLsController::tranches_fired() const { return std::accumulate(rounds_.begin(), rounds_.end(), 0); }

TypicalLsOutcome baseline_typical_ls(const grid::ScenarioConfig& scenario, const TypicalLsConfig& config,
                                     const grid::SimOptions& sim) {
    TypicalLsController ctrl(grid::shipped_system(scenario.system), config, sim.dt);
    TypicalLsOutcome out;
    out.outcome = grid::simulate(scenario, ctrl, sim);
    out.tranches = ctrl.tranches_fired();
    return out;
}

TraversalResult baseline_traversal(const grid::ScenarioConfig& scenario, double step, const grid::SimOptions& sim) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("traversal step must lie in (0, 1]");
    const int n_d = grid::shipped_system(scenario.system).n_devices();
    const int levels = static_cast<int>(std::lround(1.0 / step)) + 1;
    std::size_t count = 1;
    for (int i = 0; i < n_d; ++i) count *= static_cast<std::size_t>(levels);

    std::vector<std::vector<int>> points;
    points.reserve(count);
    std::vector<int> idx(static_cast<std::size_t>(n_d), 0);
    for (std::size_t c = 0; c < count; ++c) {
        points.push_back(idx);
        for (int i = n_d - 1; i >= 0; --i) {
            auto& v = idx[static_cast<std::size_t>(i)];
            if (++v < levels) break;
            v = 0;
        }
    }
    std::stable_sort(points.begin(), points.end(), [](const auto& x, const auto& y) {
        const int sx = std::accumulate(x.begin(), x.end(), 0);
        const int sy = std::accumulate(y.begin(), y.end(), 0);
        return sx != sy ? sx < sy : x < y;
    });

    grid::SimOptions opts = sim;
    opts.record_trajectory = false;
    TraversalResult res;
    for (const auto& p : points) {
        std::vector<double> a(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) a[i] = std::min(1.0, p[i] * step);
        ++res.simulations;
        if (grid::simulate_episode(scenario, a, opts).stable) {
            res.action = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
            return res;
        }
    }
    throw NoFeasibleAction("no traversal grid point stabilises scenario '" + scenario.id + "'");
}

}  // namespace voltguard::agent

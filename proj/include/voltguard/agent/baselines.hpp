#pragma once

#include "voltguard/grid/simulator.hpp"

#include <Eigen/Dense>

#include <vector>

namespace voltguard::agent {

struct TypicalLsConfig {
    double v_threshold = 0.9;
    double hold_s = 0.5;   ///< continuous time below threshold before a tranche fires
    double tranche = 0.1;  ///< shed fraction added per round
    int max_rounds = 3;
};

/// Decentralised multi-round under-voltage relay: every device watches its own bus and sheds a
/// tranche each time the voltage has stayed below the threshold for the hold time.
class TypicalLsController final : public grid::ShedController {
public:
    TypicalLsController(const grid::NetworkModel& network, TypicalLsConfig config, double dt);

    bool update(long k, double t, const grid::Timeline& timeline, std::span<const double> measured,
                std::vector<double>& shed) override;

    [[nodiscard]] int tranches_fired() const;
    [[nodiscard]] const std::vector<int>& rounds() const { return rounds_; }

private:
    TypicalLsConfig config_;
    long hold_samples_;
    std::vector<std::vector<int>> device_buses_;
    std::vector<long> below_;
    std::vector<int> rounds_;
};

struct TypicalLsOutcome {
    grid::SimOutcome outcome;
    int tranches = 0;
};

TypicalLsOutcome baseline_typical_ls(const grid::ScenarioConfig& scenario, const TypicalLsConfig& config = {},
                                     const grid::SimOptions& sim = {});

struct TraversalResult {
    Eigen::VectorXd action;
    int simulations = 0;
};

/// Grid {0, step, ..., 1}^n_d searched in order of total shed then lexicographically; the first
/// stable point is returned. Throws NoFeasibleAction when no grid point is stable.
TraversalResult baseline_traversal(const grid::ScenarioConfig& scenario, double step = 0.2,
                                   const grid::SimOptions& sim = {});

}  // namespace voltguard::agent

#pragma once

#include "voltguard/env/scmdp.hpp"
#include "voltguard/margin/oracle.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace voltguard::margin {

struct MarginSample {
    std::string scenario_id;
    env::Observation observation;
    env::ControlAction action;
};

struct LabeledSample {
    MarginSample sample;
    double d = 0.0;
    bool stable = false;  ///< d > 0
};

/// Throws DimensionError when observation or action lengths disagree across samples.
void check_consistent(const std::vector<MarginSample>& samples);

/// `count_per_scenario` uniformly random actions in [0, max_shed]^n_d for every scenario.
std::vector<MarginSample> random_action_samples(const std::vector<grid::ScenarioConfig>& scenarios,
                                                int count_per_scenario, std::uint64_t seed, double max_shed = 1.0);

/// Labels with the oracle, in parallel. Samples whose scenario has no stabilising action are
/// dropped and their ids appended to `skipped` when given.
std::vector<LabeledSample> label_samples(const std::vector<MarginSample>& samples,
                                         const std::vector<grid::ScenarioConfig>& scenarios, const DasmOracle& oracle,
                                         std::vector<std::string>* skipped = nullptr, unsigned threads = 0);

/// Per-sample labeler used by active learning; nullopt marks a failed label.
using Labeler = std::function<std::optional<LabeledSample>(const MarginSample&)>;

/// Labeler backed by the oracle and a scenario list looked up by id.
Labeler oracle_labeler(const DasmOracle& oracle, const std::vector<grid::ScenarioConfig>& scenarios);

/// CSV `scenario_id,obs_0..obs_k,act_0..act_m,d,stable`. Doubles are written with 17 significant digits.
void write_labeled_csv(std::ostream& out, const std::vector<LabeledSample>& samples);
void write_labeled_header(std::ostream& out, Eigen::Index n_obs, Eigen::Index n_act);
void write_labeled_rows(std::ostream& out, const std::vector<LabeledSample>& samples);
/// Needs the system dimensions to rebuild observation segments. Throws ConfigError on malformed rows.
std::vector<LabeledSample> read_labeled_csv(std::istream& in, int n_bus, int n_gen);

}  // namespace voltguard::margin

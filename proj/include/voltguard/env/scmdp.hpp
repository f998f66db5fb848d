#pragma once

#include "voltguard/grid/simulator.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace voltguard::env {

/// Pre-fault operating state, ordered [P (n_b), Q (n_b), V (n_b), P_G (n_g), Q_G (n_g)].
struct Observation {
    Eigen::VectorXd values;
    int n_bus = 0;
    int n_gen = 0;

    [[nodiscard]] static int length(int n_bus, int n_gen) { return 3 * n_bus + 2 * n_gen; }
    [[nodiscard]] Eigen::Index size() const { return values.size(); }
    [[nodiscard]] auto p() const { return values.segment(0, n_bus); }
    [[nodiscard]] auto q() const { return values.segment(n_bus, n_bus); }
    [[nodiscard]] auto v() const { return values.segment(2 * n_bus, n_bus); }
    [[nodiscard]] auto p_gen() const { return values.segment(3 * n_bus, n_gen); }
    [[nodiscard]] auto q_gen() const { return values.segment(3 * n_bus + n_gen, n_gen); }
};

/// Shed fraction per device, each in [0, 1].
struct ControlAction {
    Eigen::VectorXd shed;

    ControlAction() = default;
    explicit ControlAction(Eigen::VectorXd s) : shed(std::move(s)) {}
    static ControlAction zeros(int n_devices) { return ControlAction(Eigen::VectorXd::Zero(n_devices)); }
    static ControlAction uniform(int n_devices, double fraction) {
        return ControlAction(Eigen::VectorXd::Constant(n_devices, fraction));
    }

    [[nodiscard]] Eigen::Index size() const { return shed.size(); }
    [[nodiscard]] double total() const { return shed.sum(); }
    [[nodiscard]] std::vector<double> as_vector() const { return {shed.data(), shed.data() + shed.size()}; }
    /// Throws ConfigError for a wrong length or a component outside [0, 1].
    void validate(int n_devices) const;
};

enum class DeviationMode { Instant, WindowMean };

struct RewardParams {
    double xi = 100.0;   ///< violation penalty magnitude
    double alpha = 1.0;  ///< weight on total shed
    double beta = 2.0;   ///< weight on squared voltage deviation
    double gamma = 1.0;  ///< discount; inert for one-shot episodes
    DeviationMode deviation = DeviationMode::Instant;

    void validate() const;
};

struct ConstraintSpec {
    double epsilon = 0.1;  ///< margin threshold the safety layer enforces
    double v_threshold = 0.8;
    double check_delay_s = 10.0;

    void validate() const;
};

struct EpisodeResult {
    double reward = 0.0;
    bool violated = false;
    grid::SimOutcome outcome;
    double shed_total = 0.0;
    double deviation = 0.0;
};

struct SamplingRanges {
    double scaling_lo = 0.6;
    double scaling_hi = 1.0;
    double motor_lo = 0.5;
    double motor_hi = 0.6;
    std::vector<grid::FaultSpec> faults;  ///< empty: the system's default fault
    int rejection_budget = 100;

    void validate() const;
};

void to_json(nlohmann::json& j, const SamplingRanges& r);
void from_json(const nlohmann::json& j, SamplingRanges& r);

/// Uniform draw of zone scalings, motor shares and a fault; redraws (from the same
/// stream) while the operating point has no pre-fault equilibrium.
grid::ScenarioConfig sample_scenario(const std::string& system, std::uint64_t seed, const SamplingRanges& ranges);

/// `count` scenarios from seeds derived deterministically from `root_seed`.
std::vector<grid::ScenarioConfig> sample_scenarios(const std::string& system, std::uint64_t root_seed,
                                                   std::size_t count, const SamplingRanges& ranges,
                                                   std::uint64_t stream_offset = 0);

Observation observe(const grid::ScenarioConfig& scenario);

double compute_reward(const grid::SimOutcome& result, const ControlAction& action, const RewardParams& params);

/// The state-constrained MDP over one system. Stateless: each step is one full episode.
class ScmdpEnv {
public:
    ScmdpEnv(std::string system, grid::SimOptions sim = {}, RewardParams reward = {}, ConstraintSpec constraint = {});

    [[nodiscard]] const std::string& system() const { return system_; }
    [[nodiscard]] const grid::NetworkModel& network() const { return *network_; }
    [[nodiscard]] int observation_size() const;
    [[nodiscard]] int action_size() const { return network_->n_devices(); }
    [[nodiscard]] const grid::SimOptions& sim_options() const { return sim_; }
    [[nodiscard]] const RewardParams& reward_params() const { return reward_; }
    [[nodiscard]] const ConstraintSpec& constraint() const { return constraint_; }

    [[nodiscard]] Observation observe(const grid::ScenarioConfig& scenario) const;
    [[nodiscard]] EpisodeResult step(const grid::ScenarioConfig& scenario, const ControlAction& action) const;
    /// Wraps an outcome produced by some other controller (e.g. a rule-based baseline).
    [[nodiscard]] EpisodeResult score(const grid::SimOutcome& outcome) const;

private:
    std::string system_;
    const grid::NetworkModel* network_;
    grid::SimOptions sim_;
    RewardParams reward_;
    ConstraintSpec constraint_;
};

/// `{"schema_version": 1, "system": ..., "ranges": {...}, "seeds": [...]}`
struct EnvBatch {
    std::string system;
    SamplingRanges ranges;
    std::vector<std::uint64_t> seeds;

    [[nodiscard]] std::vector<grid::ScenarioConfig> scenarios() const;
};
nlohmann::json batch_to_json(const EnvBatch& batch);
EnvBatch batch_from_json(const nlohmann::json& doc);

struct EpisodeLogRow {
    std::string scenario_id;
    double shed_total = 0.0;
    bool violated = false;
    double reward = 0.0;
    double min_v = 0.0;
};
/// CSV `scenario_id,shed_total,violated,reward,min_v`.
void write_episode_log(std::ostream& out, const std::vector<EpisodeLogRow>& rows);

}  // namespace voltguard::env

#include "voltguard/env/scmdp.hpp"

#include "voltguard/error.hpp"
#include "voltguard/grid/scenario_io.hpp"
#include "voltguard/util/random.hpp"

#include <iomanip>
#include <ostream>

namespace voltguard::env {

void ControlAction::validate(int n_devices) const {
    if (shed.size() != n_devices) {
        throw ConfigError("action has " + std::to_string(shed.size()) + " components, expected " +
                          std::to_string(n_devices));
    }
    for (Eigen::Index i = 0; i < shed.size(); ++i) {
        if (!(shed(i) >= 0.0 && shed(i) <= 1.0)) throw ConfigError("action components must lie in [0, 1]");
    }
}

void RewardParams::validate() const {
    if (!(xi > 0.0 && alpha > 0.0 && beta > 0.0)) throw ConfigError("reward weights must be positive");
}

void ConstraintSpec::validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("margin threshold must be non-negative");
}

void SamplingRanges::validate() const {
    if (!(scaling_lo > 0.0 && scaling_lo <= scaling_hi)) throw ConfigError("invalid load scaling range");
    if (!(motor_lo >= 0.0 && motor_lo <= motor_hi && motor_hi <= 1.0)) throw ConfigError("invalid motor share range");
    if (rejection_budget < 1) throw ConfigError("rejection budget must be positive");
}

void to_json(nlohmann::json& j, const SamplingRanges& r) {
    j = {{"scaling", {r.scaling_lo, r.scaling_hi}},
         {"motor_share", {r.motor_lo, r.motor_hi}},
         {"faults", r.faults},
         {"rejection_budget", r.rejection_budget}};
}

void from_json(const nlohmann::json& j, SamplingRanges& r) {
    r = SamplingRanges{};
    if (j.contains("scaling")) {
        const auto s = j.at("scaling").get<std::vector<double>>();
        if (s.size() != 2) throw ConfigError("ranges.scaling must be [lo, hi]");
        r.scaling_lo = s[0];
        r.scaling_hi = s[1];
    }
    if (j.contains("motor_share")) {
        const auto m = j.at("motor_share").get<std::vector<double>>();
        if (m.size() != 2) throw ConfigError("ranges.motor_share must be [lo, hi]");
        r.motor_lo = m[0];
        r.motor_hi = m[1];
    }
    if (j.contains("faults")) r.faults = j.at("faults").get<std::vector<grid::FaultSpec>>();
    r.rejection_budget = j.value("rejection_budget", 100);
    r.validate();
}

grid::ScenarioConfig sample_scenario(const std::string& system, std::uint64_t seed, const SamplingRanges& ranges) {
    ranges.validate();
    const auto& net = grid::shipped_system(system);
    Rng rng(mix_seed(seed));
    for (int attempt = 0; attempt < ranges.rejection_budget; ++attempt) {
        grid::ScenarioConfig s;
        s.id = system + "-" + std::to_string(seed);
        s.system = system;
        s.seed = seed;
        for (int z = 0; z < net.n_zones(); ++z) s.zone_scaling.push_back(uniform(rng, ranges.scaling_lo, ranges.scaling_hi));
        for (std::size_t l = 0; l < net.loads.size(); ++l) s.motor_share.push_back(uniform(rng, ranges.motor_lo, ranges.motor_hi));
        if (ranges.faults.empty()) {
            s.fault = net.default_fault;
        } else {
            s.fault = ranges.faults[static_cast<std::size_t>(rng() % ranges.faults.size())];
        }
        try {
            (void)grid::find_equilibrium(s);
            return s;
        } catch (const InfeasibleScenario&) {
            continue;
        }
    }
    throw SamplingError("no feasible scenario for seed " + std::to_string(seed) + " within the rejection budget");
}

std::vector<grid::ScenarioConfig> sample_scenarios(const std::string& system, std::uint64_t root_seed,
                                                   std::size_t count, const SamplingRanges& ranges,
                                                   std::uint64_t stream_offset) {
    std::vector<grid::ScenarioConfig> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(sample_scenario(system, child_seed(root_seed, stream_offset + i), ranges));
    }
    return out;
}

Observation observe(const grid::ScenarioConfig& scenario) {
    const grid::Plant plant(grid::operating_network(grid::shipped_system(scenario.system), scenario));
    const grid::GridState eq = grid::find_equilibrium(plant);
    const grid::PowerFlow pf = grid::power_flow(plant, eq);
    Observation o;
    o.n_bus = plant.network().n_bus;
    o.n_gen = plant.network().n_gen();
    o.values.resize(Observation::length(o.n_bus, o.n_gen));
    o.values << pf.p, pf.q, pf.v, pf.p_gen, pf.q_gen;
    if (!o.values.allFinite()) throw NumericalError("non-finite observation for scenario '" + scenario.id + "'");
    return o;
}

double compute_reward(const grid::SimOutcome& result, const ControlAction& action, const RewardParams& params) {
    if (!result.stable) return -params.xi;
    const double deviation =
        params.deviation == DeviationMode::Instant ? result.deviation_instant : result.deviation_window;
    return -params.alpha * action.total() - params.beta * deviation;
}

ScmdpEnv::ScmdpEnv(std::string system, grid::SimOptions sim, RewardParams reward, ConstraintSpec constraint)
    : system_(std::move(system)),
      network_(&grid::shipped_system(system_)),
      sim_(sim),
      reward_(reward),
      constraint_(constraint) {
    sim_.validate();
    reward_.validate();
    constraint_.validate();
    sim_.v_threshold = constraint_.v_threshold;
    sim_.check_delay_s = constraint_.check_delay_s;
}

int ScmdpEnv::observation_size() const { return Observation::length(network_->n_bus, network_->n_gen()); }

Observation ScmdpEnv::observe(const grid::ScenarioConfig& scenario) const {
    if (scenario.system != system_) throw ConfigError("scenario belongs to system '" + scenario.system + "'");
    return env::observe(scenario);
}

EpisodeResult ScmdpEnv::score(const grid::SimOutcome& outcome) const {
    EpisodeResult r;
    const auto& applied = outcome.trajectory.action;
    const ControlAction action(Eigen::Map<const Eigen::VectorXd>(applied.data(), static_cast<Eigen::Index>(applied.size())));
    r.reward = compute_reward(outcome, action, reward_);
    r.violated = !outcome.stable;
    r.shed_total = action.total();
    r.deviation = reward_.deviation == DeviationMode::Instant ? outcome.deviation_instant : outcome.deviation_window;
    r.outcome = outcome;
    return r;
}

EpisodeResult ScmdpEnv::step(const grid::ScenarioConfig& scenario, const ControlAction& action) const {
    if (scenario.system != system_) throw ConfigError("scenario belongs to system '" + scenario.system + "'");
    action.validate(action_size());
    const auto a = action.as_vector();
    return score(grid::simulate_episode(scenario, a, sim_));
}

std::vector<grid::ScenarioConfig> EnvBatch::scenarios() const {
    std::vector<grid::ScenarioConfig> out;
    out.reserve(seeds.size());
    for (auto seed : seeds) out.push_back(sample_scenario(system, seed, ranges));
    return out;
}

nlohmann::json batch_to_json(const EnvBatch& batch) {
    return {{"schema_version", 1}, {"system", batch.system}, {"ranges", batch.ranges}, {"seeds", batch.seeds}};
}

EnvBatch batch_from_json(const nlohmann::json& doc) {
    try {
        if (doc.value("schema_version", 1) != 1) throw ConfigError("unsupported batch schema_version");
        EnvBatch b;
        b.system = doc.at("system").get<std::string>();
        b.ranges = doc.contains("ranges") ? doc.at("ranges").get<SamplingRanges>() : SamplingRanges{};
        b.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed batch file: ") + e.what());
    }
}

void write_episode_log(std::ostream& out, const std::vector<EpisodeLogRow>& rows) {
    out << "scenario_id,shed_total,violated,reward,min_v\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.scenario_id << ',' << r.shed_total << ',' << (r.violated ? 1 : 0) << ',' << r.reward << ',' << r.min_v
            << '\n';
    }
}

}  // namespace voltguard::env

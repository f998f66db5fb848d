#include "voltguard/cli/config.hpp"

#include "voltguard/error.hpp"

#include <cstdio>
#include <fstream>

namespace voltguard::cli {

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

void read_sim(const nlohmann::json& j, grid::SimOptions& s) {
    take(j, "dt", s.dt);
    take(j, "check_delay_s", s.check_delay_s);
    take(j, "v_threshold", s.v_threshold);
    take(j, "residual_tol", s.residual_tol);
}

void read_reward(const nlohmann::json& j, env::RewardParams& r) {
    take(j, "xi", r.xi);
    take(j, "alpha", r.alpha);
    take(j, "beta", r.beta);
    take(j, "gamma", r.gamma);
    if (j.contains("deviation")) {
        const auto d = j.at("deviation").get<std::string>();
        if (d == "instant") {
            r.deviation = env::DeviationMode::Instant;
        } else if (d == "window") {
            r.deviation = env::DeviationMode::WindowMean;
        } else {
            throw ConfigError("reward.deviation must be 'instant' or 'window'");
        }
    }
}

void read_safety(const nlohmann::json& j, safety::SafetyConfig& s) {
    take(j, "epsilon", s.epsilon);
    take(j, "max_iterations", s.max_iterations);
    take(j, "lambda_min", s.lambda_min);
    take(j, "escalation_step", s.escalation_step);
    take(j, "normalize_direction", s.normalize_direction);
    if (j.contains("fallback")) s.fallback = safety::fallback_from_string(j.at("fallback").get<std::string>());
}

void read_estimator(const nlohmann::json& j, EstimatorSettings& e) {
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "desk") {
            e.shape = margin::EstimatorShape::desk();
        } else if (p == "paper-scale") {
            e.shape = margin::EstimatorShape::paper_scale();
            e.train.adam.lr = 1e-4;
            e.epsilon_label = 0.5;
        } else {
            throw ConfigError("estimator.preset must be 'desk' or 'paper-scale'");
        }
    }
    take(j, "hidden", e.shape.hidden);
    take(j, "encoder_layers", e.shape.encoder_layers);
    take(j, "advantage_layers", e.shape.advantage_layers);
    take(j, "lr", e.train.adam.lr);
    take(j, "batch_size", e.train.batch_size);
    take(j, "steps", e.train.steps);
    take(j, "folds", e.folds);
    take(j, "epsilon_label", e.epsilon_label);
}

void read_active(const nlohmann::json& j, margin::ALConfig& a) {
    take(j, "initial_pool", a.initial_pool);
    take(j, "query_batch", a.query_batch);
    take(j, "epsilon_label", a.epsilon_label);
    take(j, "max_rounds", a.max_rounds);
    take(j, "target_accuracy", a.target_accuracy);
    take(j, "steps_per_round", a.steps_per_round);
    if (j.contains("strategy")) {
        const auto s = j.at("strategy").get<std::string>();
        if (s == "uncertainty") {
            a.strategy = margin::QueryStrategy::Uncertainty;
        } else if (s == "random") {
            a.strategy = margin::QueryStrategy::Random;
        } else {
            throw ConfigError("active.strategy must be 'uncertainty' or 'random'");
        }
    }
}

void read_sac(const nlohmann::json& j, agent::SacConfig& s) {
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "paper-scale") {
            s = agent::SacConfig::paper_scale();
        } else if (p != "desk") {
            throw ConfigError("sac.preset must be 'desk' or 'paper-scale'");
        }
    }
    take(j, "policy_lr", s.policy_lr);
    take(j, "critic_lr", s.critic_lr);
    take(j, "alpha_lr", s.alpha_lr);
    take(j, "tau", s.tau);
    take(j, "batch_size", s.batch_size);
    take(j, "capacity", s.capacity);
    take(j, "initial_alpha", s.initial_alpha);
    take(j, "episodes", s.episodes);
    take(j, "eval_every", s.eval_every);
    take(j, "warmup", s.warmup);
    take(j, "updates_per_episode", s.updates_per_episode);
    take(j, "hidden", s.hidden);
    take(j, "layers", s.layers);
    if (j.contains("target_entropy")) s.target_entropy = j.at("target_entropy").get<double>();
}

}  // namespace

void RunConfig::validate() const {
    (void)grid::shipped_system(system);
    ranges.validate();
    sim.validate();
    reward.validate();
    safety.validate();
    active.validate();
    sac.validate();
    if (label.actions_per_scenario <= 0 && label.action_grid.empty()) {
        throw ConfigError("label.actions_per_scenario must be positive");
    }
    for (double a : label.action_grid) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("label.action_grid entries must lie in [0, 1]");
    }
    if (label.chunk == 0) throw ConfigError("label.chunk must be positive");
    if (estimator.folds < 2) throw ConfigError("estimator.folds must be at least 2");
}

RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        RunConfig c;
        c.source = j;
        take(j, "system", c.system);
        if (j.contains("ranges")) c.ranges = j.at("ranges").get<env::SamplingRanges>();
        if (j.contains("sim")) read_sim(j.at("sim"), c.sim);
        if (j.contains("reward")) read_reward(j.at("reward"), c.reward);
        if (j.contains("safety")) read_safety(j.at("safety"), c.safety);
        if (j.contains("estimator")) read_estimator(j.at("estimator"), c.estimator);
        c.active.shape = c.estimator.shape;
        c.active.train = c.estimator.train;
        c.active.epsilon_label = c.estimator.epsilon_label;
        if (j.contains("active")) read_active(j.at("active"), c.active);
        if (j.contains("sac")) read_sac(j.at("sac"), c.sac);
        if (j.contains("typical")) {
            const auto& t = j.at("typical");
            take(t, "v_threshold", c.typical.v_threshold);
            take(t, "hold_s", c.typical.hold_s);
            take(t, "tranche", c.typical.tranche);
            take(t, "max_rounds", c.typical.max_rounds);
        }
        if (j.contains("label")) {
            const auto& l = j.at("label");
            take(l, "actions_per_scenario", c.label.actions_per_scenario);
            take(l, "action_grid", c.label.action_grid);
            take(l, "max_shed", c.label.max_shed);
            take(l, "chunk", c.label.chunk);
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::uint64_t config_digest(const nlohmann::json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_digest(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

}  // namespace voltguard::cli

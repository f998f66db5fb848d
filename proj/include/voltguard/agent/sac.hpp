#pragma once

#include "voltguard/agent/policy.hpp"
#include "voltguard/env/scmdp.hpp"
#include "voltguard/safety/projection.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace voltguard::agent {

struct SacConfig {
    double policy_lr = 3e-4;
    double critic_lr = 1e-3;
    double alpha_lr = 3e-4;
    double tau = 0.005;
    int batch_size = 64;
    std::size_t capacity = 100000;
    std::optional<double> target_entropy;  ///< default -n_d
    double initial_alpha = 0.1;
    int episodes = 3000;
    int eval_every = 100;
    int warmup = 200;  ///< episodes acted uniformly at random before updates start
    int updates_per_episode = 1;
    int hidden = 64;
    int layers = 2;
    std::uint64_t seed = 1;

    void validate() const;
    static SacConfig paper_scale();
};

struct Transition {
    env::Observation observation;
    env::ControlAction executed;
    env::ControlAction proposed;
    double reward = 0.0;
    bool violated = false;
};

/// Fixed-capacity ring buffer of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(Transition t);
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] const Transition& at(std::size_t i) const { return data_.at(i); }
    /// Uniform draw with replacement.
    [[nodiscard]] std::vector<std::size_t> sample(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

struct SacLosses {
    double critic = 0.0;
    double policy = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;  ///< batch estimate of -E[log pi]
};

/// Twin critics with Polyak-averaged targets, a squashed-Gaussian actor and a learned temperature.
/// Episodes are one step long, so the critic target is the immediate reward.
class SacLearner {
public:
    SacLearner(int obs_size, int action_dim, const SacConfig& config, margin::Standardizer standardizer);

    SacLosses update(const ReplayBuffer& buffer, Rng& rng);

    [[nodiscard]] const PolicyNet& policy() const { return policy_; }
    [[nodiscard]] const nn::Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
    [[nodiscard]] const nn::Mlp& target_critic(int i) const { return i == 0 ? q1_target_ : q2_target_; }
    [[nodiscard]] double alpha() const;
    [[nodiscard]] double target_entropy() const { return target_entropy_; }
    [[nodiscard]] nlohmann::json checkpoint() const;

private:
    SacConfig config_;
    double target_entropy_;
    PolicyNet policy_;
    nn::Mlp q1_, q2_, q1_target_, q2_target_;
    nn::AdamState policy_adam_, q1_adam_, q2_adam_;
    double log_alpha_;
    double alpha_m_ = 0.0, alpha_v_ = 0.0;
    long alpha_step_ = 0;
};

/// Safety layer in the loop plus an optional hook to refresh the estimator while training.
struct SafetyHook {
    const safety::MarginModel* model = nullptr;
    safety::SafetyConfig config;
    int refresh_every = 0;
    std::function<void(int episode, const ReplayBuffer& buffer)> refresh;
};

struct TrainHooks {
    std::optional<SafetyHook> safety;
    /// Replaces env.step, e.g. for synthetic rewards.
    std::function<env::EpisodeResult(const grid::ScenarioConfig&, const env::ControlAction&)> step;
    /// Where the diagnostic checkpoint goes when a loss turns non-finite.
    std::filesystem::path checkpoint_on_failure;
};

struct CurvePoint {
    int episode = 0;
    double avg_reward = 0.0;
    int violations = 0;  ///< within the window ending at `episode`
};

struct TrainResult {
    PolicyNet policy;
    std::vector<CurvePoint> curve;
    std::vector<SacLosses> losses;  ///< one entry per evaluation window (last update in the window)
    std::vector<Transition> transitions;
    int total_violations = 0;
};

/// Scenario stream: scenario i is sampled from child_seed(config.seed, i).
TrainResult train(const env::ScmdpEnv& env, const env::SamplingRanges& ranges, const SacConfig& config,
                  const TrainHooks& hooks = {});

/// CSV `episode,avg_reward,violations`.
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

/// Standardizer fit on observations of `count` scenarios drawn from a dedicated stream.
margin::Standardizer observation_standardizer(const std::string& system, const env::SamplingRanges& ranges,
                                              std::uint64_t seed, std::size_t count = 256);

}  // namespace voltguard::agent

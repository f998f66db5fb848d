#pragma once

#include "voltguard/margin/estimator.hpp"
#include "voltguard/nn/mlp.hpp"
#include "voltguard/util/random.hpp"

#include <json.hpp>

namespace voltguard::agent {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// (tanh(u) + 1) / 2, mapping the real line onto (0, 1).
Eigen::VectorXd squash(const Eigen::VectorXd& u);

/// log(1 - tanh(u)^2) without cancellation for large |u|.
double log1m_tanh2(double u);

/// Log-density in action space of a = squash(mean + exp(log_std) * eps).
double squashed_log_prob(const Eigen::VectorXd& log_std, const Eigen::VectorXd& eps, const Eigen::VectorXd& u);

/// Squashed-Gaussian policy over [0, 1]^n_d. The network emits [mean; log_std].
struct PolicyNet {
    margin::Standardizer standardizer;
    nn::Mlp net;
    int action_dim = 0;

    static PolicyNet create(int obs_size, int action_dim, int hidden, int layers, std::uint64_t seed,
                            margin::Standardizer standardizer = {});

    [[nodiscard]] int observation_size() const { return net.input_size(); }

    struct Head {
        Eigen::VectorXd mean;
        Eigen::VectorXd log_std;  ///< clamped to [kLogStdMin, kLogStdMax]
    };
    [[nodiscard]] Head head(const Eigen::VectorXd& observation) const;
};

struct PolicySample {
    Eigen::VectorXd action;
    Eigen::VectorXd u;
    Eigen::VectorXd eps;
    double log_prob = 0.0;
};

PolicySample sample_policy(const PolicyNet& policy, const Eigen::VectorXd& observation, Rng& rng);

/// Stochastic mode samples the squashed Gaussian; deterministic mode returns the squashed mean.
Eigen::VectorXd propose(const PolicyNet& policy, const Eigen::VectorXd& observation, bool stochastic, Rng* rng = nullptr);

nlohmann::json to_json(const PolicyNet& policy);
PolicyNet policy_from_json(const nlohmann::json& j);

}  // namespace voltguard::agent

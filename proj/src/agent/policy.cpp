#include "voltguard/agent/policy.hpp"

#include "voltguard/error.hpp"

#include <cmath>
#include <numbers>

namespace voltguard::agent {

Eigen::VectorXd squash(const Eigen::VectorXd& u) {
    return 0.5 * (u.array().tanh() + 1.0).matrix();
}

double log1m_tanh2(double u) {
    const double x = -2.0 * u;
    const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    return 2.0 * (std::numbers::ln2 - u - softplus);
}

double squashed_log_prob(const Eigen::VectorXd& log_std, const Eigen::VectorXd& eps, const Eigen::VectorXd& u) {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        // da/du = (1 - tanh^2 u) / 2
        lp += -0.5 * eps(i) * eps(i) - log_std(i) - half_log_2pi - (log1m_tanh2(u(i)) - std::numbers::ln2);
    }
    return lp;
}

PolicyNet PolicyNet::create(int obs_size, int action_dim, int hidden, int layers, std::uint64_t seed,
                            margin::Standardizer standardizer) {
    if (obs_size <= 0 || action_dim <= 0 || hidden <= 0 || layers < 1) throw ConfigError("invalid policy shape");
    PolicyNet p;
    p.action_dim = action_dim;
    p.standardizer = standardizer.mean.size() == 0 ? margin::Standardizer::identity(obs_size) : std::move(standardizer);
    if (p.standardizer.mean.size() != obs_size) throw DimensionError("standardizer length differs from observation size");
    Rng rng(mix_seed(seed));
    const std::vector<int> hid(static_cast<std::size_t>(layers), hidden);
    p.net = nn::Mlp::initialize(nn::layer_stack(obs_size, hid, 2 * action_dim, nn::Activation::Relu), rng);
    return p;
}

PolicyNet::Head PolicyNet::head(const Eigen::VectorXd& observation) const {
    if (observation.size() != observation_size()) throw DimensionError("observation length differs from policy input");
    const Eigen::VectorXd out = nn::forward(net, standardizer.apply(observation));
    return {out.head(action_dim), out.tail(action_dim).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax)};
}

PolicySample sample_policy(const PolicyNet& policy, const Eigen::VectorXd& observation, Rng& rng) {
    const auto h = policy.head(observation);
    PolicySample s;
    s.eps.resize(policy.action_dim);
    for (int i = 0; i < policy.action_dim; ++i) s.eps(i) = standard_normal(rng);
    s.u = h.mean + h.log_std.array().exp().matrix().cwiseProduct(s.eps);
    s.action = squash(s.u);
    s.log_prob = squashed_log_prob(h.log_std, s.eps, s.u);
    return s;
}

Eigen::VectorXd propose(const PolicyNet& policy, const Eigen::VectorXd& observation, bool stochastic, Rng* rng) {
    if (!stochastic) return squash(policy.head(observation).mean);
    if (rng == nullptr) throw ConfigError("stochastic proposals need a random generator");
    return sample_policy(policy, observation, *rng).action;
}

nlohmann::json to_json(const PolicyNet& policy) {
    const auto& s = policy.standardizer;
    return {{"schema_version", 1},
            {"action_dim", policy.action_dim},
            {"standardizer_mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"standardizer_scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())},
            {"network", nn::to_json(policy.net)}};
}

PolicyNet policy_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1) throw ConfigError("unsupported policy schema_version");
        PolicyNet p;
        p.action_dim = j.at("action_dim").get<int>();
        p.net = nn::mlp_from_json(j.at("network"));
        const auto mean = j.at("standardizer_mean").get<std::vector<double>>();
        const auto scale = j.at("standardizer_scale").get<std::vector<double>>();
        if (p.net.output_size() != 2 * p.action_dim || mean.size() != scale.size() ||
            static_cast<int>(mean.size()) != p.net.input_size()) {
            throw DimensionError("policy checkpoint shapes are inconsistent");
        }
        p.standardizer.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        p.standardizer.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed policy checkpoint: ") + e.what());
    }
}

}  // namespace voltguard::agent

#include "voltguard/agent/sac.hpp"

#include "voltguard/error.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

namespace voltguard::agent {

void SacConfig::validate() const {
    if (!(policy_lr > 0.0 && critic_lr > 0.0 && alpha_lr > 0.0)) throw ConfigError("SAC learning rates must be positive");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("SAC smoothing coefficient must lie in (0, 1)");
    if (batch_size <= 0 || static_cast<std::size_t>(batch_size) > capacity) {
        throw ConfigError("SAC batch size must be positive and at most the replay capacity");
    }
    if (!(initial_alpha > 0.0)) throw ConfigError("initial temperature must be positive");
    if (episodes < 0 || eval_every <= 0 || warmup < 0 || updates_per_episode < 0) {
        throw ConfigError("invalid SAC episode schedule");
    }
    if (hidden <= 0 || layers < 1) throw ConfigError("invalid SAC network shape");
}

SacConfig SacConfig::paper_scale() {
    SacConfig c;
    c.hidden = 256;
    c.layers = 3;
    c.policy_lr = 1e-4;
    c.critic_lr = 1e-4;
    return c;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (data_.empty()) throw ConfigError("cannot sample an empty replay buffer");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = std::min(data_.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(data_.size())));
    return idx;
}

namespace {

nn::Mlp make_critic(int in, const SacConfig& c, Rng& rng) {
    const std::vector<int> hid(static_cast<std::size_t>(c.layers), c.hidden);
    return nn::Mlp::initialize(nn::layer_stack(in, hid, 1, nn::Activation::Relu), rng);
}

void polyak(nn::Mlp& target, const nn::Mlp& source, double tau) {
    for (std::size_t i = 0; i < target.depth(); ++i) {
        target.layer(i).w = (1.0 - tau) * target.layer(i).w + tau * source.layer(i).w;
        target.layer(i).b = (1.0 - tau) * target.layer(i).b + tau * source.layer(i).b;
    }
    target.bump_version();
}

}  // namespace

SacLearner::SacLearner(int obs_size, int action_dim, const SacConfig& config, margin::Standardizer standardizer)
    : config_(config), target_entropy_(config.target_entropy.value_or(-static_cast<double>(action_dim))),
      log_alpha_(std::log(config.initial_alpha)) {
    config_.validate();
    policy_ = PolicyNet::create(obs_size, action_dim, config.hidden, config.layers, child_seed(config.seed, 101),
                                std::move(standardizer));
    Rng rng(child_seed(config.seed, 102));
    q1_ = make_critic(obs_size + action_dim, config, rng);
    q2_ = make_critic(obs_size + action_dim, config, rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
}

double SacLearner::alpha() const { return std::exp(log_alpha_); }

SacLosses SacLearner::update(const ReplayBuffer& buffer, Rng& rng) {
    const auto idx = buffer.sample(static_cast<std::size_t>(config_.batch_size), rng);
    const auto n = static_cast<Eigen::Index>(idx.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    const int n_obs = policy_.observation_size();
    const int n_d = policy_.action_dim;
    const auto& st = policy_.standardizer;

    Eigen::MatrixXd x(n_obs, n), sa(n_obs + n_d, n);
    Eigen::RowVectorXd r(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& t = buffer.at(idx[static_cast<std::size_t>(j)]);
        x.col(j) = st.apply(t.observation.values);
        sa.col(j) << x.col(j), t.executed.shed;
        r(j) = t.reward;
    }

    SacLosses losses;
    // critics regress the immediate reward
    for (int c = 0; c < 2; ++c) {
        nn::Mlp& q = c == 0 ? q1_ : q2_;
        nn::ForwardTape tape;
        const Eigen::MatrixXd pred = nn::forward_batch(q, sa, &tape);
        const Eigen::RowVectorXd err = pred.row(0) - r;
        losses.critic += 0.5 * err.squaredNorm() * inv_n;
        const auto grads = nn::grad_params(q, tape, 2.0 * inv_n * err);
        nn::adam_update(q, grads, {config_.critic_lr}, c == 0 ? q1_adam_ : q2_adam_);
    }

    // actor through the reparameterised squashed Gaussian
    nn::ForwardTape ptape;
    const Eigen::MatrixXd out = nn::forward_batch(policy_.net, x, &ptape);
    const Eigen::MatrixXd raw_ls = out.bottomRows(n_d);
    const Eigen::MatrixXd ls = raw_ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    Eigen::MatrixXd eps(n_d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (int i = 0; i < n_d; ++i) eps(i, j) = standard_normal(rng);
    }
    const Eigen::MatrixXd sigma = ls.array().exp();
    const Eigen::MatrixXd u = out.topRows(n_d) + sigma.cwiseProduct(eps);
    const Eigen::MatrixXd th = u.array().tanh();
    const Eigen::MatrixXd a = 0.5 * (th.array() + 1.0);
    Eigen::RowVectorXd logp(n);
    for (Eigen::Index j = 0; j < n; ++j) logp(j) = squashed_log_prob(ls.col(j), eps.col(j), u.col(j));

    Eigen::MatrixXd qin(n_obs + n_d, n);
    qin << x, a;
    nn::ForwardTape t1, t2;
    const Eigen::MatrixXd v1 = nn::forward_batch(q1_, qin, &t1);
    const Eigen::MatrixXd v2 = nn::forward_batch(q2_, qin, &t2);
    Eigen::MatrixXd c1 = Eigen::MatrixXd::Zero(1, n), c2 = Eigen::MatrixXd::Zero(1, n);
    Eigen::RowVectorXd qmin(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (v1(0, j) <= v2(0, j)) {
            c1(0, j) = 1.0;
            qmin(j) = v1(0, j);
        } else {
            c2(0, j) = 1.0;
            qmin(j) = v2(0, j);
        }
    }
    const Eigen::MatrixXd qa = nn::grad_input(q1_, t1, c1).bottomRows(n_d) + nn::grad_input(q2_, t2, c2).bottomRows(n_d);

    const double alpha = std::exp(log_alpha_);
    const Eigen::ArrayXXd dadu = 0.5 * (1.0 - th.array().square());
    const Eigen::ArrayXXd se = sigma.array() * eps.array();
    Eigen::MatrixXd cot(2 * n_d, n);
    cot.topRows(n_d) = inv_n * (alpha * 2.0 * th.array() - qa.array() * dadu).matrix();
    Eigen::ArrayXXd dls = alpha * (-1.0 + 2.0 * th.array() * se) - qa.array() * dadu * se;
    dls = (raw_ls.array() >= kLogStdMin && raw_ls.array() <= kLogStdMax).select(dls, 0.0);
    cot.bottomRows(n_d) = inv_n * dls.matrix();
    const auto pgrads = nn::grad_params(policy_.net, ptape, cot);

    losses.policy = (alpha * logp - qmin).mean();
    losses.entropy = -logp.mean();
    if (!std::isfinite(losses.critic) || !std::isfinite(losses.policy)) throw NumericalError("non-finite SAC loss");
    nn::adam_update(policy_.net, pgrads, {config_.policy_lr}, policy_adam_);

    // temperature drives the entropy toward its target
    const double g_alpha = -(logp.mean() + target_entropy_);
    losses.alpha = -log_alpha_ * (logp.mean() + target_entropy_);
    ++alpha_step_;
    alpha_m_ = 0.9 * alpha_m_ + 0.1 * g_alpha;
    alpha_v_ = 0.999 * alpha_v_ + 0.001 * g_alpha * g_alpha;
    const double mh = alpha_m_ / (1.0 - std::pow(0.9, static_cast<double>(alpha_step_)));
    const double vh = alpha_v_ / (1.0 - std::pow(0.999, static_cast<double>(alpha_step_)));
    log_alpha_ = std::clamp(log_alpha_ - config_.alpha_lr * mh / (std::sqrt(vh) + 1e-8), -20.0, 5.0);

    polyak(q1_target_, q1_, config_.tau);
    polyak(q2_target_, q2_, config_.tau);
    return losses;
}

nlohmann::json SacLearner::checkpoint() const {
    return {{"policy", to_json(policy_)},
            {"critic_1", nn::to_json(q1_)},
            {"critic_2", nn::to_json(q2_)},
            {"log_alpha", log_alpha_}};
}

margin::Standardizer observation_standardizer(const std::string& system, const env::SamplingRanges& ranges,
                                              std::uint64_t seed, std::size_t count) {
    std::vector<Eigen::VectorXd> obs;
    obs.reserve(count);
    for (const auto& s : env::sample_scenarios(system, seed, count, ranges)) obs.push_back(env::observe(s).values);
    return margin::Standardizer::fit(obs);
}

TrainResult train(const env::ScmdpEnv& env, const env::SamplingRanges& ranges, const SacConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    ranges.validate();
    const int n_obs = env.observation_size();
    const int n_d = env.action_size();
    if (hooks.safety && hooks.safety->model == nullptr) throw ConfigError("safety hook needs a margin model");
    if (hooks.safety && hooks.safety->model->action_dim() != n_d) throw DimensionError("safety model action size differs");

    SacLearner learner(n_obs, n_d, config, observation_standardizer(env.system(), ranges, child_seed(config.seed, 7)));
    ReplayBuffer buffer(config.capacity);
    Rng act_rng(child_seed(config.seed, 11));
    Rng update_rng(child_seed(config.seed, 12));
    const std::uint64_t scenario_root = child_seed(config.seed, 13);

    TrainResult result;
    double window_reward = 0.0;
    int window_violations = 0;
    int window_count = 0;
    SacLosses last;
    for (int ep = 1; ep <= config.episodes; ++ep) {
        const auto scenario = env::sample_scenario(env.system(), child_seed(scenario_root, static_cast<std::uint64_t>(ep)), ranges);
        const auto obs = env.observe(scenario);
        Eigen::VectorXd proposed(n_d);
        if (ep <= config.warmup) {
            for (int i = 0; i < n_d; ++i) proposed(i) = uniform01(act_rng);
        } else {
            proposed = propose(learner.policy(), obs.values, true, &act_rng);
        }
        Eigen::VectorXd executed = proposed;
        if (hooks.safety) executed = safety::correct_action(*hooks.safety->model, obs.values, proposed, hooks.safety->config).action;

        const env::ControlAction exec_action(executed);
        const auto res = hooks.step ? hooks.step(scenario, exec_action) : env.step(scenario, exec_action);
        Transition t{obs, exec_action, env::ControlAction(proposed), res.reward, res.violated};
        result.transitions.push_back(t);
        buffer.push(std::move(t));
        window_reward += res.reward;
        window_violations += res.violated ? 1 : 0;
        result.total_violations += res.violated ? 1 : 0;
        ++window_count;

        if (ep > config.warmup && buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
            for (int u = 0; u < config.updates_per_episode; ++u) {
                try {
                    last = learner.update(buffer, update_rng);
                } catch (const NumericalError& e) {
                    if (!hooks.checkpoint_on_failure.empty()) {
                        std::ofstream f(hooks.checkpoint_on_failure);
                        f << learner.checkpoint().dump(2) << '\n';
                    }
                    throw NumericalError(std::string("training aborted at episode ") + std::to_string(ep) + ": " + e.what());
                }
            }
        }
        if (hooks.safety && hooks.safety->refresh && hooks.safety->refresh_every > 0 &&
            ep % hooks.safety->refresh_every == 0) {
            hooks.safety->refresh(ep, buffer);
        }
        if (ep % config.eval_every == 0 || ep == config.episodes) {
            result.curve.push_back({ep, window_reward / window_count, window_violations});
            result.losses.push_back(last);
            window_reward = 0.0;
            window_violations = 0;
            window_count = 0;
        }
    }
    result.policy = learner.policy();
    return result;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
    out << "episode,avg_reward,violations\n";
    const auto old = out.precision(10);
    for (const auto& c : curve) out << c.episode << ',' << c.avg_reward << ',' << c.violations << '\n';
    out.precision(old);
}

}  // namespace voltguard::agent

#include "voltguard/margin/estimator.hpp"

#include "voltguard/error.hpp"
#include "voltguard/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace voltguard::margin {

Standardizer Standardizer::identity(int n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

Standardizer Standardizer::fit(const std::vector<Eigen::VectorXd>& observations) {
    if (observations.empty()) throw ConfigError("cannot fit a standardizer on no observations");
    const Eigen::Index n = observations.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& o : observations) {
        if (o.size() != n) throw DimensionError("observation lengths differ");
        mean += o;
    }
    mean /= static_cast<double>(observations.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
    for (const auto& o : observations) var += (o - mean).cwiseAbs2();
    var /= static_cast<double>(observations.size());
    Eigen::VectorXd scale = var.cwiseSqrt();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(scale(i) > 1e-8)) scale(i) = 1.0;
    }
    return {mean, scale};
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
    if (mean.size() == 0) return x;
    return (x - mean).cwiseQuotient(scale);
}

DuelingEstimator::DuelingEstimator(int obs_size, int action_size, const EstimatorShape& shape, std::uint64_t seed,
                                   Standardizer standardizer)
    : obs_size_(obs_size), action_size_(action_size), standardizer_(std::move(standardizer)) {
    if (obs_size <= 0 || action_size <= 0) throw DimensionError("estimator sizes must be positive");
    if (shape.hidden <= 0 || shape.encoder_layers < 1 || shape.advantage_layers < 1) {
        throw ConfigError("invalid estimator shape");
    }
    if (standardizer_.mean.size() == 0) standardizer_ = Standardizer::identity(obs_size);
    if (standardizer_.mean.size() != obs_size) throw DimensionError("standardizer length differs from observation size");

    Rng rng(mix_seed(seed));
    const std::vector<int> enc_hidden(static_cast<std::size_t>(shape.encoder_layers - 1), shape.hidden);
    const auto enc_specs = nn::layer_stack(obs_size, enc_hidden, shape.hidden, nn::Activation::Relu, nn::Activation::Relu);
    encoder_ = nn::Mlp::initialize(enc_specs, rng);
    const std::vector<int> none;
    value_ = nn::Mlp::initialize(nn::layer_stack(shape.hidden, none, 1, nn::Activation::Relu), rng);
    const std::vector<int> adv_hidden(static_cast<std::size_t>(shape.advantage_layers - 1), shape.hidden);
    advantage_ = nn::Mlp::initialize(nn::layer_stack(shape.hidden + action_size, adv_hidden, 1, nn::Activation::Relu), rng);
    a_zero_ = Eigen::VectorXd::Zero(action_size);
}

void DuelingEstimator::set_a_zero(Eigen::VectorXd a) {
    if (a.size() != action_size_) throw DimensionError("a_zero length differs from action size");
    a_zero_ = std::move(a);
}

void DuelingEstimator::check(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    if (obs.size() != obs_size_) throw DimensionError("observation length differs from estimator input");
    if (action.size() != action_size_) throw DimensionError("action length differs from estimator input");
}

Eigen::VectorXd DuelingEstimator::encode(const Eigen::VectorXd& obs) const {
    return nn::forward(encoder_, standardizer_.apply(obs));
}

Eigen::VectorXd DuelingEstimator::joint(const Eigen::VectorXd& z, const Eigen::VectorXd& action) const {
    Eigen::VectorXd x(z.size() + action.size());
    x << z, action;
    return x;
}

double DuelingEstimator::state_value(const Eigen::VectorXd& obs) const {
    if (obs.size() != obs_size_) throw DimensionError("observation length differs from estimator input");
    return nn::forward(value_, encode(obs))(0);
}

double DuelingEstimator::advantage(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    check(obs, action);
    return nn::forward(advantage_, joint(encode(obs), action))(0);
}

double DuelingEstimator::estimate(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    check(obs, action);
    const Eigen::VectorXd z = encode(obs);
    const double c1 = nn::forward(value_, z)(0);
    const double c2 = nn::forward(advantage_, joint(z, action))(0);
    const double c2_zero = nn::forward(advantage_, joint(z, a_zero_))(0);
    return c1 - (c2 - c2_zero);
}

double DuelingEstimator::estimate_min(const Eigen::VectorXd& obs, std::span<const Eigen::VectorXd> actions) const {
    if (actions.empty()) throw ConfigError("discrete action set is empty");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : actions) best = std::min(best, estimate(obs, a));
    return best;
}

Eigen::VectorXd DuelingEstimator::action_gradient(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    check(obs, action);
    const Eigen::VectorXd z = encode(obs);
    nn::ForwardTape tape;
    nn::forward(advantage_, joint(z, action), &tape);
    const Eigen::VectorXd g = nn::grad_input(advantage_, tape, Eigen::MatrixXd::Ones(1, 1)).col(0);
    return -g.tail(action_size_);
}

Eigen::VectorXd DuelingEstimator::observation_gradient(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    check(obs, action);
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
    nn::ForwardTape enc_tape, val_tape, adv_tape, zero_tape;
    const Eigen::VectorXd z = nn::forward(encoder_, standardizer_.apply(obs), &enc_tape);
    nn::forward(value_, z, &val_tape);
    nn::forward(advantage_, joint(z, action), &adv_tape);
    nn::forward(advantage_, joint(z, a_zero_), &zero_tape);
    const auto h = z.size();
    Eigen::MatrixXd dz = nn::grad_input(value_, val_tape, one);
    dz -= nn::grad_input(advantage_, adv_tape, one).topRows(h);
    dz += nn::grad_input(advantage_, zero_tape, one).topRows(h);
    const Eigen::VectorXd dx = nn::grad_input(encoder_, enc_tape, dz).col(0);
    return dx.cwiseQuotient(standardizer_.scale);
}

double DuelingEstimator::action_lipschitz_bound() const {
    // only the action columns of the first layer see a change in a
    double bound = nn::spectral_norm(advantage_.layer(0).w.rightCols(action_size_));
    for (std::size_t i = 1; i < advantage_.depth(); ++i) bound *= nn::spectral_norm(advantage_.layer(i).w);
    return bound;
}

Eigen::VectorXd DuelingEstimator::estimate_batch(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const {
    if (obs.rows() != obs_size_ || actions.rows() != action_size_ || obs.cols() != actions.cols()) {
        throw DimensionError("batch shapes do not match estimator");
    }
    const Eigen::Index n = obs.cols();
    Eigen::MatrixXd x = (obs.colwise() - standardizer_.mean).array().colwise() / standardizer_.scale.array();
    const Eigen::MatrixXd z = nn::forward_batch(encoder_, x);
    Eigen::MatrixXd ja(z.rows() + action_size_, n), j0(z.rows() + action_size_, n);
    ja << z, actions;
    j0 << z, a_zero_.replicate(1, n);
    const Eigen::MatrixXd c1 = nn::forward_batch(value_, z);
    const Eigen::MatrixXd c2 = nn::forward_batch(advantage_, ja);
    const Eigen::MatrixXd c0 = nn::forward_batch(advantage_, j0);
    return (c1 - (c2 - c0)).row(0).transpose();
}

double DuelingEstimator::train_step(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                                    const Eigen::VectorXd& targets, const nn::AdamHyper& hyper) {
    if (obs.rows() != obs_size_ || actions.rows() != action_size_ || obs.cols() != actions.cols() ||
        targets.size() != obs.cols() || obs.cols() == 0) {
        throw DimensionError("training batch shapes do not match estimator");
    }
    const Eigen::Index n = obs.cols();
    const auto h = static_cast<Eigen::Index>(encoder_.output_size());
    Eigen::MatrixXd x = (obs.colwise() - standardizer_.mean).array().colwise() / standardizer_.scale.array();
    nn::ForwardTape enc_tape, val_tape, adv_tape, zero_tape;
    const Eigen::MatrixXd z = nn::forward_batch(encoder_, x, &enc_tape);
    Eigen::MatrixXd ja(h + action_size_, n), j0(h + action_size_, n);
    ja << z, actions;
    j0 << z, a_zero_.replicate(1, n);
    const Eigen::MatrixXd c1 = nn::forward_batch(value_, z, &val_tape);
    const Eigen::MatrixXd c2 = nn::forward_batch(advantage_, ja, &adv_tape);
    const Eigen::MatrixXd c0 = nn::forward_batch(advantage_, j0, &zero_tape);
    const Eigen::RowVectorXd err = (c1 - (c2 - c0)).row(0) - targets.transpose();
    const double loss = err.squaredNorm() / static_cast<double>(n);

    const Eigen::MatrixXd g = (2.0 / static_cast<double>(n)) * err;
    auto gv = nn::Gradients::zeros_like(value_);
    auto ga = nn::Gradients::zeros_like(advantage_);
    auto ge = nn::Gradients::zeros_like(encoder_);
    Eigen::MatrixXd dz = nn::backward(value_, val_tape, g, &gv);
    dz += nn::backward(advantage_, adv_tape, -g, &ga).topRows(h);
    dz += nn::backward(advantage_, zero_tape, g, &ga).topRows(h);
    nn::backward(encoder_, enc_tape, dz, &ge);

    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss");
    nn::adam_update(value_, gv, hyper, adam_value_);
    nn::adam_update(advantage_, ga, hyper, adam_advantage_);
    nn::adam_update(encoder_, ge, hyper, adam_encoder_);
    return loss;
}

nlohmann::json to_json(const DuelingEstimator& est) {
    const auto& s = est.standardizer();
    return {{"schema_version", 1},
            {"observation_size", est.observation_size()},
            {"action_size", est.action_size()},
            {"standardizer_mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"standardizer_scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())},
            {"a_zero", std::vector<double>(est.a_zero().data(), est.a_zero().data() + est.a_zero().size())},
            {"encoder", nn::to_json(est.encoder())},
            {"value_head", nn::to_json(est.value_head())},
            {"advantage_head", nn::to_json(est.advantage_head())}};
}

DuelingEstimator estimator_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1) throw ConfigError("unsupported estimator schema_version");
        const int n_obs = j.at("observation_size").get<int>();
        const int n_act = j.at("action_size").get<int>();
        auto vec = [&](const char* key) {
            const auto v = j.at(key).get<std::vector<double>>();
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        auto encoder = nn::mlp_from_json(j.at("encoder"));
        auto value = nn::mlp_from_json(j.at("value_head"));
        auto advantage = nn::mlp_from_json(j.at("advantage_head"));
        if (encoder.input_size() != n_obs || value.input_size() != encoder.output_size() || value.output_size() != 1 ||
            advantage.input_size() != encoder.output_size() + n_act || advantage.output_size() != 1) {
            throw DimensionError("estimator checkpoint heads are inconsistent");
        }
        const int hidden = encoder.output_size();
        DuelingEstimator est(n_obs, n_act, {hidden, 1, 1}, 0, Standardizer{vec("standardizer_mean"), vec("standardizer_scale")});
        est.encoder() = std::move(encoder);
        est.value_head() = std::move(value);
        est.advantage_head() = std::move(advantage);
        est.set_a_zero(vec("a_zero"));
        return est;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed estimator checkpoint: ") + e.what());
    }
}

double uncertainty_from_margin(double estimated_margin) {
    return 1.0 / std::max(std::abs(estimated_margin), 1e-6);
}

double uncertainty(const DuelingEstimator& est, const MarginSample& sample) {
    return uncertainty_from_margin(est.estimate(sample.observation.values, sample.action.shed));
}

void pack(const std::vector<LabeledSample>& samples, Eigen::MatrixXd& obs, Eigen::MatrixXd& actions,
          Eigen::VectorXd& targets) {
    if (samples.empty()) throw ConfigError("empty sample set");
    const auto n = static_cast<Eigen::Index>(samples.size());
    obs.resize(samples.front().sample.observation.size(), n);
    actions.resize(samples.front().sample.action.size(), n);
    targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (s.sample.observation.size() != obs.rows() || s.sample.action.size() != actions.rows()) {
            throw DimensionError("sample dimensions differ within the set");
        }
        obs.col(i) = s.sample.observation.values;
        actions.col(i) = s.sample.action.shed;
        targets(i) = s.d;
    }
}

void fit(DuelingEstimator& est, const std::vector<LabeledSample>& samples, const TrainOptions& options) {
    if (options.batch_size <= 0 || options.steps < 0) throw ConfigError("invalid training options");
    Eigen::MatrixXd obs, actions;
    Eigen::VectorXd targets;
    pack(samples, obs, actions, targets);
    const Eigen::Index n = obs.cols();
    const Eigen::Index batch = std::min<Eigen::Index>(options.batch_size, n);
    Rng rng(mix_seed(options.seed));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::size_t cursor = order.size();
    Eigen::MatrixXd bo(obs.rows(), batch), ba(actions.rows(), batch);
    Eigen::VectorXd bt(batch);
    for (int step = 0; step < options.steps; ++step) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size() - 1; i > 0; --i) {
                    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
                    std::swap(order[i], order[std::min(j, i)]);
                }
                cursor = 0;
            }
            const Eigen::Index idx = order[cursor++];
            bo.col(b) = obs.col(idx);
            ba.col(b) = actions.col(idx);
            bt(b) = targets(idx);
        }
        est.train_step(bo, ba, bt, options.adam);
    }
}

DuelingEstimator full_train(const std::vector<LabeledSample>& samples, const EstimatorShape& shape,
                            const TrainOptions& options) {
    if (samples.empty()) throw ConfigError("full_train needs at least one sample");
    std::vector<Eigen::VectorXd> obs;
    obs.reserve(samples.size());
    for (const auto& s : samples) obs.push_back(s.sample.observation.values);
    DuelingEstimator est(static_cast<int>(samples.front().sample.observation.size()),
                         static_cast<int>(samples.front().sample.action.size()), shape, options.seed,
                         Standardizer::fit(obs));
    fit(est, samples, options);
    return est;
}

EstimatorMetrics evaluate_estimator(const DuelingEstimator& est, const std::vector<LabeledSample>& test,
                                    double class_threshold) {
    if (test.empty()) throw ConfigError("empty test set");
    Eigen::MatrixXd obs, actions;
    Eigen::VectorXd targets;
    pack(test, obs, actions, targets);
    const Eigen::VectorXd pred = est.estimate_batch(obs, actions);
    std::size_t correct = 0, unstable = 0, unstable_hit = 0;
    double abs_err = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const bool truth = targets(i) > class_threshold;
        const bool guess = pred(i) > class_threshold;
        correct += truth == guess ? 1U : 0U;
        if (!truth) {
            ++unstable;
            unstable_hit += guess ? 0U : 1U;
        }
        abs_err += std::abs(pred(i) - targets(i));
    }
    EstimatorMetrics m;
    m.n = test.size();
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
    m.specificity = unstable == 0 ? 1.0 : static_cast<double>(unstable_hit) / static_cast<double>(unstable);
    m.mae = abs_err / static_cast<double>(m.n);
    return m;
}

}  // namespace voltguard::margin

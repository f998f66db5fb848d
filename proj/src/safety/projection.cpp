#include "voltguard/safety/projection.hpp"

#include "voltguard/error.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

namespace voltguard::safety {

std::string_view to_string(Fallback f) {
    return f == Fallback::UniformEscalation ? "uniform-escalation" : "all-ones";
}

Fallback fallback_from_string(std::string_view name) {
    if (name == "uniform-escalation") return Fallback::UniformEscalation;
    if (name == "all-ones") return Fallback::AllOnes;
    throw ConfigError("unknown fallback '" + std::string(name) + "'");
}

void SafetyConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("safety epsilon must be positive");
    if (max_iterations < 1) throw ConfigError("safety iteration budget must be at least 1");
    if (!(lambda_min > 0.0)) throw ConfigError("lambda_min must be positive");
    if (!(box_lo < box_hi)) throw ConfigError("action box must be non-empty");
    if (!(escalation_step > 0.0 && escalation_step <= 1.0)) throw ConfigError("escalation step must lie in (0, 1]");
}

namespace {

class BoundEstimator final : public BoundMargin {
public:
    BoundEstimator(const margin::DuelingEstimator& est, const Eigen::VectorXd& obs) : est_(&est) {
        const Eigen::VectorXd z = nn::forward(est.encoder(), est.standardizer().apply(obs));
        joint_.resize(z.size() + est.action_size());
        joint_.head(z.size()) = z;
        const double c1 = nn::forward(est.value_head(), z)(0);
        joint_.tail(est.action_size()) = est.a_zero();
        const double c0 = nn::forward(est.advantage_head(), joint_)(0);
        c1_ = c1;
        c0_ = c0;
    }

    double margin(const Eigen::VectorXd& a) const override {
        if (a.size() != est_->action_size()) throw DimensionError("action length differs from estimator input");
        Eigen::VectorXd x = joint_;
        x.tail(a.size()) = a;
        return c1_ - (nn::forward(est_->advantage_head(), x)(0) - c0_);
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& a) const override {
        if (a.size() != est_->action_size()) throw DimensionError("action length differs from estimator input");
        Eigen::VectorXd x = joint_;
        x.tail(a.size()) = a;
        nn::ForwardTape tape;
        nn::forward(est_->advantage_head(), x, &tape);
        return -nn::grad_input(est_->advantage_head(), tape, Eigen::MatrixXd::Ones(1, 1)).col(0).tail(a.size());
    }

private:
    const margin::DuelingEstimator* est_;
    Eigen::VectorXd joint_;
    double c1_ = 0.0;
    double c0_ = 0.0;
};

class BoundOracle final : public BoundMargin {
public:
    BoundOracle(const margin::DasmOracle& oracle, const grid::ScenarioConfig& scenario)
        : oracle_(&oracle), scenario_(&scenario), grad_(oracle.action_gradient(scenario)) {}
    double margin(const Eigen::VectorXd& a) const override { return oracle_->margin(*scenario_, a); }
    Eigen::VectorXd gradient(const Eigen::VectorXd&) const override { return grad_; }

private:
    const margin::DasmOracle* oracle_;
    const grid::ScenarioConfig* scenario_;
    Eigen::VectorXd grad_;
};

}  // namespace

EstimatorMargin::EstimatorMargin(const margin::DuelingEstimator& est)
    : est_(&est), lipschitz_(est.action_lipschitz_bound()) {}

std::unique_ptr<BoundMargin> EstimatorMargin::bind(const Eigen::VectorXd& observation) const {
    if (observation.size() != est_->observation_size()) throw DimensionError("observation length differs from estimator input");
    return std::make_unique<BoundEstimator>(*est_, observation);
}

OracleMargin::OracleMargin(const margin::DasmOracle& oracle, grid::ScenarioConfig scenario)
    : oracle_(&oracle), scenario_(std::move(scenario)) {}

int OracleMargin::action_dim() const { return grid::shipped_system(scenario_.system).n_devices(); }

double OracleMargin::lipschitz() const { return oracle_->action_gradient(scenario_).norm(); }

std::unique_ptr<BoundMargin> OracleMargin::bind(const Eigen::VectorXd&) const {
    return std::make_unique<BoundOracle>(*oracle_, scenario_);
}

Eigen::VectorXd margin_gradient(const margin::DuelingEstimator& est, const Eigen::VectorXd& observation,
                                const Eigen::VectorXd& action) {
    return est.action_gradient(observation, action);
}

double step_size(double margin, double epsilon, int n_a, double lipschitz, double lambda_min) {
    if (n_a < 1) throw ConfigError("action dimension must be at least 1");
    if (!(lipschitz > 0.0)) return lambda_min;
    return std::max(std::abs(epsilon - margin) / (2.0 * n_a * lipschitz * lipschitz), lambda_min);
}

CorrectionResult correct_action(const MarginModel& model, const Eigen::VectorXd& observation, const Eigen::VectorXd& a0,
                                const SafetyConfig& config) {
    config.validate();
    const int n = model.action_dim();
    if (a0.size() != n) throw DimensionError("a0 length differs from the action dimension");
    if (!a0.allFinite() || a0.minCoeff() < config.box_lo || a0.maxCoeff() > config.box_hi) {
        throw ConfigError("a0 must lie in the action box");
    }
    const auto bound = model.bind(observation);
    const double lipschitz = model.lipschitz();
    auto clip = [&](Eigen::VectorXd a) { return a.cwiseMax(config.box_lo).cwiseMin(config.box_hi).eval(); };

    CorrectionResult r;
    r.action = a0;
    r.initial_margin = bound->margin(a0);
    r.final_margin = r.initial_margin;
    auto record = [&](int k, double m, const Eigen::VectorXd& a) {
        if (config.record_trace) r.trace.push_back({k, m, a});
    };
    record(0, r.initial_margin, a0);
    if (r.initial_margin >= config.epsilon) {
        r.converged = true;
        return r;
    }

    const Eigen::VectorXd top = Eigen::VectorXd::Constant(n, config.box_hi);
    if (a0 == top) {
        // nothing left to shed
        r.fallback_used = true;
        return r;
    }

    Eigen::VectorXd a = a0;
    double m = r.initial_margin;
    for (int k = 1; k <= config.max_iterations; ++k) {
        Eigen::VectorXd g = bound->gradient(a);
        if (config.normalize_direction) {
            const double gn = g.norm();
            if (gn > 0.0) g /= gn;
        }
        const double lambda = step_size(m, config.epsilon, n, lipschitz, config.lambda_min);
        a = clip(a + lambda * g);
        m = bound->margin(a);
        r.iterations = k;
        record(k, m, a);
        if (m >= config.epsilon) {
            r.action = a;
            r.final_margin = m;
            r.converged = true;
            return r;
        }
    }

    r.fallback_used = true;
    if (config.fallback == Fallback::UniformEscalation) {
        // raise every component toward the top of the box, starting from the better of a0 and the last iterate
        const Eigen::VectorXd base = m >= r.initial_margin ? a : a0;
        const int steps = static_cast<int>(std::ceil(1.0 / config.escalation_step));
        for (int j = 1; j < steps; ++j) {
            const double t = config.escalation_step * j;
            const Eigen::VectorXd cand = clip(base + t * (top - base));
            const double cm = bound->margin(cand);
            if (cm >= config.epsilon) {
                r.action = cand;
                r.final_margin = cm;
                record(config.max_iterations + j, cm, cand);
                return r;
            }
        }
    }
    r.action = top;
    r.final_margin = bound->margin(top);
    record(config.max_iterations + 1, r.final_margin, top);
    return r;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
    const auto n = trace.empty() ? 0 : trace.front().action.size();
    out << "k,margin";
    for (Eigen::Index i = 0; i < n; ++i) out << ",a_" << i;
    out << '\n';
    const auto old = out.precision(17);
    for (const auto& p : trace) {
        out << p.k << ',' << p.margin;
        for (Eigen::Index i = 0; i < p.action.size(); ++i) out << ',' << p.action(i);
        out << '\n';
    }
    out.precision(old);
}

}  // namespace voltguard::safety

#include "voltguard/error.hpp"
#include "voltguard/safety/projection.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace voltguard;
using namespace voltguard::safety;
using Catch::Approx;

namespace {

/// D(s, a) = w . a + b, independent of the observation.
class LinearMargin final : public MarginModel {
public:
    LinearMargin(Eigen::VectorXd w, double b) : w_(std::move(w)), b_(b) {}
    int action_dim() const override { return static_cast<int>(w_.size()); }
    double lipschitz() const override { return w_.norm(); }
    std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd&) const override {
        return std::make_unique<Bound>(w_, b_);
    }

private:
    class Bound final : public BoundMargin {
    public:
        Bound(Eigen::VectorXd w, double b) : w_(std::move(w)), b_(b) {}
        double margin(const Eigen::VectorXd& a) const override { return w_.dot(a) + b_; }
        Eigen::VectorXd gradient(const Eigen::VectorXd&) const override { return w_; }

    private:
        Eigen::VectorXd w_;
        double b_;
    };
    Eigen::VectorXd w_;
    double b_;
};

/// Flat margin with a nominal Lipschitz constant: the gradient never helps.
class FlatMargin final : public MarginModel {
public:
    explicit FlatMargin(double value) : value_(value) {}
    int action_dim() const override { return 2; }
    double lipschitz() const override { return 1.0; }
    std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd&) const override { return std::make_unique<Bound>(value_); }

private:
    class Bound final : public BoundMargin {
    public:
        explicit Bound(double v) : v_(v) {}
        double margin(const Eigen::VectorXd&) const override { return v_; }
        Eigen::VectorXd gradient(const Eigen::VectorXd&) const override { return Eigen::VectorXd::Zero(2); }

    private:
        double v_;
    };
    double value_;
};

/// Margin that only clears the threshold when every component reaches `level`.
class StepMargin final : public MarginModel {
public:
    explicit StepMargin(double level) : level_(level) {}
    int action_dim() const override { return 2; }
    double lipschitz() const override { return 1.0; }
    std::unique_ptr<BoundMargin> bind(const Eigen::VectorXd&) const override { return std::make_unique<Bound>(level_); }

private:
    class Bound final : public BoundMargin {
    public:
        explicit Bound(double l) : l_(l) {}
        double margin(const Eigen::VectorXd& a) const override { return a.minCoeff() >= l_ ? 1.0 : -1.0; }
        Eigen::VectorXd gradient(const Eigen::VectorXd&) const override { return Eigen::VectorXd::Zero(2); }

    private:
        double l_;
    };
    double level_;
};

Eigen::VectorXd random_vector(int n, Rng& rng) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = standard_normal(rng);
    return v;
}

}  // namespace

TEST_CASE("step size examples") {
    CHECK(step_size(0.0, 0.1, 2, 5.0, 1e-6) == Approx(1e-3).epsilon(1e-12));
    CHECK(step_size(0.1, 0.1, 2, 5.0, 1e-3) == 1e-3);
    const double a = step_size(-0.4, 0.1, 3, 2.0, 1e-9);
    const double b = step_size(-0.4, 0.1, 3, 4.0, 1e-9);
    CHECK(b == Approx(a / 4.0).epsilon(1e-12));
    CHECK(step_size(0.3, 0.1, 1, 1.0, 1e-9) == Approx(0.1));
    CHECK_THROWS_AS(step_size(0.0, 0.1, 0, 1.0, 1e-3), ConfigError);
}

TEST_CASE("already safe actions pass through untouched") {
    const LinearMargin model(Eigen::Vector2d(1.0, 1.0), 0.0);
    const Eigen::Vector2d a0(0.3, 0.2);
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), a0);
    CHECK(r.action == a0);
    CHECK(r.iterations == 0);
    CHECK(r.converged);
    CHECK_FALSE(r.fallback_used);
}

TEST_CASE("linear margin converges along a non-decreasing trace") {
    const Eigen::Vector2d w(0.8, 0.3);
    const LinearMargin model(w, -0.5);
    SafetyConfig cfg;
    cfg.record_trace = true;
    const Eigen::Vector2d a0(0.1, 0.05);
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), a0, cfg);
    REQUIRE(r.converged);
    CHECK_FALSE(r.fallback_used);
    CHECK(r.final_margin >= cfg.epsilon);
    CHECK(r.final_margin == Approx(w.dot(r.action) - 0.5).epsilon(1e-12));
    REQUIRE(r.trace.size() == static_cast<std::size_t>(r.iterations) + 1);
    for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].margin >= r.trace[k - 1].margin);
    // closed form of the unclipped iteration: a_k = a_{k-1} + lambda_k w
    Eigen::VectorXd a = a0;
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
        const double m = w.dot(a) - 0.5;
        const double lambda = std::max(std::abs(cfg.epsilon - m) / (2.0 * 2.0 * w.squaredNorm()), cfg.lambda_min);
        a = (a + lambda * w).cwiseMin(1.0).cwiseMax(0.0);
        CHECK((r.trace[k].action - a).norm() < 1e-12);
    }
}

TEST_CASE("iterates stay inside the box") {
    const LinearMargin model(Eigen::Vector2d(5.0, -1.0), -4.85);
    SafetyConfig cfg;
    cfg.record_trace = true;
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.0, 0.9), cfg);
    for (const auto& p : r.trace) {
        CHECK(p.action.minCoeff() >= 0.0);
        CHECK(p.action.maxCoeff() <= 1.0);
    }
    CHECK(r.converged);
    CHECK(r.action(0) == 1.0);
    CHECK(r.action(1) <= 0.05 + 1e-12);
}

TEST_CASE("stuck gradient exhausts the budget and falls back") {
    const FlatMargin model(-0.2);
    SafetyConfig cfg;
    cfg.max_iterations = 50;
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.1, 0.4), cfg);
    CHECK(r.iterations == 50);
    CHECK(r.fallback_used);
    CHECK_FALSE(r.converged);
    CHECK(r.action == Eigen::Vector2d(1.0, 1.0));
}

TEST_CASE("uniform escalation stops at the first safe level") {
    const StepMargin model(0.6);
    SafetyConfig cfg;
    cfg.max_iterations = 5;
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.2, 0.0), cfg);
    CHECK(r.fallback_used);
    CHECK(r.final_margin == 1.0);
    CHECK(r.action.minCoeff() >= 0.6);
    CHECK(r.action.maxCoeff() < 1.0);
    cfg.fallback = Fallback::AllOnes;
    const auto ones = correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.2, 0.0), cfg);
    CHECK(ones.action == Eigen::Vector2d(1.0, 1.0));
}

TEST_CASE("nothing left to shed returns the full action") {
    const FlatMargin model(-1.0);
    const auto r = correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(1.0, 1.0));
    CHECK(r.fallback_used);
    CHECK(r.iterations == 0);
    CHECK(r.action == Eigen::Vector2d(1.0, 1.0));
    const auto again = correct_action(model, Eigen::VectorXd::Zero(1), r.action);
    CHECK(again.action == r.action);
}

TEST_CASE("corrected actions are fixed points") {
    const LinearMargin model(Eigen::Vector2d(0.4, 0.9), -0.7);
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const Eigen::Vector2d a0(uniform01(rng), uniform01(rng));
        const auto r = correct_action(model, Eigen::VectorXd::Zero(1), a0);
        const auto again = correct_action(model, Eigen::VectorXd::Zero(1), r.action);
        CHECK(again.action == r.action);
        CHECK(again.iterations == 0);
    }
}

TEST_CASE("inputs outside the box or of the wrong size are rejected") {
    const LinearMargin model(Eigen::Vector2d(1.0, 1.0), 0.0);
    CHECK_THROWS_AS(correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(1.5, 0.0)), ConfigError);
    CHECK_THROWS_AS(correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector3d(0.0, 0.0, 0.0)), DimensionError);
    SafetyConfig bad;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(correct_action(model, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.0, 0.0), bad), ConfigError);
}

TEST_CASE("dead advantage path has no action gradient") {
    margin::DuelingEstimator est(5, 2, margin::EstimatorShape{8, 1, 2}, 3);
    for (auto& l : est.advantage_head().layers()) l.w.setZero();
    const Eigen::VectorXd s = Eigen::VectorXd::Constant(5, 0.3);
    CHECK(margin_gradient(est, s, Eigen::Vector2d(0.2, 0.7)).isZero(0.0));
    const EstimatorMargin model(est);
    CHECK(model.bind(s)->gradient(Eigen::Vector2d(0.2, 0.7)).isZero(0.0));
}

TEST_CASE("margin gradient matches central differences") {
    Rng rng(17);
    for (int t = 0; t < 20; ++t) {
        margin::DuelingEstimator est(6, 3, margin::EstimatorShape{16, 2, 2}, 40 + t);
        const Eigen::VectorXd s = random_vector(6, rng);
        const Eigen::VectorXd a = random_vector(3, rng);
        const auto g = margin_gradient(est, s, a);
        const auto bound = EstimatorMargin(est).bind(s);
        const auto gb = bound->gradient(a);
        for (int i = 0; i < 3; ++i) {
            Eigen::VectorXd p = a, m = a;
            p(i) += 1e-4;
            m(i) -= 1e-4;
            const double fd = (est.estimate(s, p) - est.estimate(s, m)) / 2e-4;
            CHECK(std::abs(g(i) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
            CHECK(gb(i) == g(i));
        }
        CHECK(bound->margin(a) == Approx(est.estimate(s, a)).epsilon(1e-12));
    }
}

TEST_CASE("gradient at a_zero is the negated advantage gradient") {
    margin::DuelingEstimator est(4, 2, margin::EstimatorShape{8, 2, 2}, 12);
    const Eigen::Vector4d s(0.1, -0.5, 0.3, 0.9);
    const Eigen::VectorXd az = est.a_zero();
    Eigen::Vector2d num;
    for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd p = az, m = az;
        p(i) += 1e-5;
        m(i) -= 1e-5;
        num(i) = -(est.advantage(s, p) - est.advantage(s, m)) / 2e-5;
    }
    CHECK((margin_gradient(est, s, az) - num).norm() < 1e-6);
}

TEST_CASE("estimator margin caches a sound action bound") {
    margin::DuelingEstimator est(4, 2, margin::EstimatorShape{8, 2, 2}, 13);
    EstimatorMargin model(est);
    CHECK(model.lipschitz() == est.action_lipschitz_bound());
    est.advantage_head().layer(0).w *= 2.0;
    CHECK(model.lipschitz() < est.action_lipschitz_bound());
    model.refresh();
    CHECK(model.lipschitz() == est.action_lipschitz_bound());
}

TEST_CASE("trace CSV layout") {
    std::ostringstream out;
    write_trace_csv(out, {{0, -0.5, Eigen::Vector2d(0.0, 0.25)}, {1, 0.125, Eigen::Vector2d(0.5, 0.25)}});
    CHECK(out.str() == "k,margin,a_0,a_1\n0,-0.5,0,0.25\n1,0.125,0.5,0.25\n");
}

TEST_CASE("fallback names parse") {
    CHECK(fallback_from_string("all-ones") == Fallback::AllOnes);
    CHECK(fallback_from_string(to_string(Fallback::UniformEscalation)) == Fallback::UniformEscalation);
    CHECK_THROWS_AS(fallback_from_string("none"), ConfigError);
}

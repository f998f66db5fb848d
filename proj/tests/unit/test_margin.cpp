#include "voltguard/error.hpp"
#include "voltguard/grid/scenario_io.hpp"
#include "voltguard/margin/active.hpp"
#include "voltguard/margin/dataset.hpp"
#include "voltguard/margin/estimator.hpp"
#include "voltguard/margin/oracle.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <sstream>

using namespace voltguard;
using namespace voltguard::margin;
using Catch::Approx;

namespace {

grid::ScenarioConfig heavy() {
    auto s = grid::nominal_scenario(grid::two_bus_system(), 1.0);
    s.id = "heavy";
    s.motor_share = {0.6};
    return s;
}

grid::ScenarioConfig light() {
    auto s = grid::nominal_scenario(grid::two_bus_system(), 0.6);
    s.id = "light";
    return s;
}

grid::ScenarioConfig bolted() {
    auto s = heavy();
    s.id = "bolted";
    s.fault.clearing_s = 20.0;
    return s;
}

struct Corpus {
    std::vector<grid::ScenarioConfig> scenarios;
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> test;
    std::vector<LabeledSample> all;
};

/// 150 two-bus scenarios with four random actions each, split by scenario.
const Corpus& corpus() {
    static const Corpus c = [] {
        Corpus out;
        out.scenarios = env::sample_scenarios("two-bus", 11, 150, env::SamplingRanges{});
        const DasmOracle oracle;
        out.all = label_samples(random_action_samples(out.scenarios, 4, 3), out.scenarios, oracle);
        std::map<std::string, std::size_t> rank;
        for (std::size_t i = 0; i < out.scenarios.size(); ++i) rank[out.scenarios[i].id] = i;
        for (const auto& l : out.all) (rank[l.sample.scenario_id] < 120 ? out.train : out.test).push_back(l);
        return out;
    }();
    return c;
}

const DuelingEstimator& trained() {
    static const DuelingEstimator est = full_train(corpus().train);
    return est;
}

Eigen::VectorXd random_vector(int n, Rng& rng) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = standard_normal(rng);
    return v;
}

LabeledSample synthetic(const Eigen::VectorXd& obs, const Eigen::VectorXd& act, double d) {
    LabeledSample l;
    l.sample.scenario_id = "syn";
    l.sample.observation.values = obs;
    l.sample.observation.n_bus = static_cast<int>(obs.size());
    l.sample.action.shed = act;
    l.d = d;
    l.stable = margin_is_stable(d);
    return l;
}

/// Pool of synthetic samples whose margin is affine in the action.
std::vector<MarginSample> synthetic_pool(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<MarginSample> pool(n);
    for (auto& s : pool) {
        s.scenario_id = "syn";
        s.observation.values = random_vector(4, rng);
        s.observation.n_bus = 4;
        s.action.shed = Eigen::VectorXd::Constant(1, uniform01(rng));
    }
    return pool;
}

double synthetic_margin(const MarginSample& s) { return s.action.shed(0) - 0.4 + 0.1 * s.observation.values(0); }

Labeler synthetic_labeler() {
    return [](const MarginSample& s) -> std::optional<LabeledSample> {
        return synthetic(s.observation.values, s.action.shed, synthetic_margin(s));
    };
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("scenario stable without control has a zero boundary") {
    const auto b = feasible_action_boundary(light());
    CHECK(b.fraction == 0.0);
    CHECK(b.point.isZero());
    CHECK(b.simulations == 1);
}

TEST_CASE("bisection boundary agrees with the traversal") {
    const auto b = feasible_action_boundary(heavy());
    const auto t = traversal_boundary(heavy(), 0.02);
    REQUIRE(t.has_value());
    CHECK(*t == Approx(0.42).margin(1e-9));
    CHECK(std::abs(b.fraction - *t) <= 0.02);
    CHECK(b.simulations <= 2 + 8);
}

TEST_CASE("bolted permanent fault has no feasible action") {
    CHECK_THROWS_AS(feasible_action_boundary(bolted()), NoFeasibleAction);
    CHECK_FALSE(traversal_boundary(bolted(), 0.25).has_value());
}

TEST_CASE("an action on the boundary ties and counts as unstable") {
    const DasmOracle oracle;
    const auto& sm = oracle.scenario_margin(heavy());
    CHECK_FALSE(sm.stable_without_control);
    CHECK(sm.state_term == 0.0);
    const double d = oracle.margin(heavy(), sm.boundary.point);
    CHECK(d == 0.0);
    CHECK_FALSE(margin_is_stable(d));
    CHECK(margin_is_stable(oracle.margin(heavy(), sm.boundary.point.array() + 0.01)));
}

TEST_CASE("zero shedding on a secure scenario reports the distance to collapse") {
    const DasmOracle oracle;
    const auto s = light();
    const double d = oracle.margin(s, Eigen::VectorXd::Zero(1));
    CHECK(d > 0.0);
    // independent scan over load scaling in steps of 0.01
    const double norm = load_vector(s).norm();
    double k_fail = 0.0;
    for (int i = 1; i <= 300 && k_fail == 0.0; ++i) {
        const double k = 1.0 + 0.01 * i;
        bool ok = false;
        try {
            ok = grid::simulate_episode(grid::scale_loads(s, k), std::vector<double>{0.0}).stable;
        } catch (const InfeasibleScenario&) {
        }
        if (!ok) k_fail = k;
    }
    REQUIRE(k_fail > 1.0);
    const double scanned = (k_fail - 0.005 - 1.0) * norm;
    CHECK(std::abs(d - scanned) <= 0.01 + 0.005 * norm);
    const auto ray = dsr_ray_search(s);
    CHECK(ray.k_stable < ray.k_unstable);
    CHECK((ray.k_unstable - ray.k_stable) * norm <= 0.01);
}

TEST_CASE("margin grows with shedding") {
    const DasmOracle oracle;
    for (const auto& s : {heavy(), light()}) {
        double prev = -1e9;
        for (double a : {0.0, 0.1, 0.3, 0.5, 0.9}) {
            const double d = oracle.margin(s, Eigen::VectorXd::Constant(1, a));
            CHECK(d > prev);
            prev = d;
        }
    }
    CHECK(oracle.cached() == 2);
    CHECK(oracle.action_gradient(heavy())(0) == 1.0);
    CHECK(oracle.cached() == 2);
}

TEST_CASE("five-bus oracle gradient is the mean projection") {
    const DasmOracle oracle;
    auto s = grid::nominal_scenario(grid::five_bus_system(), 1.0);
    s.id = "five";
    const auto g = oracle.action_gradient(s);
    CHECK(g.isApprox(Eigen::Vector2d(0.5, 0.5)));
    const Eigen::Vector2d a(0.2, 0.6), b(0.6, 0.2);
    CHECK(oracle.margin(s, a) == Approx(oracle.margin(s, b)));
    CHECK(dasm_oracle(s, a) == Approx(oracle.margin(s, a)));
}

TEST_CASE("uncertainty is the inverse margin magnitude") {
    CHECK(uncertainty_from_margin(0.5) == 2.0);
    CHECK(uncertainty_from_margin(0.0) == 1e6);
    CHECK(uncertainty_from_margin(-0.25) == 4.0);
    std::vector<double> m{0.4, -0.05, 0.9};
    const auto top = std::max_element(m.begin(), m.end(), [](double a, double b) {
        return uncertainty_from_margin(a) < uncertainty_from_margin(b);
    });
    CHECK(*top == -0.05);
}

TEST_CASE("estimate at a_zero is the state value") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        DuelingEstimator est(8, 2, EstimatorShape{16, 2, 2}, 100 + t);
        Eigen::VectorXd az(2);
        az << uniform01(rng), uniform01(rng);
        est.set_a_zero(az);
        const Eigen::VectorXd s = random_vector(8, rng);
        CHECK(est.estimate(s, az) == est.state_value(s));
        const Eigen::VectorXd a = random_vector(2, rng);
        CHECK(std::isfinite(est.estimate(s, a)));
        CHECK(est.estimate(s, a) ==
              Approx(est.state_value(s) - (est.advantage(s, a) - est.advantage(s, az))).epsilon(1e-12));
    }
}

TEST_CASE("estimator gradients match central differences") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        DuelingEstimator est(8, 2, EstimatorShape{16, 2, 2}, 300 + t);
        const Eigen::VectorXd s = random_vector(8, rng);
        const Eigen::VectorXd a = random_vector(2, rng);
        const double h = 1e-4;
        const auto ga = est.action_gradient(s, a);
        for (int i = 0; i < 2; ++i) {
            Eigen::VectorXd p = a, m = a;
            p(i) += h;
            m(i) -= h;
            CHECK(ga(i) == Approx((est.estimate(s, p) - est.estimate(s, m)) / (2 * h)).margin(1e-6));
        }
        const auto gs = est.observation_gradient(s, a);
        for (int i = 0; i < 8; ++i) {
            Eigen::VectorXd p = s, m = s;
            p(i) += h;
            m(i) -= h;
            CHECK(gs(i) == Approx((est.estimate(p, a) - est.estimate(m, a)) / (2 * h)).margin(1e-6));
        }
    }
}

TEST_CASE("action lipschitz bound dominates sampled quotients") {
    Rng rng(9);
    DuelingEstimator est(8, 2, EstimatorShape{16, 2, 2}, 4);
    const double bound = est.action_lipschitz_bound();
    for (int p = 0; p < 2000; ++p) {
        const Eigen::VectorXd s = random_vector(8, rng);
        const Eigen::VectorXd a = random_vector(2, rng), b = random_vector(2, rng);
        CHECK(std::abs(est.estimate(s, a) - est.estimate(s, b)) <= bound * (a - b).norm() * (1 + 1e-12));
    }
}

TEST_CASE("estimator checkpoint round-trip is exact") {
    const auto& est = trained();
    const auto back = estimator_from_json(nlohmann::json::parse(to_json(est).dump()));
    for (const auto& l : corpus().test) {
        CHECK(back.estimate(l.sample.observation.values, l.sample.action.shed) ==
              est.estimate(l.sample.observation.values, l.sample.action.shed));
    }
    const auto m1 = evaluate_estimator(est, corpus().test);
    const auto m2 = evaluate_estimator(back, corpus().test);
    CHECK(m1.accuracy == m2.accuracy);
    CHECK(m1.mae == m2.mae);
}

TEST_CASE("discrete branch takes the smallest estimate") {
    DuelingEstimator est(3, 1, EstimatorShape{8, 1, 2}, 2);
    const Eigen::Vector3d s(0.1, 0.2, 0.3);
    std::vector<Eigen::VectorXd> acts{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 0.5),
                                      Eigen::VectorXd::Constant(1, 1.0)};
    double lo = 1e9;
    for (const auto& a : acts) lo = std::min(lo, est.estimate(s, a));
    CHECK(est.estimate_min(s, acts) == lo);
}

TEST_CASE("metrics of an estimator that reproduces its labels") {
    DuelingEstimator est(4, 1, EstimatorShape{8, 1, 2}, 6);
    Rng rng(3);
    std::vector<LabeledSample> set;
    for (int i = 0; i < 40; ++i) {
        const Eigen::VectorXd s = random_vector(4, rng);
        const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, uniform01(rng));
        set.push_back(synthetic(s, a, est.estimate(s, a)));
    }
    const auto m = evaluate_estimator(est, set);
    CHECK(m.accuracy == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.mae < 1e-12);
}

TEST_CASE("constant positive estimator never flags instability") {
    DuelingEstimator est(4, 1, EstimatorShape{8, 1, 2}, 6);
    for (auto* net : {&est.encoder(), &est.value_head(), &est.advantage_head()}) {
        for (auto& l : net->layers()) {
            l.w.setZero();
            l.b.setZero();
        }
    }
    est.value_head().layer(0).b(0) = 1.0;
    Rng rng(3);
    std::vector<LabeledSample> set;
    for (int i = 0; i < 20; ++i) {
        set.push_back(synthetic(random_vector(4, rng), Eigen::VectorXd::Zero(1), i % 2 ? 0.5 : -0.5));
    }
    const auto m = evaluate_estimator(est, set);
    CHECK(m.specificity == 0.0);
    CHECK(m.accuracy == 0.5);
    CHECK(m.mae == Approx(1.0));
}

TEST_CASE("a single repeated sample is memorised") {
    DuelingEstimator est(4, 1, EstimatorShape{16, 2, 2}, 8);
    Eigen::MatrixXd obs = Eigen::MatrixXd::Constant(4, 8, 0.3);
    Eigen::MatrixXd act = Eigen::MatrixXd::Constant(1, 8, 0.6);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 0.37);
    double loss = 1.0;
    for (int k = 0; k < 2000; ++k) loss = est.train_step(obs, act, y, nn::AdamHyper{});
    CHECK(loss < 1e-8);
}

TEST_CASE("trained estimator on the oracle-labeled corpus") {
    const auto& c = corpus();
    REQUIRE(c.test.size() >= 100);
    const auto m = evaluate_estimator(trained(), c.test);
    INFO("accuracy " << m.accuracy << " mae " << m.mae);
    CHECK(m.accuracy >= 0.95);
    CHECK(m.mae < 0.05);
}

TEST_CASE("small label noise costs little accuracy") {
    auto noisy = corpus().train;
    Rng rng(99);
    for (auto& l : noisy) {
        l.d += uniform(rng, -0.01, 0.01);
        l.stable = margin_is_stable(l.d);
    }
    const auto clean = evaluate_estimator(trained(), corpus().test).accuracy;
    const auto perturbed = evaluate_estimator(full_train(noisy), corpus().test).accuracy;
    INFO("clean " << clean << " noisy " << perturbed);
    CHECK(clean - perturbed < 0.02);
}

TEST_CASE("active learning stops once the target is met") {
    const auto pool = synthetic_pool(300, 1);
    std::vector<LabeledSample> test;
    for (const auto& s : synthetic_pool(100, 2)) test.push_back(*synthetic_labeler()(s));
    ALConfig cfg;
    cfg.initial_pool = 60;
    cfg.query_batch = 20;
    cfg.target_accuracy = 0.6;
    cfg.steps_per_round = 600;
    cfg.shape = EstimatorShape{16, 2, 2};
    const auto r = al_train(pool, synthetic_labeler(), test, cfg);
    REQUIRE(r.reached_target);
    CHECK(r.audit.size() == 1);
    CHECK(r.audit.front().labels_used == 60);
    CHECK(r.labeled.size() == 60);
    CHECK(labels_to_reach(r.audit, 0.6) == 60);
}

TEST_CASE("failed labels are skipped and logged") {
    const auto pool = synthetic_pool(100, 3);
    std::vector<LabeledSample> test;
    for (const auto& s : synthetic_pool(50, 4)) test.push_back(*synthetic_labeler()(s));
    int calls = 0;
    Labeler flaky = [&](const MarginSample& s) -> std::optional<LabeledSample> {
        if (++calls % 5 == 0) return std::nullopt;
        return synthetic_labeler()(s);
    };
    ALConfig cfg;
    cfg.initial_pool = 20;
    cfg.query_batch = 10;
    cfg.max_rounds = 3;
    cfg.target_accuracy = 1.0;
    cfg.steps_per_round = 50;
    cfg.shape = EstimatorShape{8, 1, 2};
    const auto r = al_train(pool, flaky, test, cfg);
    CHECK(r.queried.size() == 40);
    CHECK(r.skipped.size() == 8);
    CHECK(r.labeled.size() == 32);
    CHECK(r.audit.back().labels_used == 32);
    std::ostringstream csv;
    write_audit_csv(csv, r.audit);
    CHECK(csv.str().rfind("round,labels_used,test_acc,test_spe\n1,16,", 0) == 0);
}

TEST_CASE("uncertainty queries concentrate near the boundary") {
    const auto& c = corpus();
    std::vector<MarginSample> pool;
    std::map<const MarginSample*, double> truth;
    for (const auto& l : c.train) pool.push_back(l.sample);
    std::vector<double> pool_abs;
    for (const auto& l : c.train) pool_abs.push_back(std::abs(l.d));
    std::map<std::string, std::vector<const LabeledSample*>> by_id;
    for (const auto& l : c.train) by_id[l.sample.scenario_id].push_back(&l);
    Labeler lookup = [&](const MarginSample& s) -> std::optional<LabeledSample> {
        for (const auto* l : by_id.at(s.scenario_id)) {
            if (l->sample.action.shed == s.action.shed) return *l;
        }
        return std::nullopt;
    };
    ALConfig cfg;
    cfg.initial_pool = 40;
    cfg.query_batch = 40;
    cfg.max_rounds = 4;
    cfg.target_accuracy = 1.0;
    cfg.steps_per_round = 300;
    const auto r = al_train(pool, lookup, c.test, cfg);
    std::vector<double> queried_abs;
    for (std::size_t k = static_cast<std::size_t>(cfg.initial_pool); k < r.labeled.size(); ++k) {
        queried_abs.push_back(std::abs(r.labeled[k].d));
    }
    REQUIRE(queried_abs.size() >= 40);
    INFO("queried " << median(queried_abs) << " pool " << median(pool_abs));
    CHECK(median(queried_abs) < median(pool_abs));
}

TEST_CASE("random action samples cover every scenario inside the box") {
    const auto sc = env::sample_scenarios("five-bus", 2, 3, env::SamplingRanges{});
    const auto s = random_action_samples(sc, 4, 1, 0.5);
    REQUIRE(s.size() == 12);
    for (const auto& m : s) {
        CHECK(m.action.size() == 2);
        CHECK(m.action.shed.minCoeff() >= 0.0);
        CHECK(m.action.shed.maxCoeff() <= 0.5);
        CHECK(m.observation.size() == 17);
    }
    CHECK_NOTHROW(check_consistent(s));
}

TEST_CASE("labeling drops scenarios without a stabilising action") {
    const std::vector<grid::ScenarioConfig> sc{heavy(), bolted()};
    const auto samples = random_action_samples(sc, 2, 4);
    std::vector<std::string> skipped;
    const auto labeled = label_samples(samples, sc, DasmOracle{}, &skipped);
    CHECK(labeled.size() == 2);
    CHECK(skipped == std::vector<std::string>{"bolted", "bolted"});
    for (const auto& l : labeled) CHECK(l.stable == (l.d > 0.0));
}

TEST_CASE("labeled CSV round-trips exactly") {
    const auto& all = corpus().test;
    std::vector<LabeledSample> few(all.begin(), all.begin() + 5);
    std::stringstream io;
    write_labeled_csv(io, few);
    const auto back = read_labeled_csv(io, 2, 1);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back[i].d == few[i].d);
        CHECK(back[i].stable == few[i].stable);
        CHECK(back[i].sample.observation.values == few[i].sample.observation.values);
        CHECK(back[i].sample.action.shed == few[i].sample.action.shed);
        CHECK(back[i].sample.scenario_id == few[i].sample.scenario_id);
    }
    std::stringstream bad("scenario_id,obs_0\nx,1\n");
    CHECK_THROWS_AS(read_labeled_csv(bad, 2, 1), ConfigError);
}

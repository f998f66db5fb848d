#include "voltguard/agent/evaluate.hpp"
#include "voltguard/agent/sac.hpp"
#include "voltguard/error.hpp"
#include "voltguard/grid/network.hpp"
#include "voltguard/margin/active.hpp"
#include "voltguard/margin/dataset.hpp"
#include "voltguard/margin/oracle.hpp"
#include "voltguard/safety/projection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace voltguard;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const env::SamplingRanges kRanges{};

// ---------------------------------------------------------------------------------------------
// shared fixtures, built on first use

struct Corpus {
    std::vector<grid::ScenarioConfig> scenarios;
    std::vector<margin::LabeledSample> labeled;
    double label_seconds = 0.0;
};

const margin::DasmOracle& oracle() {
    static const margin::DasmOracle o;
    return o;
}

const Corpus& corpus() {
    static const Corpus c = [] {
        Corpus out;
        const auto t0 = Clock::now();
        out.scenarios = env::sample_scenarios("two-bus", 11, 420, kRanges);
        const auto samples = margin::random_action_samples(out.scenarios, 5, 3);
        out.labeled = margin::label_samples(samples, out.scenarios, oracle());
        out.label_seconds = seconds_since(t0);
        return out;
    }();
    return c;
}

const margin::DuelingEstimator& trained_estimator() {
    static const margin::DuelingEstimator est = margin::full_train(corpus().labeled);
    return est;
}

const safety::EstimatorMargin& estimator_model() {
    static const safety::EstimatorMargin m(trained_estimator());
    return m;
}

struct TrainedAgent {
    agent::PolicyNet policy;
    double seconds = 0.0;
    int episodes = 0;
};

const TrainedAgent& trained_agent() {
    static const TrainedAgent a = [] {
        TrainedAgent out;
        const auto t0 = Clock::now();
        const env::ScmdpEnv env("two-bus");
        agent::SacConfig cfg;
        cfg.episodes = 3000;
        agent::TrainHooks hooks;
        hooks.safety = agent::SafetyHook{&estimator_model(), {}, 0, {}};
        out.policy = agent::train(env, kRanges, cfg, hooks).policy;
        out.seconds = seconds_since(t0);
        out.episodes = cfg.episodes;
        return out;
    }();
    return a;
}

margin::Standardizer random_standardizer(int n, Rng& rng) {
    margin::Standardizer s;
    s.mean.resize(n);
    s.scale.resize(n);
    for (int i = 0; i < n; ++i) {
        s.mean(i) = uniform(rng, -1.0, 1.0);
        s.scale(i) = uniform(rng, 0.2, 3.0);
    }
    return s;
}

margin::DuelingEstimator random_estimator(Rng& rng, int obs, int act) {
    margin::EstimatorShape shape;
    shape.hidden = 4 + static_cast<int>(rng() % 29);
    shape.encoder_layers = 1 + static_cast<int>(rng() % 3);
    shape.advantage_layers = 1 + static_cast<int>(rng() % 3);
    return {obs, act, shape, rng(), random_standardizer(obs, rng)};
}

Eigen::VectorXd random_vector(int n, Rng& rng, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
    return v;
}

// ---------------------------------------------------------------------------------------------

Verdict dueling_identity() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int obs = trial % 2 == 0 ? 8 : 17;
        const int act = trial % 2 == 0 ? 1 : 2;
        auto est = random_estimator(rng, obs, act);
        if (trial % 3 == 0) est.set_a_zero(random_vector(act, rng, 0.0, 1.0));
        const Eigen::VectorXd s = random_vector(obs, rng, -2.0, 2.0);
        worst = std::max(worst, std::abs(est.estimate(s, est.a_zero()) - est.state_value(s)));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-12 && t < 10.0, fmt("max |C(s,a_zero) - C1(s)| = %.3g over 1000 estimators, %.2f s", worst, t)};
}

/// Central difference along coordinate i; nullopt when a rectifier kink lies within h, which for a
/// piecewise-linear network shows up as disagreeing one-sided differences.
std::optional<double> central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                         Eigen::Index i, double h) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double f0 = f(x), fp = f(xp), fm = f(xm);
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    if (std::abs(fwd - bwd) > 1e-7 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) return std::nullopt;
    return (fp - fm) / (2.0 * h);
}

Verdict gradient_fidelity() {
    const auto t0 = Clock::now();
    Rng rng(202);
    const double h = 1e-4;
    double worst = 0.0;
    int checked = 0, skipped = 0;
    auto rel = [](const Eigen::VectorXd& g, const Eigen::VectorXd& fd) {
        const double scale = std::max({g.norm(), fd.norm(), 1e-12});
        return (g - fd).norm() / scale;
    };
    for (int net = 0; net < 100; ++net) {
        const int obs = net % 2 == 0 ? 8 : 17;
        const int act = net % 2 == 0 ? 1 : 2;
        const auto est = random_estimator(rng, obs, act);
        for (int point = 0; point < 5; ++point) {
            const Eigen::VectorXd s = random_vector(obs, rng, -2.0, 2.0);
            const Eigen::VectorXd a = random_vector(act, rng, 0.0, 1.0);
            Eigen::VectorXd fd_a(act), fd_s(obs);
            bool kink = false;
            for (int i = 0; i < act && !kink; ++i) {
                const auto d = central_difference([&](const Eigen::VectorXd& x) { return est.estimate(s, x); }, a, i, h);
                if (!d) kink = true;
                else fd_a(i) = *d;
            }
            for (int i = 0; i < obs && !kink; ++i) {
                const auto d = central_difference([&](const Eigen::VectorXd& x) { return est.estimate(x, a); }, s, i, h);
                if (!d) kink = true;
                else fd_s(i) = *d;
            }
            if (kink) {
                ++skipped;
                continue;
            }
            ++checked;
            worst = std::max(worst, rel(est.action_gradient(s, a), fd_a));
            worst = std::max(worst, rel(est.observation_gradient(s, a), fd_s));
        }
    }
    const double t = seconds_since(t0);
    const bool enough = checked >= 250;
    return {worst < 1e-5 && enough && t < 30.0,
            fmt("max relative error %.3g on %d points of 100 nets (%d near a kink skipped), %.2f s", worst, checked, skipped, t)};
}

Verdict lipschitz_soundness() {
    const auto t0 = Clock::now();
    Rng rng(303);
    int violations = 0, exceptions = 0;
    double tightest = 0.0;
    for (int net = 0; net < 20; ++net) {
        try {
            // a plain network on its full input
            const int in = 2 + static_cast<int>(rng() % 15);
            std::vector<int> hidden(1 + rng() % 3, 4 + static_cast<int>(rng() % 29));
            const auto act = net % 2 == 0 ? nn::Activation::Relu : nn::Activation::Tanh;
            const auto mlp = nn::Mlp::initialize(nn::layer_stack(in, hidden, 1 + static_cast<int>(rng() % 3), act), rng);
            const double bound = nn::lipschitz_bound(mlp);
            for (int p = 0; p < 10000; ++p) {
                const Eigen::VectorXd x = random_vector(in, rng, -2.0, 2.0);
                Eigen::VectorXd y = x + random_vector(in, rng, -1.0, 1.0) * std::pow(10.0, uniform(rng, -4.0, 0.0));
                const double q = (nn::forward(mlp, x) - nn::forward(mlp, y)).norm() / (x - y).norm();
                tightest = std::max(tightest, q / bound);
                if (q > bound) ++violations;
            }
            // the estimator in the action for a fixed state
            const auto est = random_estimator(rng, 17, 2);
            const double lb = est.action_lipschitz_bound();
            const Eigen::VectorXd s = random_vector(17, rng, -2.0, 2.0);
            for (int p = 0; p < 10000; ++p) {
                const Eigen::VectorXd a = random_vector(2, rng, 0.0, 1.0);
                const Eigen::VectorXd b = random_vector(2, rng, 0.0, 1.0);
                if ((a - b).norm() == 0.0) continue;
                const double q = std::abs(est.estimate(s, a) - est.estimate(s, b)) / (a - b).norm();
                tightest = std::max(tightest, q / lb);
                if (q > lb) ++violations;
            }
        } catch (const std::exception&) {
            ++exceptions;
        }
    }
    const double t = seconds_since(t0);
    return {violations == 0 && exceptions == 0 && t < 60.0,
            fmt("%d quotients above the bound, %d exceptions, largest quotient/bound %.6f, %.2f s", violations, exceptions,
                tightest, t)};
}

Verdict oracle_validity() {
    const auto t0 = Clock::now();
    const auto scenarios = env::sample_scenarios("two-bus", 404, 50, kRanges);
    double worst = 0.0;
    int disagreements = 0, counterexamples = 0, infeasible = 0;
    for (const auto& s : scenarios) {
        std::optional<double> bisection;
        try {
            bisection = margin::feasible_action_boundary(s).fraction;
        } catch (const NoFeasibleAction&) {
        }
        const auto traversal = margin::traversal_boundary(s, 0.02);
        if (bisection.has_value() != traversal.has_value()) {
            ++disagreements;
        } else if (bisection) {
            const double gap = std::abs(*bisection - *traversal);
            worst = std::max(worst, gap);
            if (gap > 0.02) ++disagreements;
        } else {
            ++infeasible;
        }
        grid::SimOptions o;
        o.record_trajectory = false;
        bool seen_stable = false;
        for (int k = 0; k <= 50; ++k) {
            const std::vector<double> a{0.02 * k};
            const bool stable = grid::simulate_episode(s, a, o).stable;
            if (seen_stable && !stable) ++counterexamples;
            seen_stable = seen_stable || stable;
        }
    }
    const double t = seconds_since(t0);
    return {disagreements == 0 && counterexamples == 0 && t < 600.0,
            fmt("max |bisection - traversal| = %.4f, %d disagreements, %d both infeasible, %d monotonicity "
                "counterexamples, %.1f s",
                worst, disagreements, infeasible, counterexamples, t)};
}

/// Folds that keep every scenario's samples together.
std::vector<int> scenario_folds(const std::vector<margin::LabeledSample>& data, int folds) {
    std::vector<int> out;
    std::size_t group = 0;
    std::string last;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (i > 0 && data[i].sample.scenario_id != last) ++group;
        last = data[i].sample.scenario_id;
        out.push_back(static_cast<int>(group % static_cast<std::size_t>(folds)));
    }
    return out;
}

Verdict estimator_accuracy() {
    const auto t0 = Clock::now();
    const auto& c = corpus();
    const auto& data = c.labeled;
    const auto fold_of = scenario_folds(data, 5);
    double mean_acc = 0.0;
    std::string per_fold;
    for (int f = 0; f < 5; ++f) {
        std::vector<margin::LabeledSample> tr, te;
        for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? te : tr).push_back(data[i]);
        margin::TrainOptions o;
        o.seed = static_cast<std::uint64_t>(f + 1);
        const auto m = margin::evaluate_estimator(margin::full_train(tr, {}, o), te);
        mean_acc += m.accuracy / 5.0;
        per_fold += fmt(" %.3f", m.accuracy);
    }
    const double t = seconds_since(t0) + c.label_seconds;
    return {data.size() >= 2000 && mean_acc >= 0.95 && t < 600.0,
            fmt("%zu labeled samples, 5-fold mean accuracy %.4f (folds%s), %.1f s with labeling", data.size(), mean_acc,
                per_fold.c_str(), t)};
}

Verdict al_efficiency() {
    const auto t0 = Clock::now();
    const auto scenarios = env::sample_scenarios("two-bus", 11, 500, kRanges);
    const auto samples = margin::random_action_samples(scenarios, 5, 3);
    const std::vector<margin::MarginSample> pool(samples.begin(), samples.begin() + 2000);
    const std::vector<margin::MarginSample> held(samples.begin() + 2000, samples.end());
    const auto test = margin::label_samples(held, scenarios, oracle());
    const auto labeled_pool = margin::label_samples(pool, scenarios, oracle());
    const auto full = margin::full_train(labeled_pool);
    const double full_acc = margin::evaluate_estimator(full, test).accuracy;
    const double full_labels = static_cast<double>(labeled_pool.size());

    const auto labeler = margin::oracle_labeler(oracle(), scenarios);
    constexpr int kRounds = 15;
    std::vector<double> best_al(kRounds, 0.0), best_random(kRounds, 0.0);
    double al_labels = 0.0;
    bool al_reached = true;
    for (auto strategy : {margin::QueryStrategy::Uncertainty, margin::QueryStrategy::Random}) {
        for (int seed = 1; seed <= 5; ++seed) {
            margin::ALConfig cfg;
            cfg.initial_pool = 20;
            cfg.query_batch = 20;
            cfg.max_rounds = kRounds;
            cfg.target_accuracy = 1.0;
            cfg.steps_per_round = 300;
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.strategy = strategy;
            const auto res = margin::al_train(pool, labeler, test, cfg);
            auto& curve = strategy == margin::QueryStrategy::Uncertainty ? best_al : best_random;
            double best = 0.0;
            for (int k = 0; k < kRounds; ++k) {
                if (k < static_cast<int>(res.audit.size())) best = std::max(best, res.audit[static_cast<std::size_t>(k)].test_acc);
                curve[static_cast<std::size_t>(k)] += best / 5.0;
            }
            if (strategy == margin::QueryStrategy::Uncertainty) {
                const auto n = margin::labels_to_reach(res.audit, 0.93);
                if (n == 0) al_reached = false;
                al_labels += static_cast<double>(n) / 5.0;
            }
        }
    }
    int dominated_rounds = 0;
    std::string curve_text;
    for (int k = 0; k < kRounds; ++k) {
        if (best_al[static_cast<std::size_t>(k)] >= best_random[static_cast<std::size_t>(k)]) ++dominated_rounds;
        curve_text += fmt(" %.4f/%.4f", best_al[static_cast<std::size_t>(k)], best_random[static_cast<std::size_t>(k)]);
    }
    const double t = seconds_since(t0);
    const bool pass = al_reached && full_acc >= 0.93 && al_labels <= 0.5 * full_labels && dominated_rounds == kRounds &&
                      t < 1200.0;
    return {pass, fmt("AL reaches 93%% at %.0f labels on average vs %.0f for full training (acc %.4f); AL >= random in "
                      "%d/%d rounds; %.1f s\n      mean best-so-far AL/random by round:%s",
                      al_labels, full_labels, full_acc, dominated_rounds, kRounds, t, curve_text.c_str())};
}

Verdict safety_soundness() {
    const auto t0 = Clock::now();
    const auto& est = trained_estimator();
    const auto& model = estimator_model();
    const auto test = env::sample_scenarios("two-bus", 99, 200, kRanges);
    const safety::SafetyConfig cfg;
    Rng rng(5);
    int cases = 0, converged = 0, monotone = 0, idempotent = 0, in_box = 0;
    std::size_t next = 0;
    while (cases < 1000) {
        const auto obs = env::observe(test[next++ % test.size()]).values;
        const Eigen::VectorXd a0 = Eigen::VectorXd::Constant(1, uniform01(rng));
        if (est.estimate(obs, a0) >= cfg.epsilon) continue;
        ++cases;
        const auto c = safety::correct_action(model, obs, a0, cfg);
        converged += c.converged && est.estimate(obs, c.action) >= cfg.epsilon ? 1 : 0;
        monotone += c.final_margin >= c.initial_margin ? 1 : 0;
        in_box += c.action.minCoeff() >= 0.0 && c.action.maxCoeff() <= 1.0 ? 1 : 0;
        idempotent += safety::correct_action(model, obs, c.action, cfg).action == c.action ? 1 : 0;
    }
    int violations = 0;
    for (const auto& s : test) {
        const safety::OracleMargin om(oracle(), s);
        const Eigen::VectorXd a0 = Eigen::VectorXd::Constant(1, 0.3 * uniform01(rng));
        const auto c = safety::correct_action(om, Eigen::VectorXd(), a0, cfg);
        const std::vector<double> a(c.action.data(), c.action.data() + c.action.size());
        violations += grid::simulate_episode(s, a).stable ? 0 : 1;
    }
    const double t = seconds_since(t0);
    const bool pass = converged >= 990 && monotone == 1000 && idempotent == 1000 && in_box == 1000 && violations == 0 &&
                      t < 600.0;
    return {pass, fmt("estimator: %d/1000 converged, %d monotone, %d idempotent, %d in box; oracle-corrected "
                      "violations %d/200; %.1f s",
                      converged, monotone, idempotent, in_box, violations, t)};
}

Verdict end_to_end() {
    const auto t0 = Clock::now();
    const auto& ag = trained_agent();
    const env::ScmdpEnv env("two-bus");
    const auto test = env::sample_scenarios("two-bus", 777, 100, kRanges);
    agent::EvalOptions opts;
    opts.methods = {agent::Method::Proposed, agent::Method::Raw};
    const auto report = agent::evaluate(
        env, ag.policy, [](const grid::ScenarioConfig&) -> const safety::MarginModel& { return estimator_model(); }, test,
        opts);
    const auto& proposed = report.row(agent::Method::Proposed);
    const auto& raw = report.row(agent::Method::Raw);
    double oracle_shed = 0.0;
    for (const auto& s : test) {
        try {
            oracle_shed += oracle().scenario_margin(s).boundary.point.sum() / 100.0;
        } catch (const NoFeasibleAction&) {
            oracle_shed += static_cast<double>(env.action_size()) / 100.0;
        }
    }
    const double allowance = 0.15 * env.action_size();
    const double t = seconds_since(t0);
    const bool pass = proposed.violations < raw.violations && proposed.avg_pls <= oracle_shed + allowance &&
                      ag.episodes <= 5000 && t < 1800.0;
    return {pass, fmt("violations proposed %d vs raw %d; avg shed %.4f vs oracle minimum %.4f + %.2f; %d training "
                      "episodes in %.1f s; %.1f s total",
                      proposed.violations, raw.violations, proposed.avg_pls, oracle_shed, allowance, ag.episodes,
                      ag.seconds, t)};
}

Verdict latency() {
    const auto& ag = trained_agent();
    const auto& model = estimator_model();
    const auto scenarios = env::sample_scenarios("two-bus", 888, 200, kRanges);
    std::vector<Eigen::VectorXd> observations;
    for (const auto& s : scenarios) observations.push_back(env::observe(s).values);
    std::vector<double> ms;
    ms.reserve(1000);
    double sink = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto& obs = observations[static_cast<std::size_t>(i) % observations.size()];
        const auto t0 = Clock::now();
        const Eigen::VectorXd a0 = agent::propose(ag.policy, obs, false);
        const auto c = safety::correct_action(model, obs, a0);
        ms.push_back(1e3 * seconds_since(t0));
        sink += c.action.sum();
    }
    const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    return {mean <= 10.0 && std::isfinite(sink),
            fmt("mean %.4f ms, median %.4f ms, p99 %.4f ms, max %.4f ms per decision over 1000 decisions", mean, ms[500],
                ms[989], ms.back())};
}

double slip_after(const grid::ScenarioConfig& s, double dt, double window) {
    grid::SimOptions o;
    o.dt = dt;
    o.check_delay_s = window;
    o.residual_tol = 1e-13;
    const auto out = grid::simulate_episode(s, std::vector<double>(static_cast<std::size_t>(grid::shipped_system(s.system).n_devices()), 0.0), o);
    return out.trajectory.slip.back().front();
}

Verdict simulator_sanity() {
    const auto t0 = Clock::now();
    double drift = 0.0;
    for (const auto& system : {"two-bus", "five-bus"}) {
        for (const auto& s : env::sample_scenarios(system, 1010, 5, kRanges)) {
            const grid::Plant plant(grid::operating_network(grid::shipped_system(system), s));
            grid::GridState st = grid::find_equilibrium(plant);
            const Eigen::VectorXd v0 = st.v.cwiseAbs();
            for (int k = 0; k < 1000; ++k) {
                grid::step_dynamics(plant, st, 0.01);
                drift = std::max(drift, (st.v.cwiseAbs() - v0).cwiseAbs().maxCoeff());
            }
        }
    }
    double lo = 1e9, hi = 0.0;
    int measured = 0;
    for (const auto& s : env::sample_scenarios("two-bus", 1011, 10, kRanges)) {
        const double s1 = slip_after(s, 0.02, 1.0);
        const double s2 = slip_after(s, 0.01, 1.0);
        const double s3 = slip_after(s, 0.005, 1.0);
        const double e1 = std::abs(s1 - s2), e2 = std::abs(s2 - s3);
        if (e2 < 1e-13) continue;  // below what double precision resolves
        const double order = std::log2(e1 / e2);
        lo = std::min(lo, order);
        hi = std::max(hi, order);
        ++measured;
    }
    const double t = seconds_since(t0);
    const bool pass = drift <= 1e-6 && measured >= 5 && lo >= 3.5 && hi <= 4.5 && t < 60.0;
    return {pass, fmt("max voltage drift %.3g pu over 10 s; observed order %.2f..%.2f on %d/10 scenarios (RK4 = 4); "
                      "%.1f s",
                      drift, lo, hi, measured, t)};
}

struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "dueling identity", dueling_identity},
        {2, "gradient fidelity", gradient_fidelity},
        {3, "Lipschitz soundness", lipschitz_soundness},
        {4, "oracle validity", oracle_validity},
        {5, "estimator accuracy", estimator_accuracy},
        {6, "active-learning efficiency", al_efficiency},
        {7, "safety-layer soundness", safety_soundness},
        {8, "end-to-end comparison", end_to_end},
        {9, "decision latency", latency},
        {10, "simulator sanity", simulator_sanity},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else {
            std::cerr << "usage: acceptance [--only 1,2,...]\n";
            return 2;
        }
    }
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && only.count(c.id) == 0) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << v.detail << std::endl;
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}

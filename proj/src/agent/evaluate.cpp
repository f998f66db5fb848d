#include "voltguard/agent/evaluate.hpp"

#include "voltguard/error.hpp"

#include <chrono>
#include <ostream>

namespace voltguard::agent {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::Proposed: return "proposed";
        case Method::Raw: return "raw";
        case Method::Typical: return "typical";
        case Method::Traversal: return "traversal";
    }
    return "proposed";
}

Method method_from_string(std::string_view name) {
    for (Method m : {Method::Proposed, Method::Raw, Method::Typical, Method::Traversal}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

const EvalRow& EvalReport::row(Method m) const {
    for (const auto& r : rows) {
        if (r.method == to_string(m)) return r;
    }
    throw ConfigError("report has no row for '" + std::string(to_string(m)) + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void add(EvalRow& row, const grid::ScenarioConfig& s, const env::EpisodeResult& r, double ms) {
    row.avg_reward += r.reward;
    row.violations += r.violated ? 1 : 0;
    row.avg_dv2 += r.deviation;
    row.avg_pls += r.shed_total;
    row.time_ms += ms;
    ++row.scenarios;
    row.episodes.push_back({s.id, r.shed_total, r.violated, r.reward, r.outcome.min_voltage_at_check});
}

void finish(EvalRow& row) {
    if (row.scenarios == 0) return;
    const auto n = static_cast<double>(row.scenarios);
    row.avg_reward /= n;
    row.avg_dv2 /= n;
    row.avg_pls /= n;
    row.time_ms /= n;
}

}  // namespace

EvalReport evaluate(const env::ScmdpEnv& env, const PolicyNet& policy, const MarginModelFactory& margin_model,
                    const std::vector<grid::ScenarioConfig>& scenarios, const EvalOptions& options) {
    EvalReport report;
    for (Method m : options.methods) {
        EvalRow row;
        row.method = std::string(to_string(m));
        for (const auto& s : scenarios) {
            const auto obs = env.observe(s);
            env::EpisodeResult res;
            double ms = 0.0;
            switch (m) {
                case Method::Proposed: {
                    const auto& model = margin_model(s);
                    const auto t0 = Clock::now();
                    const Eigen::VectorXd a0 = propose(policy, obs.values, false);
                    const auto c = safety::correct_action(model, obs.values, a0, options.safety);
                    ms = ms_since(t0);
                    res = env.step(s, env::ControlAction(c.action));
                    break;
                }
                case Method::Raw: {
                    const auto t0 = Clock::now();
                    const Eigen::VectorXd a0 = propose(policy, obs.values, false);
                    ms = ms_since(t0);
                    res = env.step(s, env::ControlAction(a0));
                    break;
                }
                case Method::Typical: {
                    // the relay decides inside the simulation; no separate decision step to time
                    res = env.score(baseline_typical_ls(s, options.typical, env.sim_options()).outcome);
                    break;
                }
                case Method::Traversal: {
                    const auto t0 = Clock::now();
                    Eigen::VectorXd a;
                    try {
                        a = baseline_traversal(s, options.traversal_step, env.sim_options()).action;
                    } catch (const NoFeasibleAction&) {
                        a = Eigen::VectorXd::Ones(env.action_size());
                    }
                    ms = ms_since(t0);
                    res = env.step(s, env::ControlAction(a));
                    break;
                }
            }
            add(row, s, res, ms);
        }
        finish(row);
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << "method,avg_reward,time_ms,violations,avg_dv2,avg_pls\n";
    const auto old = out.precision(8);
    for (const auto& r : report.rows) {
        out << r.method << ',' << r.avg_reward << ',' << r.time_ms << ',' << r.violations << ',' << r.avg_dv2 << ','
            << r.avg_pls << '\n';
    }
    out.precision(old);
}

}  // namespace voltguard::agent

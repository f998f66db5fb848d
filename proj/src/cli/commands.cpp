#include "voltguard/cli/commands.hpp"

#include "voltguard/agent/evaluate.hpp"
#include "voltguard/cli/svg.hpp"
#include "voltguard/error.hpp"
#include "voltguard/grid/scenario_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace voltguard::cli {

namespace fs = std::filesystem;

fs::path resolve_out(const fs::path& requested) {
    if (const char* env = std::getenv("VOLTGUARD_OUT"); env != nullptr && *env != '\0') return env;
    return requested;
}

RunConfig load_run_config(const CommonArgs& common) {
    return common.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(common.config);
}

namespace {

struct Run {
    RunConfig config;
    fs::path out;
    RunManifest manifest;

    Run(const CommonArgs& common, std::string command) : config(load_run_config(common)), out(resolve_out(common.out)) {
        fs::create_directories(out);
        manifest.command = std::move(command);
        manifest.config_digest = hex_digest(config_digest(config.source));
        manifest.seed = common.seed;
        manifest.tool_version = tool_version();
        manifest.started_at = utc_now();
        if (!common.config.empty()) manifest.inputs.push_back(common.config.string());
    }

    fs::path output(const std::string& name) {
        manifest.outputs.push_back(name);
        return out / name;
    }

    RunManifest finish() {
        manifest.finished_at = utc_now();
        manifest.write(out);
        return manifest;
    }
};

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(p, mode);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    return f;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(slurp(p));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

std::vector<grid::ScenarioConfig> scenarios_for(const fs::path& path, const RunConfig& config) {
    auto scenarios = grid::read_scenarios(path);
    for (const auto& s : scenarios) {
        if (s.system != config.system) {
            throw ConfigError("scenario '" + s.id + "' belongs to '" + s.system + "', config system is '" + config.system + "'");
        }
    }
    return scenarios;
}

std::uint64_t fnv(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Scenario-grouped folds so no scenario appears on both sides of a split.
std::vector<int> grouped_folds(const std::vector<margin::LabeledSample>& data, int folds, std::uint64_t seed) {
    std::vector<std::string> ids;
    std::map<std::string, int> fold_of;
    for (const auto& s : data) {
        if (fold_of.emplace(s.sample.scenario_id, -1).second) ids.push_back(s.sample.scenario_id);
    }
    Rng rng(mix_seed(seed));
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
        std::swap(ids[i - 1], ids[j]);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    std::vector<int> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(fold_of[s.sample.scenario_id]);
    return out;
}

void write_svg(const fs::path& p, const PlotSpec& spec, const std::vector<Series>& series) {
    auto f = open_out(p);
    f << render_svg(spec, series);
}

std::vector<agent::CurvePoint> read_curve_csv(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    if (line != "episode,avg_reward,violations") throw ConfigError("'" + p.string() + "' is not a curves CSV");
    std::vector<agent::CurvePoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        agent::CurvePoint c;
        char comma1 = 0, comma2 = 0;
        std::istringstream row(line);
        if (!(row >> c.episode >> comma1 >> c.avg_reward >> comma2 >> c.violations)) {
            throw ConfigError("malformed row in '" + p.string() + "'");
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

RunManifest cmd_gen(const CommonArgs& common, std::size_t count) {
    Run run(common, "gen");
    const auto scenarios = env::sample_scenarios(run.config.system, common.seed, count, run.config.ranges);
    grid::write_scenarios(run.output("scenarios.json"), scenarios);
    return run.finish();
}

RunManifest cmd_label(const CommonArgs& common, const LabelArgs& args) {
    Run run(common, "label");
    run.manifest.inputs.push_back(args.scenarios.string());
    auto settings = run.config.label;
    if (args.actions_per_scenario) settings.actions_per_scenario = *args.actions_per_scenario;
    if (args.action_grid) settings.action_grid = *args.action_grid;
    if (settings.actions_per_scenario <= 0 && settings.action_grid.empty()) {
        throw ConfigError("actions per scenario must be positive");
    }
    const auto scenarios = scenarios_for(args.scenarios, run.config);
    std::vector<margin::MarginSample> samples;
    if (!settings.action_grid.empty()) {
        for (const auto& s : scenarios) {
            const auto obs = env::observe(s);
            const int n_d = grid::shipped_system(s.system).n_devices();
            for (double a : settings.action_grid) samples.push_back({s.id, obs, env::ControlAction::uniform(n_d, a)});
        }
    } else if (!scenarios.empty()) {
        samples = margin::random_action_samples(scenarios, settings.actions_per_scenario, common.seed, settings.max_shed);
    }

    const auto csv_path = run.output("labeled.csv");
    const auto ckpt_path = run.output("label_checkpoint.json");
    const auto log_path = run.output("label_failures.log");
    std::ostringstream keysrc;
    keysrc << run.manifest.config_digest << '|' << common.seed << '|' << fnv(slurp(args.scenarios)) << '|' << samples.size()
           << '|' << nlohmann::json(settings.action_grid).dump() << '|' << settings.actions_per_scenario;
    const std::string key = hex_digest(fnv(keysrc.str()));

    std::size_t done = 0;
    if (fs::exists(ckpt_path) && fs::exists(csv_path)) {
        const auto ck = read_json(ckpt_path);
        if (ck.value("key", std::string()) == key) {
            done = ck.at("samples_done").get<std::size_t>();
            fs::resize_file(csv_path, ck.at("csv_bytes").get<std::uintmax_t>());
        }
    }
    if (done == 0) {
        auto f = open_out(csv_path);
        const int n_obs = env::Observation::length(grid::shipped_system(run.config.system).n_bus,
                                                   grid::shipped_system(run.config.system).n_gen());
        margin::write_labeled_header(f, n_obs, grid::shipped_system(run.config.system).n_devices());
        open_out(log_path);
    }

    margin::OracleConfig oc;
    oc.boundary.sim = run.config.sim;
    oc.ray.sim = run.config.sim;
    const margin::DasmOracle oracle(oc);
    std::size_t chunks = 0;
    while (done < samples.size()) {
        if (args.max_chunks && chunks >= *args.max_chunks) break;
        const std::size_t end = std::min(samples.size(), done + settings.chunk);
        const std::vector<margin::MarginSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(done),
                                                      samples.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::string> skipped;
        const auto labeled = margin::label_samples(chunk, scenarios, oracle, &skipped);
        {
            auto f = open_out(csv_path, std::ios::app);
            margin::write_labeled_rows(f, labeled);
        }
        if (!skipped.empty()) {
            auto f = open_out(log_path, std::ios::app);
            for (const auto& id : skipped) f << id << ": no stabilising action, sample skipped\n";
        }
        done = end;
        ++chunks;
        auto f = open_out(ckpt_path);
        f << nlohmann::json{{"key", key}, {"samples_done", done}, {"samples_total", samples.size()},
                            {"csv_bytes", fs::file_size(csv_path)}}
                 .dump(2)
          << '\n';
    }
    if (samples.empty()) {
        auto f = open_out(ckpt_path);
        f << nlohmann::json{{"key", key}, {"samples_done", 0}, {"samples_total", 0}, {"csv_bytes", fs::file_size(csv_path)}}
                 .dump(2)
          << '\n';
    }
    return run.finish();
}

RunManifest cmd_train_margin(const CommonArgs& common, const TrainMarginArgs& args) {
    Run run(common, args.mode == MarginMode::Full ? "train-margin --full" : "train-margin --active");
    run.manifest.inputs.push_back(args.data.string());
    const auto& net = grid::shipped_system(run.config.system);
    std::istringstream in(slurp(args.data));
    const auto data = margin::read_labeled_csv(in, net.n_bus, net.n_gen());
    if (data.empty()) throw ConfigError("labeled dataset '" + args.data.string() + "' has no rows");
    const int folds = args.folds.value_or(run.config.estimator.folds);
    if (folds < 2) throw ConfigError("need at least 2 folds");
    const auto fold_of = grouped_folds(data, folds, child_seed(common.seed, 1));

    auto train_opts = run.config.estimator.train;
    train_opts.seed = child_seed(common.seed, 2);
    const double thr = run.config.estimator.epsilon_label;

    auto folds_csv = open_out(run.output("folds.csv"));
    folds_csv << "fold,accuracy,specificity,mae,labels_used\n";
    folds_csv.precision(10);
    std::optional<margin::DuelingEstimator> final_est;
    for (int f = 0; f < folds; ++f) {
        std::vector<margin::LabeledSample> tr, te;
        for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? te : tr).push_back(data[i]);
        if (tr.empty() || te.empty()) throw ConfigError("too few scenarios for " + std::to_string(folds) + " folds");
        if (args.mode == MarginMode::Full) {
            const auto est = margin::full_train(tr, run.config.estimator.shape, train_opts);
            const auto m = margin::evaluate_estimator(est, te, thr);
            folds_csv << f << ',' << m.accuracy << ',' << m.specificity << ',' << m.mae << ',' << tr.size() << '\n';
        } else {
            std::vector<margin::MarginSample> pool;
            pool.reserve(tr.size());
            for (const auto& s : tr) pool.push_back(s.sample);
            const auto* base = pool.data();
            const margin::Labeler labeler = [&tr, base, n = pool.size()](const margin::MarginSample& s)
                -> std::optional<margin::LabeledSample> {
                const auto i = static_cast<std::size_t>(&s - base);
                if (i >= n) return std::nullopt;
                return tr[i];
            };
            auto al = run.config.active;
            al.seed = child_seed(common.seed, 10 + static_cast<std::uint64_t>(f));
            auto res = margin::al_train(pool, labeler, te, al);
            {
                auto a = open_out(run.output("audit_fold" + std::to_string(f) + ".csv"));
                margin::write_audit_csv(a, res.audit);
            }
            if (f == 0) {
                auto a = open_out(run.output("audit.csv"));
                margin::write_audit_csv(a, res.audit);
            }
            const auto m = margin::evaluate_estimator(res.estimator, te, thr);
            folds_csv << f << ',' << m.accuracy << ',' << m.specificity << ',' << m.mae << ',' << res.labeled.size() << '\n';
            if (f == 0) final_est = std::move(res.estimator);
        }
    }
    if (args.mode == MarginMode::Full) final_est = margin::full_train(data, run.config.estimator.shape, train_opts);
    auto ck = open_out(run.output("estimator.json"));
    ck << margin::to_json(*final_est).dump() << '\n';
    return run.finish();
}

RunManifest cmd_train_agent(const CommonArgs& common, const TrainAgentArgs& args) {
    Run run(common, args.with_safety ? "train-agent --with-safety" : "train-agent --no-safety");
    auto sac = run.config.sac;
    sac.seed = common.seed;
    if (args.episodes) sac.episodes = *args.episodes;
    const env::ScmdpEnv env(run.config.system, run.config.sim, run.config.reward);

    std::optional<margin::DuelingEstimator> est;
    std::optional<safety::EstimatorMargin> model;
    agent::TrainHooks hooks;
    hooks.checkpoint_on_failure = run.out / "diagnostic_checkpoint.json";
    if (args.with_safety) {
        if (args.margin.empty()) throw ConfigError("--with-safety needs --margin <estimator.json>");
        run.manifest.inputs.push_back(args.margin.string());
        est = margin::estimator_from_json(read_json(args.margin));
        model.emplace(*est);
        hooks.safety = agent::SafetyHook{&*model, run.config.safety, 0, {}};
    }
    const auto res = agent::train(env, run.config.ranges, sac, hooks);
    {
        auto f = open_out(run.output("policy.json"));
        f << agent::to_json(res.policy).dump() << '\n';
    }
    {
        auto f = open_out(run.output("curves.csv"));
        agent::write_curve_csv(f, res.curve);
    }
    Series s{args.with_safety ? "with safety layer" : "without safety layer", {}, {}, false};
    for (const auto& c : res.curve) {
        s.x.push_back(c.episode);
        s.y.push_back(c.avg_reward);
    }
    write_svg(run.output("curves.svg"), {"Training reward", "episode", "average reward"}, {s});
    return run.finish();
}

RunManifest cmd_evaluate(const CommonArgs& common, const EvaluateArgs& args) {
    agent::EvalOptions opts;
    opts.methods.clear();
    for (const auto& m : args.methods) opts.methods.insert(agent::method_from_string(m));
    Run run(common, "evaluate");
    opts.safety = run.config.safety;
    opts.typical = run.config.typical;
    run.manifest.inputs.push_back(args.policy.string());
    run.manifest.inputs.push_back(args.scenarios.string());

    const env::ScmdpEnv env(run.config.system, run.config.sim, run.config.reward);
    const auto policy = agent::policy_from_json(read_json(args.policy));
    const auto scenarios = scenarios_for(args.scenarios, run.config);

    std::optional<margin::DuelingEstimator> est;
    std::optional<safety::EstimatorMargin> est_model;
    margin::OracleConfig oc;
    oc.boundary.sim = run.config.sim;
    oc.ray.sim = run.config.sim;
    const margin::DasmOracle oracle(oc);
    std::map<std::string, safety::OracleMargin> oracle_models;
    const bool needs_margin = opts.methods.count(agent::Method::Proposed) > 0;
    if (needs_margin && !args.oracle) {
        if (args.margin.empty()) throw ConfigError("method 'proposed' needs --margin <estimator.json> or --oracle");
        run.manifest.inputs.push_back(args.margin.string());
        est = margin::estimator_from_json(read_json(args.margin));
        est_model.emplace(*est);
    }
    const agent::MarginModelFactory factory = [&](const grid::ScenarioConfig& s) -> const safety::MarginModel& {
        if (!args.oracle) return *est_model;
        (void)oracle.scenario_margin(s);  // searches run here, outside the timed decision
        return oracle_models.try_emplace(s.id, oracle, s).first->second;
    };
    const auto report = agent::evaluate(env, policy, factory, scenarios, opts);

    {
        auto f = open_out(run.output("results.csv"));
        agent::write_report_csv(f, report);
    }
    std::vector<Series> scatter;
    for (const auto& row : report.rows) {
        auto f = open_out(run.output("episodes_" + row.method + ".csv"));
        env::write_episode_log(f, row.episodes);
        Series s{row.method, {}, {}, true};
        for (const auto& e : row.episodes) {
            s.x.push_back(e.shed_total);
            s.y.push_back(e.min_v);
        }
        scatter.push_back(std::move(s));
    }
    write_svg(run.output("shed_vs_voltage.svg"), {"Shedding against post-fault voltage", "total shed", "min voltage at check (pu)"},
              scatter);
    if (!args.curves.empty()) {
        std::vector<Series> lines;
        for (const auto& p : args.curves) {
            run.manifest.inputs.push_back(p.string());
            Series s{p.parent_path().filename().string().empty() ? p.stem().string() : p.parent_path().filename().string(), {}, {}, false};
            for (const auto& c : read_curve_csv(p)) {
                s.x.push_back(c.episode);
                s.y.push_back(c.avg_reward);
            }
            lines.push_back(std::move(s));
        }
        write_svg(run.output("reward_curves.svg"), {"Training reward", "episode", "average reward"}, lines);
    }
    return run.finish();
}

RunManifest cmd_trace(const CommonArgs& common, const TraceArgs& args) {
    Run run(common, "trace");
    run.manifest.inputs.push_back(args.margin.string());
    run.manifest.inputs.push_back(args.scenarios.string());
    const auto scenarios = scenarios_for(args.scenarios, run.config);
    if (args.index >= scenarios.size()) throw ConfigError("scenario index out of range");
    const auto& s = scenarios[args.index];
    const auto est = margin::estimator_from_json(read_json(args.margin));
    const safety::EstimatorMargin model(est);
    Eigen::VectorXd a0 = Eigen::VectorXd::Zero(model.action_dim());
    if (args.a0) {
        if (static_cast<int>(args.a0->size()) != model.action_dim()) throw ConfigError("--a0 length differs from device count");
        a0 = Eigen::Map<const Eigen::VectorXd>(args.a0->data(), static_cast<Eigen::Index>(args.a0->size()));
    }
    auto cfg = run.config.safety;
    cfg.record_trace = true;
    const auto res = safety::correct_action(model, env::observe(s).values, a0, cfg);
    {
        auto f = open_out(run.output("trace.csv"));
        safety::write_trace_csv(f, res.trace);
    }
    Series m{"estimated margin", {}, {}, false};
    Series eps{"epsilon", {}, {}, false};
    for (const auto& p : res.trace) {
        m.x.push_back(p.k);
        m.y.push_back(p.margin);
        eps.x.push_back(p.k);
        eps.y.push_back(cfg.epsilon);
    }
    write_svg(run.output("trace.svg"), {"Correction trace for " + s.id, "iteration", "margin"}, {m, eps});
    return run.finish();
}

}  // namespace voltguard::cli

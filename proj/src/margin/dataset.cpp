#include "voltguard/margin/dataset.hpp"

#include "voltguard/error.hpp"
#include "voltguard/util/parallel.hpp"
#include "voltguard/util/random.hpp"

#include <iomanip>
#include <memory>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace voltguard::margin {

void check_consistent(const std::vector<MarginSample>& samples) {
    if (samples.empty()) return;
    const auto n_obs = samples.front().observation.size();
    const auto n_act = samples.front().action.size();
    for (const auto& s : samples) {
        if (s.observation.size() != n_obs || s.action.size() != n_act) {
            throw DimensionError("sample '" + s.scenario_id + "' has inconsistent dimensions");
        }
    }
}

std::vector<MarginSample> random_action_samples(const std::vector<grid::ScenarioConfig>& scenarios,
                                                int count_per_scenario, std::uint64_t seed, double max_shed) {
    if (count_per_scenario <= 0) throw ConfigError("count_per_scenario must be positive");
    if (!(max_shed > 0.0 && max_shed <= 1.0)) throw ConfigError("max_shed must lie in (0, 1]");
    std::vector<env::Observation> obs(scenarios.size());
    parallel_for(scenarios.size(), [&](std::size_t i) { obs[i] = env::observe(scenarios[i]); });
    Rng rng(mix_seed(seed));
    std::vector<MarginSample> out;
    out.reserve(scenarios.size() * static_cast<std::size_t>(count_per_scenario));
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const int n_d = grid::shipped_system(scenarios[i].system).n_devices();
        for (int k = 0; k < count_per_scenario; ++k) {
            Eigen::VectorXd a(n_d);
            for (int j = 0; j < n_d; ++j) a(j) = max_shed * uniform01(rng);
            out.push_back({scenarios[i].id, obs[i], env::ControlAction(a)});
        }
    }
    return out;
}

namespace {

std::unordered_map<std::string, const grid::ScenarioConfig*> index_by_id(const std::vector<grid::ScenarioConfig>& scenarios) {
    std::unordered_map<std::string, const grid::ScenarioConfig*> idx;
    for (const auto& s : scenarios) {
        if (!idx.emplace(s.id, &s).second) throw ConfigError("duplicate scenario id '" + s.id + "'");
    }
    return idx;
}

}  // namespace

std::vector<LabeledSample> label_samples(const std::vector<MarginSample>& samples,
                                         const std::vector<grid::ScenarioConfig>& scenarios, const DasmOracle& oracle,
                                         std::vector<std::string>* skipped, unsigned threads) {
    check_consistent(samples);
    const auto idx = index_by_id(scenarios);
    std::vector<std::optional<LabeledSample>> slots(samples.size());
    parallel_for(
        samples.size(),
        [&](std::size_t i) {
            const auto it = idx.find(samples[i].scenario_id);
            if (it == idx.end()) throw ConfigError("sample references unknown scenario '" + samples[i].scenario_id + "'");
            try {
                const double d = oracle.margin(*it->second, samples[i].action.shed);
                slots[i] = LabeledSample{samples[i], d, margin_is_stable(d)};
            } catch (const NoFeasibleAction&) {
            } catch (const InfeasibleScenario&) {
            }
        },
        threads);
    std::vector<LabeledSample> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            out.push_back(std::move(*slots[i]));
        } else if (skipped != nullptr) {
            skipped->push_back(samples[i].scenario_id);
        }
    }
    return out;
}

Labeler oracle_labeler(const DasmOracle& oracle, const std::vector<grid::ScenarioConfig>& scenarios) {
    auto idx = std::make_shared<std::unordered_map<std::string, const grid::ScenarioConfig*>>(index_by_id(scenarios));
    return [&oracle, idx](const MarginSample& s) -> std::optional<LabeledSample> {
        const auto it = idx->find(s.scenario_id);
        if (it == idx->end()) return std::nullopt;
        try {
            const double d = oracle.margin(*it->second, s.action.shed);
            return LabeledSample{s, d, margin_is_stable(d)};
        } catch (const Error&) {
            return std::nullopt;
        }
    };
}

void write_labeled_header(std::ostream& out, Eigen::Index n_obs, Eigen::Index n_act) {
    out << "scenario_id";
    for (Eigen::Index i = 0; i < n_obs; ++i) out << ",obs_" << i;
    for (Eigen::Index i = 0; i < n_act; ++i) out << ",act_" << i;
    out << ",d,stable\n";
}

void write_labeled_rows(std::ostream& out, const std::vector<LabeledSample>& samples) {
    if (samples.empty()) return;
    const auto n_obs = samples.front().sample.observation.size();
    const auto n_act = samples.front().sample.action.size();
    const auto old = out.precision(17);
    for (const auto& s : samples) {
        if (s.sample.observation.size() != n_obs || s.sample.action.size() != n_act) {
            throw DimensionError("labeled samples have inconsistent dimensions");
        }
        out << s.sample.scenario_id;
        for (Eigen::Index i = 0; i < n_obs; ++i) out << ',' << s.sample.observation.values(i);
        for (Eigen::Index i = 0; i < n_act; ++i) out << ',' << s.sample.action.shed(i);
        out << ',' << s.d << ',' << (s.stable ? 1 : 0) << '\n';
    }
    out.precision(old);
}

void write_labeled_csv(std::ostream& out, const std::vector<LabeledSample>& samples) {
    write_labeled_header(out, samples.empty() ? 0 : samples.front().sample.observation.size(),
                         samples.empty() ? 0 : samples.front().sample.action.size());
    write_labeled_rows(out, samples);
}

std::vector<LabeledSample> read_labeled_csv(std::istream& in, int n_bus, int n_gen) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("labeled CSV is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const int n_obs = env::Observation::length(n_bus, n_gen);
    int n_act = 0;
    for (const auto& h : header) n_act += h.rfind("act_", 0) == 0 ? 1 : 0;
    if (header.size() != static_cast<std::size_t>(1 + n_obs + n_act + 2) || header.front() != "scenario_id") {
        throw ConfigError("labeled CSV header does not match the system dimensions");
    }
    std::vector<LabeledSample> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) throw ConfigError("labeled CSV row " + std::to_string(row) + " has wrong width");
        try {
            LabeledSample s;
            s.sample.scenario_id = cells[0];
            s.sample.observation.n_bus = n_bus;
            s.sample.observation.n_gen = n_gen;
            s.sample.observation.values.resize(n_obs);
            for (int i = 0; i < n_obs; ++i) s.sample.observation.values(i) = std::stod(cells[static_cast<std::size_t>(1 + i)]);
            Eigen::VectorXd a(n_act);
            for (int i = 0; i < n_act; ++i) a(i) = std::stod(cells[static_cast<std::size_t>(1 + n_obs + i)]);
            s.sample.action = env::ControlAction(a);
            s.d = std::stod(cells[cells.size() - 2]);
            s.stable = cells.back() == "1";
            out.push_back(std::move(s));
        } catch (const std::logic_error&) {
            throw ConfigError("labeled CSV row " + std::to_string(row) + " has a malformed number");
        }
    }
    return out;
}

}  // namespace voltguard::margin

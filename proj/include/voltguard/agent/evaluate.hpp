#pragma once

#include "voltguard/agent/baselines.hpp"
#include "voltguard/agent/policy.hpp"
#include "voltguard/env/scmdp.hpp"
#include "voltguard/safety/projection.hpp"

#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace voltguard::agent {

enum class Method { Proposed, Raw, Typical, Traversal };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct EvalRow {
    std::string method;
    double avg_reward = 0.0;
    double time_ms = 0.0;  ///< wall-clock per decision, simulation of the outcome excluded
    int violations = 0;
    double avg_dv2 = 0.0;
    double avg_pls = 0.0;  ///< average total shed
    std::size_t scenarios = 0;
    std::vector<env::EpisodeLogRow> episodes;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    [[nodiscard]] const EvalRow& row(Method m) const;
};

struct EvalOptions {
    std::set<Method> methods{Method::Proposed, Method::Raw, Method::Typical, Method::Traversal};
    safety::SafetyConfig safety{};
    TypicalLsConfig typical{};
    double traversal_step = 0.2;
};

/// Builds the margin model used for one scenario's correction. Lets callers swap the oracle in.
using MarginModelFactory = std::function<const safety::MarginModel&(const grid::ScenarioConfig&)>;

EvalReport evaluate(const env::ScmdpEnv& env, const PolicyNet& policy, const MarginModelFactory& margin_model,
                    const std::vector<grid::ScenarioConfig>& scenarios, const EvalOptions& options = {});

/// CSV `method,avg_reward,time_ms,violations,avg_dv2,avg_pls`.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace voltguard::agent

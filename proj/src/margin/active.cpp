#include "voltguard/margin/active.hpp"

#include "voltguard/error.hpp"
#include "voltguard/util/random.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace voltguard::margin {

void ALConfig::validate() const {
    if (initial_pool <= 0 || query_batch <= 0) throw ConfigError("AL pool sizes N and M must be positive");
    if (!(target_accuracy > 0.5 && target_accuracy <= 1.0)) throw ConfigError("target accuracy must lie in (0.5, 1]");
    if (max_rounds <= 0 || steps_per_round < 0) throw ConfigError("invalid AL round budget");
}

namespace {

void label_into(ALResult& result, const std::vector<MarginSample>& pool, const std::vector<std::size_t>& picks,
                const Labeler& labeler) {
    for (std::size_t i : picks) {
        result.queried.push_back(i);
        if (auto l = labeler(pool[i])) {
            result.labeled.push_back(std::move(*l));
        } else {
            result.skipped.push_back(pool[i].scenario_id);
        }
    }
}

}  // namespace

ALResult al_train(const std::vector<MarginSample>& pool, const Labeler& labeler, const std::vector<LabeledSample>& test,
                  const ALConfig& config) {
    config.validate();
    if (pool.size() < static_cast<std::size_t>(config.initial_pool + config.query_batch)) {
        throw ConfigError("AL pool must hold at least N + M samples");
    }
    if (test.empty()) throw ConfigError("AL needs a labeled test set");
    check_consistent(pool);

    std::vector<Eigen::VectorXd> pool_obs;
    pool_obs.reserve(pool.size());
    for (const auto& s : pool) pool_obs.push_back(s.observation.values);
    ALResult result;
    result.estimator = DuelingEstimator(static_cast<int>(pool.front().observation.size()),
                                        static_cast<int>(pool.front().action.size()), config.shape, config.seed,
                                        Standardizer::fit(pool_obs));

    Rng rng(mix_seed(config.seed ^ 0xa1a1a1a1ULL));
    std::vector<std::size_t> unlabeled(pool.size());
    std::iota(unlabeled.begin(), unlabeled.end(), std::size_t{0});
    auto take_random = [&](std::size_t m) {
        std::vector<std::size_t> picks;
        for (std::size_t k = 0; k < m && !unlabeled.empty(); ++k) {
            const auto j = std::min(unlabeled.size() - 1,
                                    static_cast<std::size_t>(uniform01(rng) * static_cast<double>(unlabeled.size())));
            picks.push_back(unlabeled[j]);
            unlabeled[j] = unlabeled.back();
            unlabeled.pop_back();
        }
        return picks;
    };

    label_into(result, pool, take_random(static_cast<std::size_t>(config.initial_pool)), labeler);
    TrainOptions train = config.train;
    train.steps = config.steps_per_round;
    for (int round = 1; round <= config.max_rounds; ++round) {
        if (!result.labeled.empty()) {
            train.seed = child_seed(config.seed, static_cast<std::uint64_t>(round));
            fit(result.estimator, result.labeled, train);
        }
        const auto m = evaluate_estimator(result.estimator, test, config.epsilon_label);
        result.audit.push_back({round, result.labeled.size(), m.accuracy, m.specificity});
        if (m.accuracy >= config.target_accuracy) {
            result.reached_target = true;
            break;
        }
        if (round == config.max_rounds || unlabeled.empty()) break;

        const auto batch = std::min(unlabeled.size(), static_cast<std::size_t>(config.query_batch));
        std::vector<std::size_t> picks;
        if (config.strategy == QueryStrategy::Random) {
            picks = take_random(batch);
        } else {
            Eigen::MatrixXd obs(pool.front().observation.size(), static_cast<Eigen::Index>(unlabeled.size()));
            Eigen::MatrixXd act(pool.front().action.size(), static_cast<Eigen::Index>(unlabeled.size()));
            for (std::size_t k = 0; k < unlabeled.size(); ++k) {
                obs.col(static_cast<Eigen::Index>(k)) = pool[unlabeled[k]].observation.values;
                act.col(static_cast<Eigen::Index>(k)) = pool[unlabeled[k]].action.shed;
            }
            const Eigen::VectorXd est = result.estimator.estimate_batch(obs, act);
            std::vector<std::size_t> order(unlabeled.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            // ties keep pool order so the ranking is deterministic
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                return uncertainty_from_margin(est(static_cast<Eigen::Index>(x))) >
                       uncertainty_from_margin(est(static_cast<Eigen::Index>(y)));
            });
            order.resize(batch);
            std::vector<bool> taken(unlabeled.size(), false);
            for (std::size_t k : order) {
                picks.push_back(unlabeled[k]);
                taken[k] = true;
            }
            std::vector<std::size_t> rest;
            rest.reserve(unlabeled.size() - batch);
            for (std::size_t k = 0; k < unlabeled.size(); ++k) {
                if (!taken[k]) rest.push_back(unlabeled[k]);
            }
            unlabeled.swap(rest);
        }
        label_into(result, pool, picks, labeler);
    }
    return result;
}

void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows) {
    out << "round,labels_used,test_acc,test_spe\n";
    for (const auto& r : rows) out << r.round << ',' << r.labels_used << ',' << r.test_acc << ',' << r.test_spe << '\n';
}

std::size_t labels_to_reach(const std::vector<AuditRow>& rows, double target) {
    for (const auto& r : rows) {
        if (r.test_acc >= target) return r.labels_used;
    }
    return 0;
}

}  // namespace voltguard::margin

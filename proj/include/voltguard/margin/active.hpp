#pragma once

#include "voltguard/margin/estimator.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace voltguard::margin {

enum class QueryStrategy { Uncertainty, Random };

struct ALConfig {
    int initial_pool = 100;      ///< N, randomly chosen seed labels
    int query_batch = 50;        ///< M, labels queried per round
    double epsilon_label = 0.0;  ///< stability-class threshold on margins
    int max_rounds = 40;
    double target_accuracy = 0.95;
    int steps_per_round = 400;
    QueryStrategy strategy = QueryStrategy::Uncertainty;
    std::uint64_t seed = 1;
    EstimatorShape shape{};
    TrainOptions train{};  ///< steps is ignored in favour of steps_per_round

    void validate() const;
};

struct AuditRow {
    int round = 0;
    std::size_t labels_used = 0;
    double test_acc = 0.0;
    double test_spe = 0.0;
};

struct ALResult {
    DuelingEstimator estimator;
    std::vector<AuditRow> audit;
    std::vector<LabeledSample> labeled;
    std::vector<std::size_t> queried;  ///< pool indices in query order, seed set first
    std::vector<std::string> skipped;  ///< ids whose labeling failed
    bool reached_target = false;
};

/// Seed set, label, train, rank the unlabeled pool by uncertainty, query the top M, and repeat
/// until the test accuracy reaches the target or the round budget runs out.
ALResult al_train(const std::vector<MarginSample>& pool, const Labeler& labeler, const std::vector<LabeledSample>& test,
                  const ALConfig& config);

/// CSV `round,labels_used,test_acc,test_spe`.
void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows);

/// Smallest label count at which the audit first reports accuracy >= target, or 0 when never.
std::size_t labels_to_reach(const std::vector<AuditRow>& rows, double target);

}  // namespace voltguard::margin

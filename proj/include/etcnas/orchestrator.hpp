#pragma once

// The trial loop binding controllers to the engine: child evaluation, full
// vs partial training, budget accounting and best-model finalization.

#include <cstdint>
#include <string>
#include <vector>

#include "etcnas/controllers.hpp"
#include "etcnas/dataset.hpp"
#include "etcnas/engine.hpp"
#include "etcnas/metrics.hpp"
#include "etcnas/space.hpp"

namespace etcnas {

struct SearchJob {
    SpaceConfig space;
    StrategyKind strategy = StrategyKind::RandomSearch;
    int64_t trials = 100;
    int64_t child_epochs = 40;       // 10 when partial
    bool partial = false;
    int64_t continuation_epochs = 30; // extra epochs for the best child
    ByteDataset dataset;
    double validation_fraction = 0.2; // carved from the training split
    int64_t batch_size = 128;
    uint64_t seed = 0;
    int64_t workers = 1;
    std::string report_path; // incremental trial lines; enables resume
    std::string checkpoint_path;
};

struct BudgetLedger {
    int64_t child_epochs_total = 0;
    int64_t continuation_epochs = 0;
    int64_t total() const { return child_epochs_total + continuation_epochs; }
};

struct TopNEntry {
    int64_t n = 0;
    double mean_reward = 0.0;
};

struct SearchOutcome {
    SearchReport report;
    DecisionSequence best_sequence;
    int64_t best_trial_index = -1;
    double best_reward = 0.0;             // search-validation accuracy
    double partial_estimate = 0.0;        // best child's reward before continuation
    double post_continuation_accuracy = 0.0; // after extra epochs (partial mode)
    Scores test_scores;                   // on the held-out test split
    ParamCount best_params;
    std::vector<TopNEntry> top_n_summary; // N in {1, 5, 10, 20, 30}
    BudgetLedger budget;
};

// decode -> init -> train on the search-train split; reward = accuracy
// fraction on the search-validation split. Decode/train failures produce a
// reward-0 record so the search continues.
TrialRecord evaluate_child(const DecisionSequence& seq, const SpaceConfig& space,
                           const Tensor& x_train,
                           const std::vector<int64_t>& y_train,
                           const Tensor& x_val,
                           const std::vector<int64_t>& y_val,
                           int64_t child_epochs, int64_t batch_size,
                           uint64_t seed);

SearchOutcome run_job(const SearchJob& job);

struct EpochSweepRow {
    int64_t epochs = 0;
    std::vector<double> top10_rewards; // best-first
    double mean = 0.0;
};

// Reruns the search at each epoch budget and reports the top-10 reward
// distribution per budget.
std::vector<EpochSweepRow> epoch_sweep(const SearchJob& job,
                                       const std::vector<int64_t>& epoch_grid);

// Human-readable report with the top-N table, budget ledger and the fixed
// literature reference numbers for context.
std::string format_outcome(const SearchOutcome& outcome);

} // namespace etcnas

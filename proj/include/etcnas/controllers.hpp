#pragma once

// The four search strategies behind one interface: random search,
// REINFORCE-with-baseline, UCT tree search with surrogate rollouts, and
// aging-tournament evolution.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "etcnas/graph.hpp"
#include "etcnas/policy.hpp"
#include "etcnas/space.hpp"
#include "etcnas/surrogate.hpp"

namespace etcnas {

struct TrialRecord {
    int64_t trial_index = 0;
    DecisionSequence sequence;
    double reward = 0.0; // validation accuracy fraction in [0, 1]
    ParamCount param_count;
    double wall_time_s = 0.0;
};

struct SearchReport {
    std::vector<TrialRecord> trials;
    SpaceConfig space;
    std::string strategy;
    int64_t budget = 0;
};

enum class StrategyKind { RandomSearch, Reinforce, Mcts, Evolution };

StrategyKind strategy_from_name(const std::string& name);
const char* strategy_name(StrategyKind s);

class SearchStrategy {
public:
    virtual ~SearchStrategy() = default;
    virtual DecisionSequence propose() = 0;
    virtual void observe(const TrialRecord& record) = 0;
    // RL and the tree search require rewards in proposal order
    virtual bool requires_ordered_observation() const { return false; }
};

std::unique_ptr<SearchStrategy> make_strategy(StrategyKind kind,
                                              const SpaceConfig& space,
                                              uint64_t seed);

// ---- concrete strategies (exposed for unit tests) ---------------------------

class RandomSearchStrategy : public SearchStrategy {
public:
    RandomSearchStrategy(const SpaceConfig& space, uint64_t seed)
        : space_(space), rng_(seed) {}
    DecisionSequence propose() override { return sample_random(space_, rng_); }
    void observe(const TrialRecord&) override {}

private:
    SpaceConfig space_;
    std::mt19937_64 rng_;
};

class ReinforceStrategy : public SearchStrategy {
public:
    ReinforceStrategy(const SpaceConfig& space, uint64_t seed);
    DecisionSequence propose() override;
    void observe(const TrialRecord& record) override;
    bool requires_ordered_observation() const override { return true; }

    double baseline() const { return baseline_; }
    const RecurrentPolicyCell& policy() const { return policy_; }
    double baseline_decay = 0.999;

private:
    SpaceConfig space_;
    RecurrentPolicyCell policy_;
    std::mt19937_64 rng_;
    double baseline_ = 0.0;
    std::optional<DecisionSequence> pending_;
};

class EvolutionStrategy : public SearchStrategy {
public:
    EvolutionStrategy(const SpaceConfig& space, uint64_t seed)
        : space_(space), rng_(seed) {}
    DecisionSequence propose() override;
    void observe(const TrialRecord& record) override;

    static constexpr size_t kPopulationCap = 20;
    static constexpr size_t kTournamentSize = 5;
    const std::deque<std::pair<DecisionSequence, double>>& population() const {
        return population_;
    }
    DecisionSequence mutate(const DecisionSequence& parent);

private:
    SpaceConfig space_;
    std::mt19937_64 rng_;
    std::deque<std::pair<DecisionSequence, double>> population_; // aging queue
};

class MctsStrategy : public SearchStrategy {
public:
    MctsStrategy(const SpaceConfig& space, uint64_t seed);
    DecisionSequence propose() override;
    void observe(const TrialRecord& record) override;
    bool requires_ordered_observation() const override { return true; }

    static constexpr int64_t kExpansionCap = 10;
    static constexpr int64_t kRolloutSamples = 10;
    static constexpr int64_t kSurrogateRefresh = 10;
    double exploration_c = std::sqrt(2.0);

    struct Node {
        int64_t visits = 0;
        double reward_sum = 0.0;
        std::map<int64_t, int64_t> children; // choice value -> node index
        double mean() const {
            return visits ? reward_sum / static_cast<double>(visits) : 0.0;
        }
    };
    const std::vector<Node>& tree() const { return nodes_; }
    const SurrogateModel& surrogate() const { return surrogate_; }

private:
    SpaceConfig space_;
    std::mt19937_64 rng_;
    std::vector<Node> nodes_; // 0 = root
    SurrogateModel surrogate_;
    std::vector<DecisionSequence> observed_x_;
    std::vector<double> observed_y_;
    std::optional<std::pair<DecisionSequence, std::vector<int64_t>>> pending_;
};

// ---- the search loop --------------------------------------------------------

using Evaluator = std::function<TrialRecord(const DecisionSequence&)>;

// propose -> evaluate -> observe for `trials` iterations. When report_path is
// non-empty every trial is appended as one line so interrupted searches can
// resume; pre-existing lines are replayed into the strategy before searching.
// Strategies that accept out-of-order rewards evaluate up to `workers`
// proposals concurrently; ordered strategies always run one at a time.
SearchReport run_search(StrategyKind strategy, const SpaceConfig& space,
                        const Evaluator& evaluator, int64_t trials,
                        uint64_t seed, const std::string& report_path = "",
                        int64_t workers = 1);

// mean reward of the n best trials, ties broken toward the earlier trial
double top_n(const SearchReport& report, int64_t n);

std::string trial_to_line(const TrialRecord& r);
TrialRecord trial_from_line(const std::string& line);
std::vector<TrialRecord> read_report_lines(const std::string& path);

} // namespace etcnas

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <set>

#include "etcnas/controllers.hpp"

using namespace etcnas;

namespace {

SpaceConfig tiny_space() {
    SpaceConfig s;
    s.nodes_per_cell = 2;
    s.num_cells = 1;
    return s;
}

// reward = fraction of op slots choosing SepConv3 (value 1)
double rigged_reward(const DecisionSequence& seq) {
    int64_t ops = 0, hits = 0;
    for (size_t i = 0; i < seq.size(); ++i)
        if (is_op_position(static_cast<int64_t>(i))) {
            ++ops;
            hits += (seq[i] == 1);
        }
    return static_cast<double>(hits) / static_cast<double>(ops);
}

Evaluator rigged_evaluator() {
    return [](const DecisionSequence& seq) {
        TrialRecord r;
        r.reward = rigged_reward(seq);
        return r;
    };
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p) : path(p) {
        std::remove(path.c_str());
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("strategy names round-trip") {
    CHECK(strategy_from_name("rs") == StrategyKind::RandomSearch);
    CHECK(strategy_from_name("rl") == StrategyKind::Reinforce);
    CHECK(strategy_from_name("mcts") == StrategyKind::Mcts);
    CHECK(strategy_from_name("ea") == StrategyKind::Evolution);
    CHECK_THROWS_AS(strategy_from_name("sa"), UsageError);
    for (auto k : {StrategyKind::RandomSearch, StrategyKind::Reinforce,
                   StrategyKind::Mcts, StrategyKind::Evolution})
        CHECK(strategy_from_name(strategy_name(k)) == k);
}

TEST_CASE("trial lines round-trip") {
    TrialRecord r;
    r.trial_index = 17;
    r.sequence = {0, 4, 0, 2, 1, 3, 0, 1};
    r.reward = 0.8125;
    r.param_count = {1234, 1200};
    r.wall_time_s = 2.5;
    TrialRecord b = trial_from_line(trial_to_line(r));
    CHECK(b.trial_index == r.trial_index);
    CHECK(b.sequence == r.sequence);
    CHECK(b.reward == doctest::Approx(r.reward));
    CHECK(b.param_count.total == 1234);
    CHECK(b.param_count.trainable == 1200);
}

TEST_CASE("top_n averages the best rewards, ties toward earlier trials") {
    SearchReport rep;
    for (int i = 0; i < 5; ++i) {
        TrialRecord r;
        r.trial_index = i;
        r.reward = (i == 2 || i == 4) ? 0.9 : 0.1 * i;
        rep.trials.push_back(r);
    }
    CHECK(top_n(rep, 1) == doctest::Approx(0.9));
    CHECK(top_n(rep, 2) == doctest::Approx(0.9));
    CHECK(top_n(rep, 3) == doctest::Approx((0.9 + 0.9 + 0.3) / 3));
    CHECK_THROWS_AS(top_n(rep, 0), NOutOfRange);
    CHECK_THROWS_AS(top_n(rep, 6), NOutOfRange);
}

TEST_CASE("random search is reproducible per seed") {
    SpaceConfig s = tiny_space();
    auto a = run_search(StrategyKind::RandomSearch, s, rigged_evaluator(), 20,
                        5);
    auto b = run_search(StrategyKind::RandomSearch, s, rigged_evaluator(), 20,
                        5);
    REQUIRE(a.trials.size() == 20);
    for (int i = 0; i < 20; ++i) {
        CHECK(a.trials[i].sequence == b.trials[i].sequence);
        CHECK(a.trials[i].reward == b.trials[i].reward);
    }
}

TEST_CASE("interrupted random search resumes to the identical report") {
    SpaceConfig s = tiny_space();
    TempFile f("resume_rs.tsv");
    auto full = run_search(StrategyKind::RandomSearch, s, rigged_evaluator(),
                           30, 9);
    // first leg: 12 trials persisted
    run_search(StrategyKind::RandomSearch, s, rigged_evaluator(), 12, 9,
               f.path);
    // second leg resumes from the file
    auto resumed = run_search(StrategyKind::RandomSearch, s,
                              rigged_evaluator(), 30, 9, f.path);
    REQUIRE(resumed.trials.size() == 30);
    for (int i = 0; i < 30; ++i)
        CHECK(resumed.trials[i].sequence == full.trials[i].sequence);
}

TEST_CASE("parallel evaluation keeps the trial stream deterministic") {
    SpaceConfig s = tiny_space();
    auto serial = run_search(StrategyKind::RandomSearch, s, rigged_evaluator(),
                             24, 3, "", 1);
    auto parallel = run_search(StrategyKind::RandomSearch, s,
                               rigged_evaluator(), 24, 3, "", 4);
    REQUIRE(parallel.trials.size() == 24);
    for (int i = 0; i < 24; ++i) {
        CHECK(parallel.trials[i].sequence == serial.trials[i].sequence);
        CHECK(parallel.trials[i].reward == serial.trials[i].reward);
    }
}

TEST_CASE("ordered strategies reject out-of-order observations") {
    SpaceConfig s = tiny_space();
    for (auto kind : {StrategyKind::Reinforce, StrategyKind::Mcts}) {
        auto strat = make_strategy(kind, s, 1);
        CHECK(strat->requires_ordered_observation());
        auto s1 = strat->propose();
        TrialRecord r;
        r.sequence = strat->propose(); // a different proposal
        if (r.sequence == s1) continue;
        r.reward = 0.5;
        TrialRecord wrong;
        wrong.sequence = s1;
        wrong.reward = 0.5;
        strat->observe(r); // matches the latest proposal
        CHECK_THROWS_AS(strat->observe(wrong), OutOfOrderObservation);
    }
}

TEST_CASE("evolution: mutation changes exactly one position") {
    SpaceConfig s = tiny_space();
    EvolutionStrategy ea(s, 7);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        auto parent = sample_random(s, rng);
        auto child = ea.mutate(parent);
        int64_t diffs = 0;
        for (size_t p = 0; p < parent.size(); ++p)
            if (parent[p] != child[p]) {
                ++diffs;
                CHECK(decision_arity(s, static_cast<int64_t>(p)) > 1);
                CHECK(child[p] >= 0);
                CHECK(child[p] < decision_arity(s, static_cast<int64_t>(p)));
            }
        CHECK(diffs == 1);
    }
}

TEST_CASE("evolution: aging queue caps the population") {
    SpaceConfig s = tiny_space();
    EvolutionStrategy ea(s, 2);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        TrialRecord r;
        r.sequence = sample_random(s, rng);
        r.reward = 0.01 * i;
        ea.observe(r);
        CHECK(ea.population().size() <=
              EvolutionStrategy::kPopulationCap);
    }
    CHECK(ea.population().size() == EvolutionStrategy::kPopulationCap);
    // oldest entries were evicted: the first surviving reward is from trial 30
    CHECK(ea.population().front().second == doctest::Approx(0.30));
}

TEST_CASE("evolution improves on the rigged reward") {
    SpaceConfig s = tiny_space();
    auto rep =
        run_search(StrategyKind::Evolution, s, rigged_evaluator(), 120, 11);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 20; ++i) early += rep.trials[i].reward;
    for (int i = 100; i < 120; ++i) late += rep.trials[i].reward;
    CHECK(late > early);
}

TEST_CASE("mcts tree grows along visited paths and uses the surrogate") {
    SpaceConfig s = tiny_space();
    MctsStrategy mcts(s, 4);
    for (int i = 0; i < 25; ++i) {
        auto seq = mcts.propose();
        TrialRecord r;
        r.sequence = seq;
        r.reward = rigged_reward(seq);
        mcts.observe(r);
    }
    CHECK(mcts.tree().size() > 10);
    CHECK(mcts.tree()[0].visits == 25);
    CHECK(mcts.surrogate().trained()); // refit after 10 and 20 observations
}

TEST_CASE("reinforce learns the rigged reward") {
    SpaceConfig s = tiny_space();
    auto rl =
        run_search(StrategyKind::Reinforce, s, rigged_evaluator(), 150, 21);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 30; ++i) early += rl.trials[i].reward;
    for (int i = 120; i < 150; ++i) late += rl.trials[i].reward;
    CHECK(late / 30.0 > early / 30.0);
}

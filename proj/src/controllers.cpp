#include "etcnas/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace etcnas {

StrategyKind strategy_from_name(const std::string& name) {
    if (name == "rs" || name == "random") return StrategyKind::RandomSearch;
    if (name == "rl" || name == "reinforce") return StrategyKind::Reinforce;
    if (name == "mcts") return StrategyKind::Mcts;
    if (name == "ea" || name == "evolution") return StrategyKind::Evolution;
    throw UsageError("unknown strategy: " + name +
                     " (expected rs, rl, mcts or ea)");
}

const char* strategy_name(StrategyKind s) {
    switch (s) {
    case StrategyKind::RandomSearch: return "rs";
    case StrategyKind::Reinforce: return "rl";
    case StrategyKind::Mcts: return "mcts";
    case StrategyKind::Evolution: return "ea";
    }
    return "?";
}

std::unique_ptr<SearchStrategy> make_strategy(StrategyKind kind,
                                              const SpaceConfig& space,
                                              uint64_t seed) {
    switch (kind) {
    case StrategyKind::RandomSearch:
        return std::make_unique<RandomSearchStrategy>(space, seed);
    case StrategyKind::Reinforce:
        return std::make_unique<ReinforceStrategy>(space, seed);
    case StrategyKind::Mcts:
        return std::make_unique<MctsStrategy>(space, seed);
    case StrategyKind::Evolution:
        return std::make_unique<EvolutionStrategy>(space, seed);
    }
    throw UsageError("bad strategy kind");
}

// ---- REINFORCE with baseline -------------------------------------------------

ReinforceStrategy::ReinforceStrategy(const SpaceConfig& space, uint64_t seed)
    : space_(space), policy_(space, seed), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {}

DecisionSequence ReinforceStrategy::propose() {
    auto seq = policy_.sample(rng_);
    pending_ = seq;
    return seq;
}

void ReinforceStrategy::observe(const TrialRecord& record) {
    if (!pending_ || record.sequence != *pending_)
        throw OutOfOrderObservation(
            "REINFORCE requires observations in proposal order");
    pending_.reset();
    double advantage = record.reward - baseline_;
    baseline_ = baseline_decay * baseline_ +
                (1.0 - baseline_decay) * record.reward;
    policy_.reinforce_update(record.sequence, advantage);
}

// ---- aging-tournament evolution ----------------------------------------------

DecisionSequence EvolutionStrategy::mutate(const DecisionSequence& parent) {
    // resample exactly one position with arity > 1 to a different value
    std::vector<int64_t> mutable_positions;
    for (int64_t p = 0; p < space_.sequence_length(); ++p)
        if (decision_arity(space_, p) > 1) mutable_positions.push_back(p);
    std::uniform_int_distribution<size_t> pick(0, mutable_positions.size() - 1);
    int64_t pos = mutable_positions[pick(rng_)];
    int64_t arity = decision_arity(space_, pos);
    std::uniform_int_distribution<int64_t> val(0, arity - 2);
    int64_t v = val(rng_);
    if (v >= parent[pos]) ++v; // uniform over the other values
    DecisionSequence child = parent;
    child[pos] = v;
    return child;
}

DecisionSequence EvolutionStrategy::propose() {
    if (population_.size() < kPopulationCap)
        return sample_random(space_, rng_);
    // tournament: sample 5, best becomes the parent
    std::uniform_int_distribution<size_t> pick(0, population_.size() - 1);
    size_t best = pick(rng_);
    for (size_t i = 1; i < kTournamentSize; ++i) {
        size_t j = pick(rng_);
        if (population_[j].second > population_[best].second) best = j;
    }
    return mutate(population_[best].first);
}

void EvolutionStrategy::observe(const TrialRecord& record) {
    population_.emplace_back(record.sequence, record.reward);
    while (population_.size() > kPopulationCap) population_.pop_front();
}

// ---- UCT tree search with surrogate rollouts -----------------------------------

MctsStrategy::MctsStrategy(const SpaceConfig& space, uint64_t seed)
    : space_(space), rng_(seed) {
    nodes_.push_back({});
}

DecisionSequence MctsStrategy::propose() {
    DecisionSequence prefix;
    std::vector<int64_t> path{0};
    int64_t node = 0;
    int64_t position = 0;
    int64_t seq_len = space_.sequence_length();

    while (position < seq_len) {
        Node& cur = nodes_[node];
        int64_t arity = decision_arity(space_, position);
        int64_t cap = std::min<int64_t>(arity, kExpansionCap);
        if (static_cast<int64_t>(cur.children.size()) < cap) {
            // expand an untried child
            std::vector<int64_t> untried;
            for (int64_t v = 0; v < arity; ++v)
                if (!cur.children.count(v)) untried.push_back(v);
            std::uniform_int_distribution<size_t> pick(0, untried.size() - 1);
            int64_t v = untried[pick(rng_)];
            int64_t child = static_cast<int64_t>(nodes_.size());
            nodes_.push_back({});
            nodes_[node].children[v] = child;
            prefix.push_back(v);
            path.push_back(child);
            ++position;
            break;
        }
        // fully expanded: descend by UCT score
        double log_n = std::log(std::max<int64_t>(cur.visits, 1));
        double best_score = -1.0;
        int64_t best_v = -1;
        for (const auto& [v, child_idx] : cur.children) {
            const Node& ch = nodes_[child_idx];
            double score =
                ch.visits == 0
                    ? std::numeric_limits<double>::infinity()
                    : ch.mean() + exploration_c *
                                      std::sqrt(log_n /
                                                static_cast<double>(ch.visits));
            if (score > best_score) {
                best_score = score;
                best_v = v;
            }
        }
        prefix.push_back(best_v);
        node = cur.children.at(best_v);
        path.push_back(node);
        ++position;
    }

    // rollout: surrogate-ranked random completions of the suffix
    DecisionSequence best_seq;
    double best_score = -1.0;
    for (int64_t s = 0; s < kRolloutSamples; ++s) {
        DecisionSequence cand = prefix;
        for (int64_t p = position; p < seq_len; ++p) {
            std::uniform_int_distribution<int64_t> d(
                0, decision_arity(space_, p) - 1);
            cand.push_back(d(rng_));
        }
        double score = surrogate_.trained()
                           ? surrogate_.predict(cand)
                           : std::uniform_real_distribution<double>(0, 1)(rng_);
        if (score > best_score) {
            best_score = score;
            best_seq = cand;
        }
        if (position >= seq_len) break; // nothing left to sample
    }
    pending_ = {best_seq, path};
    return best_seq;
}

void MctsStrategy::observe(const TrialRecord& record) {
    if (!pending_ || record.sequence != pending_->first)
        throw OutOfOrderObservation(
            "tree search requires observations in proposal order");
    for (int64_t idx : pending_->second) {
        nodes_[idx].visits += 1;
        nodes_[idx].reward_sum += record.reward;
    }
    pending_.reset();
    observed_x_.push_back(record.sequence);
    observed_y_.push_back(record.reward);
    if (observed_x_.size() >= 2 &&
        observed_x_.size() % kSurrogateRefresh == 0)
        surrogate_ = SurrogateModel::fit(observed_x_, observed_y_);
}

// ---- search loop ---------------------------------------------------------------

std::string trial_to_line(const TrialRecord& r) {
    std::ostringstream os;
    os << r.trial_index << '\t';
    for (size_t i = 0; i < r.sequence.size(); ++i)
        os << (i ? "," : "") << r.sequence[i];
    os << '\t' << r.reward << '\t' << r.param_count.total << '\t'
       << r.param_count.trainable << '\t' << r.wall_time_s;
    return os.str();
}

TrialRecord trial_from_line(const std::string& line) {
    std::istringstream is(line);
    TrialRecord r;
    std::string seq_str;
    if (!(is >> r.trial_index >> seq_str >> r.reward >> r.param_count.total >>
          r.param_count.trainable >> r.wall_time_s))
        throw ParseError("bad trial line: " + line);
    std::istringstream ss(seq_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) r.sequence.push_back(std::stoll(tok));
    return r;
}

std::vector<TrialRecord> read_report_lines(const std::string& path) {
    std::vector<TrialRecord> out;
    std::ifstream is(path);
    if (!is) return out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(trial_from_line(line));
    }
    return out;
}

SearchReport run_search(StrategyKind kind, const SpaceConfig& space,
                        const Evaluator& evaluator, int64_t trials,
                        uint64_t seed, const std::string& report_path,
                        int64_t workers) {
    SearchReport report;
    report.space = space;
    report.strategy = strategy_name(kind);
    report.budget = trials;

    auto strategy = make_strategy(kind, space, seed);

    // resume: replay persisted trials into the strategy state. Ordered
    // strategies cannot replay someone else's proposals, so they restart the
    // strategy state but keep the completed trials.
    if (!report_path.empty()) {
        auto prior = read_report_lines(report_path);
        for (const auto& r : prior) {
            if (!strategy->requires_ordered_observation()) {
                // discard one proposal so the strategy's RNG advances exactly
                // as in the interrupted run, then replay the stored reward
                strategy->propose();
                strategy->observe(r);
            }
            report.trials.push_back(r);
        }
    }

    std::ofstream os;
    if (!report_path.empty())
        os.open(report_path, std::ios::app);

    if (strategy->requires_ordered_observation()) workers = 1;
    if (workers < 1) workers = 1;

    int64_t t = static_cast<int64_t>(report.trials.size());
    while (t < trials) {
        int64_t batch = std::min<int64_t>(workers, trials - t);
        std::vector<DecisionSequence> seqs;
        for (int64_t i = 0; i < batch; ++i) {
            DecisionSequence seq = strategy->propose();
            check_sequence(space, seq);
            seqs.push_back(std::move(seq));
        }
        std::vector<TrialRecord> records(batch);
        if (batch == 1) {
            records[0] = evaluator(seqs[0]);
        } else {
            std::vector<std::future<TrialRecord>> futs;
            for (int64_t i = 0; i < batch; ++i)
                futs.push_back(std::async(std::launch::async, evaluator,
                                          std::cref(seqs[i])));
            for (int64_t i = 0; i < batch; ++i) records[i] = futs[i].get();
        }
        for (int64_t i = 0; i < batch; ++i) {
            records[i].trial_index = t + i;
            records[i].sequence = seqs[i];
            strategy->observe(records[i]);
            report.trials.push_back(records[i]);
            if (os) {
                os << trial_to_line(records[i]) << '\n';
                os.flush();
            }
        }
        t += batch;
    }
    return report;
}

double top_n(const SearchReport& report, int64_t n) {
    if (n <= 0 || n > static_cast<int64_t>(report.trials.size()))
        throw NOutOfRange("top_n: n=" + std::to_string(n) + " with " +
                          std::to_string(report.trials.size()) + " trials");
    std::vector<const TrialRecord*> sorted;
    for (const auto& r : report.trials) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const TrialRecord* a, const TrialRecord* b) {
                  if (a->reward != b->reward) return a->reward > b->reward;
                  return a->trial_index < b->trial_index;
              });
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += sorted[i]->reward;
    return sum / static_cast<double>(n);
}

} // namespace etcnas

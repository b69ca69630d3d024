#pragma once

// Gated recurrent policy over decision sequences: a single-layer LSTM with
// per-position output heads sized to each position's arity. Used by the
// REINFORCE controller.

#include <cstdint>
#include <random>
#include <vector>

#include "etcnas/space.hpp"
#include "etcnas/tensor.hpp"

namespace etcnas {

class RecurrentPolicyCell {
public:
    static constexpr int64_t kHiddenWidth = 100;

    RecurrentPolicyCell(const SpaceConfig& space, uint64_t rng_seed);

    int64_t sequence_length() const { return arities_.size() ? static_cast<int64_t>(arities_.size()) : 0; }
    int64_t arity_at(int64_t position) const { return arities_.at(position); }

    struct State {
        std::vector<double> h;
        std::vector<double> c;
    };
    State initial_state() const;

    // One recurrence step: consumes the previous choice (-1 at position 0),
    // returns the logits over the position's arity and the advanced state.
    std::pair<std::vector<double>, State> step(int64_t position,
                                               int64_t prev_choice,
                                               const State& state) const;

    DecisionSequence sample(std::mt19937_64& rng) const;
    double log_prob(const DecisionSequence& seq) const;

    // REINFORCE step: ascend advantage * grad log p(seq) with global-norm
    // clipping and Adam. Gradients computed by backprop through time.
    void reinforce_update(const DecisionSequence& seq, double advantage);

    // grad of log p(seq) w.r.t. the flattened parameter vector (for tests)
    std::vector<double> log_prob_grad(const DecisionSequence& seq) const;
    std::vector<double> flat_params() const;
    void set_flat_params(const std::vector<double>& flat);

    double adam_lr = 1e-3;
    double grad_clip_norm = 5.0;

private:
    struct Trace;
    void run(const DecisionSequence& seq, Trace& tr) const;
    std::vector<double> backprop(const Trace& tr) const; // d log p / d params

    std::vector<int64_t> arities_;
    int64_t vocab_ = 0; // distinct choice values + start token

    // parameters, flattened layout: [embed | Wlstm | blstm | heads...]
    Tensor embed_;              // (vocab, H)
    Tensor w_lstm_;             // (2H, 4H)
    Tensor b_lstm_;             // (4H)
    std::vector<Tensor> head_w_; // per position (H, arity)
    std::vector<Tensor> head_b_; // per position (arity)

    // Adam state over the flattened vector
    std::vector<double> adam_m_, adam_v_;
    int64_t adam_step_ = 0;

    template <typename F> void for_each_tensor(F&& f);
    template <typename F> void for_each_tensor(F&& f) const;
};

} // namespace etcnas

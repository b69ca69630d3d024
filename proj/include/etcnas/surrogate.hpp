#pragma once

// Gradient-boosted regression trees over integer-encoded decision sequences.
// Ranks rollout candidates for the tree-search controller.

#include <cstdint>
#include <vector>

#include "etcnas/errors.hpp"
#include "etcnas/space.hpp"

namespace etcnas {

struct GbtConfig {
    int64_t num_trees = 50;
    int64_t max_depth = 3;
    double shrinkage = 0.1;
    int64_t min_leaf = 1;
};

class SurrogateModel {
public:
    SurrogateModel() = default;

    static SurrogateModel fit(const std::vector<DecisionSequence>& x,
                              const std::vector<double>& y,
                              const GbtConfig& cfg = {});

    // prediction clamped to [0, 1]
    double predict(const DecisionSequence& seq) const;

    bool trained() const { return trained_; }
    double training_mse(const std::vector<DecisionSequence>& x,
                        const std::vector<double>& y) const;

private:
    struct TreeNode {
        int64_t feature = -1; // -1 -> leaf
        double threshold = 0.0;
        double value = 0.0;
        int64_t left = -1, right = -1;
    };
    struct Tree {
        std::vector<TreeNode> nodes;
        double eval(const DecisionSequence& seq) const;
    };

    double raw_predict(const DecisionSequence& seq) const;

    double base_ = 0.0;
    double shrinkage_ = 0.1;
    std::vector<Tree> trees_;
    bool trained_ = false;
};

} // namespace etcnas

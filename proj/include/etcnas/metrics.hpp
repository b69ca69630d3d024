#pragma once

// Confusion matrix and the weighted-average precision / recall / F1 /
// accuracy scores, reported as percentages.

#include <cstdint>
#include <vector>

#include "etcnas/errors.hpp"

namespace etcnas {

struct ConfusionMatrix {
    int64_t num_classes = 0;
    std::vector<int64_t> counts; // rows = true class, cols = predicted

    int64_t& at(int64_t t, int64_t p) { return counts[t * num_classes + p]; }
    int64_t at(int64_t t, int64_t p) const { return counts[t * num_classes + p]; }
    int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int64_t>& y_true,
                          const std::vector<int64_t>& y_pred,
                          int64_t num_classes);

struct Scores {
    double accuracy = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
};

// Per-class P/R/F1 weighted by the true-class frequency; zero-division
// convention: a class with no predictions (or no true samples) scores 0.
Scores scores(const ConfusionMatrix& cm);

} // namespace etcnas

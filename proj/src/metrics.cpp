#include "etcnas/metrics.hpp"

#include <numeric>
#include <string>

namespace etcnas {

int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

ConfusionMatrix confusion(const std::vector<int64_t>& y_true,
                          const std::vector<int64_t>& y_pred,
                          int64_t num_classes) {
    if (y_true.size() != y_pred.size())
        throw LengthMismatch("y_true has " + std::to_string(y_true.size()) +
                             " labels, y_pred has " +
                             std::to_string(y_pred.size()));
    ConfusionMatrix cm;
    cm.num_classes = num_classes;
    cm.counts.assign(num_classes * num_classes, 0);
    for (size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 ||
            y_pred[i] >= num_classes)
            throw LabelOutOfRange("label outside [0, " +
                                  std::to_string(num_classes) + ")");
        cm.at(y_true[i], y_pred[i])++;
    }
    return cm;
}

Scores scores(const ConfusionMatrix& cm) {
    int64_t total = cm.total();
    if (total == 0) throw EmptyMatrix("confusion matrix has no samples");
    int64_t c = cm.num_classes;
    double trace = 0.0;
    Scores s;
    for (int64_t k = 0; k < c; ++k) {
        int64_t tp = cm.at(k, k);
        trace += static_cast<double>(tp);
        int64_t fp = 0, fn = 0;
        for (int64_t j = 0; j < c; ++j) {
            if (j != k) {
                fp += cm.at(j, k);
                fn += cm.at(k, j);
            }
        }
        double precision =
            (tp + fp) ? 100.0 * tp / static_cast<double>(tp + fp) : 0.0;
        double recall =
            (tp + fn) ? 100.0 * static_cast<double>(tp) /
                            static_cast<double>(tp + fn)
                      : 0.0;
        double f1 = (precision + recall) > 0.0
                        ? 2.0 * precision * recall / (precision + recall)
                        : 0.0;
        double weight =
            static_cast<double>(tp + fn) / static_cast<double>(total);
        s.weighted_precision += weight * precision;
        s.weighted_f1 += weight * f1;
    }
    s.accuracy = 100.0 * trace / static_cast<double>(total);
    // support-weighted recall telescopes to trace/total: computing it that
    // way keeps the identity with accuracy exact in floating point
    s.weighted_recall = s.accuracy;
    return s;
}

} // namespace etcnas

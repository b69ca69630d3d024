#include "etcnas/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace etcnas {

namespace {

struct SplitResult {
    int64_t feature = -1;
    double threshold = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

double mean_of(const std::vector<double>& y, const std::vector<int64_t>& idx) {
    double s = 0.0;
    for (int64_t i : idx) s += y[i];
    return idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
}

// best squared-error split over all features and midpoint thresholds
SplitResult best_split(const std::vector<DecisionSequence>& x,
                       const std::vector<double>& y,
                       const std::vector<int64_t>& idx, int64_t min_leaf) {
    SplitResult best;
    if (idx.empty()) return best;
    int64_t n_features = static_cast<int64_t>(x[idx[0]].size());
    for (int64_t f = 0; f < n_features; ++f) {
        std::vector<int64_t> sorted = idx;
        std::sort(sorted.begin(), sorted.end(), [&](int64_t a, int64_t b) {
            return x[a][f] < x[b][f];
        });
        // prefix sums for O(1) SSE at each cut
        int64_t n = static_cast<int64_t>(sorted.size());
        std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
        for (int64_t i = 0; i < n; ++i) {
            ps[i + 1] = ps[i] + y[sorted[i]];
            ps2[i + 1] = ps2[i] + y[sorted[i]] * y[sorted[i]];
        }
        for (int64_t cut = min_leaf; cut <= n - min_leaf; ++cut) {
            if (cut < n && x[sorted[cut - 1]][f] == x[sorted[cut]][f]) continue;
            if (cut == 0 || cut == n) continue;
            double ls = ps[cut], ls2 = ps2[cut];
            double rs = ps[n] - ls, rs2 = ps2[n] - ls2;
            double nl = static_cast<double>(cut), nr = static_cast<double>(n - cut);
            double sse = (ls2 - ls * ls / nl) + (rs2 - rs * rs / nr);
            if (sse < best.sse) {
                best.sse = sse;
                best.feature = f;
                best.threshold =
                    0.5 * (static_cast<double>(x[sorted[cut - 1]][f]) +
                           static_cast<double>(x[sorted[cut]][f]));
            }
        }
    }
    return best;
}

} // namespace

double SurrogateModel::Tree::eval(const DecisionSequence& seq) const {
    int64_t i = 0;
    while (nodes[i].feature >= 0)
        i = static_cast<double>(seq[nodes[i].feature]) < nodes[i].threshold
                ? nodes[i].left
                : nodes[i].right;
    return nodes[i].value;
}

SurrogateModel SurrogateModel::fit(const std::vector<DecisionSequence>& x,
                                   const std::vector<double>& y,
                                   const GbtConfig& cfg) {
    if (x.size() < 2 || x.size() != y.size())
        throw InsufficientData("surrogate fit needs >= 2 (sequence, reward) pairs");
    SurrogateModel model;
    model.shrinkage_ = cfg.shrinkage;
    model.base_ = std::accumulate(y.begin(), y.end(), 0.0) /
                  static_cast<double>(y.size());
    std::vector<double> residual(y.size());
    for (size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - model.base_;

    for (int64_t round = 0; round < cfg.num_trees; ++round) {
        Tree tree;
        // build recursively over (index-set, depth)
        struct Frame {
            std::vector<int64_t> idx;
            int64_t depth;
            int64_t node;
        };
        std::vector<int64_t> all(x.size());
        std::iota(all.begin(), all.end(), 0);
        tree.nodes.push_back({});
        std::vector<Frame> stack{{all, 0, 0}};
        while (!stack.empty()) {
            Frame fr = std::move(stack.back());
            stack.pop_back();
            SplitResult sp;
            if (fr.depth < cfg.max_depth)
                sp = best_split(x, residual, fr.idx, cfg.min_leaf);
            if (sp.feature < 0) {
                tree.nodes[fr.node].value = mean_of(residual, fr.idx);
                continue;
            }
            std::vector<int64_t> li, ri;
            for (int64_t i : fr.idx)
                (static_cast<double>(x[i][sp.feature]) < sp.threshold ? li : ri)
                    .push_back(i);
            int64_t left = static_cast<int64_t>(tree.nodes.size());
            tree.nodes.push_back({});
            int64_t right = static_cast<int64_t>(tree.nodes.size());
            tree.nodes.push_back({});
            tree.nodes[fr.node].feature = sp.feature;
            tree.nodes[fr.node].threshold = sp.threshold;
            tree.nodes[fr.node].left = left;
            tree.nodes[fr.node].right = right;
            stack.push_back({std::move(li), fr.depth + 1, left});
            stack.push_back({std::move(ri), fr.depth + 1, right});
        }
        for (size_t i = 0; i < x.size(); ++i)
            residual[i] -= cfg.shrinkage * tree.eval(x[i]);
        model.trees_.push_back(std::move(tree));
    }
    model.trained_ = true;
    return model;
}

double SurrogateModel::raw_predict(const DecisionSequence& seq) const {
    double v = base_;
    for (const Tree& t : trees_) v += shrinkage_ * t.eval(seq);
    return v;
}

double SurrogateModel::predict(const DecisionSequence& seq) const {
    return std::clamp(raw_predict(seq), 0.0, 1.0);
}

double SurrogateModel::training_mse(const std::vector<DecisionSequence>& x,
                                    const std::vector<double>& y) const {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = raw_predict(x[i]) - y[i];
        s += d * d;
    }
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

} // namespace etcnas

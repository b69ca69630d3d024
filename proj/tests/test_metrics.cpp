#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "etcnas/metrics.hpp"

using namespace etcnas;

namespace {

// independent brute-force oracle over the raw label vectors
Scores oracle(const std::vector<int64_t>& yt, const std::vector<int64_t>& yp,
              int64_t k) {
    double correct = 0.0;
    for (size_t i = 0; i < yt.size(); ++i)
        if (yt[i] == yp[i]) correct += 1.0;
    Scores s;
    s.accuracy = 100.0 * correct / static_cast<double>(yt.size());
    for (int64_t c = 0; c < k; ++c) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (size_t i = 0; i < yt.size(); ++i) {
            if (yt[i] == c) support += 1.0;
            if (yp[i] == c && yt[i] == c) tp += 1.0;
            if (yp[i] == c && yt[i] != c) fp += 1.0;
            if (yp[i] != c && yt[i] == c) fn += 1.0;
        }
        double prec = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
        double rec = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
        double f1 = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        double w = support / static_cast<double>(yt.size());
        s.weighted_precision += 100.0 * w * prec;
        s.weighted_recall += 100.0 * w * rec;
        s.weighted_f1 += 100.0 * w * f1;
    }
    return s;
}

} // namespace

TEST_CASE("frozen example: [[1,1],[0,2]]") {
    ConfusionMatrix cm;
    cm.num_classes = 2;
    cm.counts = {1, 1, 0, 2};
    Scores s = scores(cm);
    CHECK(s.accuracy == doctest::Approx(75.0));
    CHECK(s.weighted_recall == doctest::Approx(75.0));
    // supports are 2 and 2 -> weights 0.5 each
    // class 0: P=1, R=0.5, F1=2/3; class 1: P=2/3, R=1, F1=0.8
    CHECK(s.weighted_f1 == doctest::Approx(0.5 * (200.0 / 3) + 0.5 * 80.0));
    CHECK(s.weighted_f1 == doctest::Approx(73.3333).epsilon(1e-4));
    CHECK(s.weighted_precision ==
          doctest::Approx(0.5 * 100.0 + 0.5 * (200.0 / 3)));
}

TEST_CASE("weighted scores match the brute-force oracle on random vectors") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        int64_t k = 2 + static_cast<int64_t>(rng() % 5);
        int64_t n = 5 + static_cast<int64_t>(rng() % 60);
        std::vector<int64_t> yt(n), yp(n);
        std::uniform_int_distribution<int64_t> d(0, k - 1);
        for (int64_t i = 0; i < n; ++i) {
            yt[i] = d(rng);
            yp[i] = d(rng);
        }
        Scores got = scores(confusion(yt, yp, k));
        Scores want = oracle(yt, yp, k);
        CHECK(got.accuracy == doctest::Approx(want.accuracy).epsilon(1e-9));
        CHECK(got.weighted_precision ==
              doctest::Approx(want.weighted_precision).epsilon(1e-9));
        CHECK(got.weighted_recall ==
              doctest::Approx(want.weighted_recall).epsilon(1e-9));
        CHECK(got.weighted_f1 ==
              doctest::Approx(want.weighted_f1).epsilon(1e-9));
        // support-weighted recall is identically the accuracy
        CHECK(got.weighted_recall == got.accuracy);
    }
}

TEST_CASE("perfect predictions score 100 everywhere") {
    std::vector<int64_t> y = {0, 1, 2, 1, 0, 2, 2};
    Scores s = scores(confusion(y, y, 3));
    CHECK(s.accuracy == doctest::Approx(100.0));
    CHECK(s.weighted_precision == doctest::Approx(100.0));
    CHECK(s.weighted_recall == doctest::Approx(100.0));
    CHECK(s.weighted_f1 == doctest::Approx(100.0));
}

TEST_CASE("error contracts") {
    CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), LengthMismatch);
    CHECK_THROWS_AS(confusion({0, 2}, {0, 1}, 2), LabelOutOfRange);
    CHECK_THROWS_AS(confusion({0, 1}, {0, -1}, 2), LabelOutOfRange);
    ConfusionMatrix empty;
    empty.num_classes = 2;
    empty.counts = {0, 0, 0, 0};
    CHECK_THROWS_AS(scores(empty), EmptyMatrix);
}

TEST_CASE("zero-division convention: absent classes score 0") {
    // class 2 never appears in truth or prediction
    std::vector<int64_t> yt = {0, 0, 1, 1};
    std::vector<int64_t> yp = {0, 0, 1, 1};
    Scores s = scores(confusion(yt, yp, 3));
    CHECK(s.accuracy == doctest::Approx(100.0));
    CHECK(s.weighted_f1 == doctest::Approx(100.0)); // zero-weight class
}

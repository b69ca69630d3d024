#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "etcnas/surrogate.hpp"

using namespace etcnas;

TEST_CASE("fit requires at least two observations") {
    CHECK_THROWS_AS(SurrogateModel::fit({}, {}), InsufficientData);
    CHECK_THROWS_AS(SurrogateModel::fit({{1, 2}}, {0.5}), InsufficientData);
    CHECK_NOTHROW(SurrogateModel::fit({{1, 2}, {3, 4}}, {0.2, 0.8}));
}

TEST_CASE("boosting drives residuals toward zero on a simple split") {
    // y depends only on feature 0
    std::vector<DecisionSequence> x;
    std::vector<double> y;
    for (int64_t v = 0; v < 10; ++v) {
        x.push_back({v, 0, 1});
        y.push_back(v < 5 ? 0.2 : 0.9);
    }
    auto m = SurrogateModel::fit(x, y);
    CHECK(m.trained());
    // 50 trees at shrinkage 0.1 leave (0.9)^50 ~ 0.5% of the residual
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(m.predict(x[i]) == doctest::Approx(y[i]).epsilon(0.02));
    CHECK(m.training_mse(x, y) < 1e-4);
}

TEST_CASE("predictions are clamped to [0, 1]") {
    std::vector<DecisionSequence> x = {{0}, {1}, {2}, {3}};
    std::vector<double> y = {0.0, 0.0, 1.0, 1.0};
    auto m = SurrogateModel::fit(x, y);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int64_t> d(-100, 100);
    for (int i = 0; i < 200; ++i) {
        double p = m.predict({d(rng)});
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("deeper interactions are captured") {
    // XOR of two features: needs depth >= 2
    std::vector<DecisionSequence> x;
    std::vector<double> y;
    for (int64_t a = 0; a < 2; ++a)
        for (int64_t b = 0; b < 2; ++b)
            for (int rep = 0; rep < 4; ++rep) {
                x.push_back({a, b});
                y.push_back((a ^ b) ? 1.0 : 0.0);
            }
    auto m = SurrogateModel::fit(x, y);
    CHECK(m.predict({0, 0}) < 0.1);
    CHECK(m.predict({1, 1}) < 0.1);
    CHECK(m.predict({0, 1}) > 0.9);
    CHECK(m.predict({1, 0}) > 0.9);
}

TEST_CASE("fit is deterministic") {
    std::vector<DecisionSequence> x;
    std::vector<double> y;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int64_t> d(0, 4);
    std::uniform_real_distribution<double> r(0, 1);
    for (int i = 0; i < 40; ++i) {
        x.push_back({d(rng), d(rng), d(rng), d(rng)});
        y.push_back(r(rng));
    }
    auto a = SurrogateModel::fit(x, y);
    auto b = SurrogateModel::fit(x, y);
    for (const auto& xi : x) CHECK(a.predict(xi) == b.predict(xi));
}

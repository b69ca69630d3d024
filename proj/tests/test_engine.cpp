#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>

#include "etcnas/dataset.hpp"
#include "etcnas/engine.hpp"

using namespace etcnas;

namespace {

LayerSpec spec_of(LayerKind kind, int64_t k = 0, int64_t s = 1, int64_t f = 0,
                  int64_t units = 0, double rate = 0.0, int64_t offset = 0) {
    LayerSpec spec;
    spec.kind = kind;
    spec.kernel_size = k;
    spec.stride = s;
    spec.filters = f;
    spec.units = units;
    spec.rate = rate;
    spec.offset = offset;
    return spec;
}

ModelGraph chain(const std::vector<LayerSpec>& body, int64_t input_len,
                 int64_t channels = 1, int64_t num_classes = 3) {
    ModelGraph g;
    g.input_length = input_len;
    g.input_channels = channels;
    g.num_classes = num_classes;
    NodeId prev = g.add_node(spec_of(LayerKind::Input));
    for (const auto& s : body) {
        NodeId n = g.add_node(s);
        g.connect(prev, n);
        prev = n;
    }
    NodeId sm = g.add_node(spec_of(LayerKind::Softmax));
    g.connect(prev, sm);
    return g;
}

Tensor random_input(int64_t n, int64_t len, int64_t c, uint64_t seed) {
    Tensor x({n, len, c});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& v : x.data) v = d(rng);
    return x;
}

std::vector<int64_t> random_labels(int64_t n, int64_t classes, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> d(0, classes - 1);
    std::vector<int64_t> y(n);
    for (auto& v : y) v = d(rng);
    return y;
}

// central finite differences over every trainable parameter
void fd_check(const ModelGraph& g, const char* what, int64_t n = 4,
              uint64_t seed = 3) {
    ModelInstance model = init_params(g, seed);
    Tensor x = random_input(n, g.input_length, g.input_channels, seed + 1);
    auto y = random_labels(n, g.num_classes, seed + 2);

    auto [loss, grads] = loss_and_grads(model, x, y, Mode::Train);
    CHECK(std::isfinite(loss));

    const double h = 1e-5;
    double worst = 0.0;
    model.for_each_trainable([&](NodeId id, const std::string& name,
                                 Tensor& t) {
        for (int64_t i = 0; i < t.elements(); ++i) {
            double orig = t.data[i];
            t.data[i] = orig + h;
            double lp = loss_and_grads(model, x, y, Mode::Train).first;
            t.data[i] = orig - h;
            double lm = loss_and_grads(model, x, y, Mode::Train).first;
            t.data[i] = orig;
            double num = (lp - lm) / (2.0 * h);
            double ana = grads.at(id).at(name).data[i];
            double err = std::abs(num - ana) /
                         std::max(1.0, std::abs(num) + std::abs(ana));
            worst = std::max(worst, err);
        }
    });
    INFO(what << " worst relative error " << worst);
    CHECK(worst < 1e-4);
}

} // namespace

TEST_CASE("gradients match finite differences per layer kind") {
    SUBCASE("conv, strided") {
        fd_check(chain({spec_of(LayerKind::Conv1D, 3, 2, 4),
                        spec_of(LayerKind::GlobalAvgPool),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       9),
                 "conv");
    }
    SUBCASE("separable conv") {
        fd_check(chain({spec_of(LayerKind::Conv1D, 1, 1, 3),
                        spec_of(LayerKind::SeparableConv1D, 3, 1, 4),
                        spec_of(LayerKind::GlobalAvgPool),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       8),
                 "sepconv");
    }
    SUBCASE("batch norm (train statistics)") {
        fd_check(chain({spec_of(LayerKind::Conv1D, 3, 1, 4),
                        spec_of(LayerKind::BatchNorm),
                        spec_of(LayerKind::GlobalAvgPool),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       8),
                 "batchnorm");
    }
    SUBCASE("dense stack with flatten") {
        fd_check(chain({spec_of(LayerKind::Flatten),
                        spec_of(LayerKind::Dense, 0, 1, 0, 6),
                        spec_of(LayerKind::ReLU),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       8),
                 "dense");
    }
    SUBCASE("max and avg pooling, shifted window") {
        fd_check(chain({spec_of(LayerKind::Conv1D, 3, 1, 4),
                        spec_of(LayerKind::MaxPool1D, 3, 2),
                        spec_of(LayerKind::AvgPool1D, 1, 2, 0, 0, 0.0, 1),
                        spec_of(LayerKind::GlobalAvgPool),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       11),
                 "pooling");
    }
    SUBCASE("elu activation") {
        fd_check(chain({spec_of(LayerKind::Conv1D, 3, 1, 4),
                        spec_of(LayerKind::ELU),
                        spec_of(LayerKind::GlobalAvgPool),
                        spec_of(LayerKind::Dense, 0, 1, 0, 3)},
                       8),
                 "elu");
    }
    SUBCASE("add and concat joins") {
        ModelGraph g;
        g.input_length = 8;
        g.input_channels = 1;
        g.num_classes = 3;
        NodeId in = g.add_node(spec_of(LayerKind::Input));
        NodeId a = g.add_node(spec_of(LayerKind::Conv1D, 1, 1, 4));
        NodeId b = g.add_node(spec_of(LayerKind::Conv1D, 3, 1, 4));
        NodeId add = g.add_node(spec_of(LayerKind::Add));
        NodeId c = g.add_node(spec_of(LayerKind::Conv1D, 1, 1, 2));
        NodeId cat = g.add_node(spec_of(LayerKind::Concat));
        NodeId gap = g.add_node(spec_of(LayerKind::GlobalAvgPool));
        NodeId d = g.add_node(spec_of(LayerKind::Dense, 0, 1, 0, 3));
        NodeId sm = g.add_node(spec_of(LayerKind::Softmax));
        g.connect(in, a);
        g.connect(in, b);
        g.connect(a, add, 0);
        g.connect(b, add, 1);
        g.connect(add, c);
        g.connect(add, cat, 0);
        g.connect(c, cat, 1);
        g.connect(cat, gap);
        g.connect(gap, d);
        g.connect(d, sm);
        fd_check(g, "add/concat");
    }
}

TEST_CASE("glorot init: dense 10->5 weights within sqrt(6/15)") {
    auto g = chain({spec_of(LayerKind::Flatten),
                    spec_of(LayerKind::Dense, 0, 1, 0, 5)},
                   10, 1, 5);
    ModelInstance m = init_params(g, 9);
    double bound = std::sqrt(6.0 / 15.0);
    bool any_nonzero = false;
    m.for_each_trainable([&](NodeId, const std::string& name, Tensor& t) {
        if (name == "W") {
            for (double v : t.data) {
                CHECK(std::abs(v) <= bound);
                if (v != 0.0) any_nonzero = true;
            }
        } else if (name == "b") {
            for (double v : t.data) CHECK(v == 0.0);
        }
    });
    CHECK(any_nonzero);

    // deterministic per seed
    ModelInstance m2 = init_params(g, 9);
    ModelInstance m3 = init_params(g, 10);
    CHECK(m2.params == m.params);
    CHECK(m3.params != m.params);
}

TEST_CASE("learning-rate schedule halves every period") {
    TrainConfig cfg;
    CHECK(learning_rate_at(cfg, 0) == doctest::Approx(0.001));
    CHECK(learning_rate_at(cfg, 9) == doctest::Approx(0.001));
    CHECK(learning_rate_at(cfg, 10) == doctest::Approx(0.0005));
    CHECK(learning_rate_at(cfg, 19) == doctest::Approx(0.0005));
    CHECK(learning_rate_at(cfg, 20) == doctest::Approx(0.00025));
    CHECK(learning_rate_at(cfg, 39) == doctest::Approx(0.000125));
}

TEST_CASE("adam first step moves by ~lr in the gradient direction") {
    auto g = chain({spec_of(LayerKind::Flatten),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   4, 1, 2);
    ModelInstance m = init_params(g, 1);
    ParamMap grads;
    m.for_each_trainable([&](NodeId id, const std::string& name, Tensor& t) {
        Tensor gt(t.shape);
        for (auto& v : gt.data) v = 2.0;
        grads[id][name] = gt;
    });
    ModelInstance before = m;
    adam_step(m, grads, 0.01);
    // bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
    m.for_each_trainable([&](NodeId id, const std::string& name, Tensor& t) {
        const Tensor& prev = before.params.at(id).at(name);
        for (int64_t i = 0; i < t.elements(); ++i)
            CHECK(prev.data[i] - t.data[i] ==
                  doctest::Approx(0.01).epsilon(1e-4));
    });
    CHECK(m.adam_step == 1);
}

TEST_CASE("dropout: inverted scaling in train, identity in eval") {
    auto g = chain({spec_of(LayerKind::Dropout, 0, 1, 0, 0, 0.4),
                    spec_of(LayerKind::Flatten),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   64, 1, 2);
    ModelInstance m = init_params(g, 5);
    Tensor x({2, 64, 1});
    for (auto& v : x.data) v = 1.0;

    std::mt19937_64 rng(17);
    // look at the dropout node's effect indirectly: eval output is exact
    Tensor eval1 = forward(m, x, Mode::Eval);
    Tensor eval2 = forward(m, x, Mode::Eval);
    CHECK(eval1.data == eval2.data);

    // in train mode the dense input is masked; run many times and check the
    // mean logit roughly matches eval (inverted dropout preserves expectation)
    Tensor t1 = forward(m, x, Mode::Train, &rng);
    Tensor t2 = forward(m, x, Mode::Train, &rng);
    CHECK(t1.data != t2.data); // different masks
}

TEST_CASE("batch norm uses batch stats in train, moving stats in eval") {
    auto g = chain({spec_of(LayerKind::Conv1D, 1, 1, 2),
                    spec_of(LayerKind::BatchNorm),
                    spec_of(LayerKind::GlobalAvgPool),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   8, 1, 2);
    ModelInstance m = init_params(g, 2);
    Tensor x = random_input(16, 8, 1, 21);

    // fresh moving stats are (0, 1): eval differs from train normalization
    Tensor train_out = forward(m, x, Mode::Train);
    Tensor eval_out = forward(m, x, Mode::Eval);
    CHECK(train_out.data != eval_out.data);

    // after many train passes the moving stats approach the batch stats
    for (int i = 0; i < 2000; ++i) forward(m, x, Mode::Train);
    Tensor eval_converged = forward(m, x, Mode::Eval);
    double diff = 0.0;
    for (size_t i = 0; i < train_out.data.size(); ++i)
        diff = std::max(diff,
                        std::abs(eval_converged.data[i] - train_out.data[i]));
    CHECK(diff < 1e-3);
}

TEST_CASE("checkpoint round-trip preserves behavior and schedule position") {
    auto g = chain({spec_of(LayerKind::Conv1D, 3, 2, 4),
                    spec_of(LayerKind::BatchNorm),
                    spec_of(LayerKind::GlobalAvgPool),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   16, 1, 2);
    ModelInstance m = init_params(g, 4);
    ByteDataset ds = make_synthetic(64, 16, 2, 4);
    Tensor x = to_tensor(ds);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.rng_seed = 4;
    train(m, x, ds.labels, {}, {}, cfg);
    CHECK(m.epoch == 3);

    std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(m, path);
    ModelInstance r = load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(r.epoch == 3);
    CHECK(r.adam_step == m.adam_step);
    CHECK(r.params == m.params);
    Tensor a = forward(m, x, Mode::Eval);
    Tensor b = forward(r, x, Mode::Eval);
    CHECK(a.data == b.data);
}

TEST_CASE("training separates a linearly separable synthetic set") {
    ByteDataset ds = make_synthetic(240, 16, 2, 11);
    auto split = split_dataset(ds, 0.8, 11);
    auto g = chain({spec_of(LayerKind::Conv1D, 1, 1, 4),
                    spec_of(LayerKind::BatchNorm),
                    spec_of(LayerKind::ReLU),
                    spec_of(LayerKind::GlobalAvgPool),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   16, 1, 2);
    ModelInstance m = init_params(g, 11);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 8;
    cfg.rng_seed = 11;
    Tensor x_test = to_tensor(split.test);
    auto history = train(m, to_tensor(split.train), split.train.labels, x_test,
                         split.test.labels, cfg);
    REQUIRE(history.size() == 25);
    CHECK(history.front().learning_rate == doctest::Approx(0.001));
    CHECK(history[10].learning_rate == doctest::Approx(0.0005));
    CHECK(accuracy(m, x_test, split.test.labels) >= 0.95);

    // continuation keeps the schedule position
    TrainConfig cont = cfg;
    cont.epochs = 5;
    auto more = train(m, to_tensor(split.train), split.train.labels, x_test,
                      split.test.labels, cont);
    CHECK(m.epoch == 30);
    CHECK(more.front().learning_rate == doctest::Approx(0.00025)); // epoch 25
    CHECK(more.back().learning_rate == doctest::Approx(0.00025));  // epoch 29
}

TEST_CASE("training is deterministic per seed") {
    ByteDataset ds = make_synthetic(64, 12, 2, 3);
    auto g = chain({spec_of(LayerKind::Conv1D, 3, 1, 2),
                    spec_of(LayerKind::GlobalAvgPool),
                    spec_of(LayerKind::Dense, 0, 1, 0, 2)},
                   12, 1, 2);
    auto run = [&](uint64_t seed) {
        ModelInstance m = init_params(g, seed);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.rng_seed = seed;
        train(m, to_tensor(ds), ds.labels, {}, {}, cfg);
        return forward(m, to_tensor(ds), Mode::Eval).data;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}

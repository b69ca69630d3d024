#pragma once

// Trainable-tensor engine executing ModelGraphs: forward, reverse-mode
// gradients, Adam, the halving learning-rate schedule and the sparse
// categorical cross-entropy loss.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "etcnas/graph.hpp"
#include "etcnas/tensor.hpp"

namespace etcnas {

enum class Mode { Train, Eval };

using ParamMap = std::map<NodeId, std::map<std::string, Tensor>>;

struct ModelInstance {
    ModelGraph graph;
    ParamMap params;
    ParamMap adam_m;
    ParamMap adam_v;
    int64_t adam_step = 0;
    int64_t epoch = 0; // schedule position; persists across continuation

    // deterministic (node, tensor-name) walk over trainable parameters
    template <typename F> void for_each_trainable(F&& f) {
        for (auto& [id, tensors] : params)
            for (auto& [name, t] : tensors)
                if (name != "mmean" && name != "mvar") f(id, name, t);
    }
};

struct TrainConfig {
    double initial_lr = 0.001;
    int64_t lr_halving_period = 10; // epochs
    int64_t batch_size = 128;
    int64_t epochs = 40;
    uint64_t rng_seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
};

// Glorot-uniform weights, zero biases, BatchNorm gamma=1 / beta=0 /
// moments=(0,1); deterministic per seed.
ModelInstance init_params(const ModelGraph& graph, uint64_t rng_seed);

// Topological evaluation. Dropout is active only in Train mode (inverted
// scaling); BatchNorm uses batch statistics in Train (updating moving
// moments) and moving statistics in Eval.
Tensor forward(ModelInstance& model, const Tensor& batch, Mode mode,
               std::mt19937_64* rng = nullptr);

// Mean sparse categorical cross-entropy plus reverse-mode gradients for
// every trainable parameter.
std::pair<double, ParamMap> loss_and_grads(ModelInstance& model,
                                           const Tensor& batch,
                                           const std::vector<int64_t>& labels,
                                           Mode mode = Mode::Train,
                                           std::mt19937_64* rng = nullptr);

// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) with bias correction.
void adam_step(ModelInstance& model, const ParamMap& grads, double lr);

double learning_rate_at(const TrainConfig& cfg, int64_t epoch);

// Shuffled seeded mini-batches; lr = initial * 0.5^floor(epoch/period).
// Validation tensors may be empty (val_accuracy reported as 0).
std::vector<EpochStats> train(ModelInstance& model, const Tensor& x,
                              const std::vector<int64_t>& y,
                              const Tensor& x_val,
                              const std::vector<int64_t>& y_val,
                              const TrainConfig& cfg);

std::vector<int64_t> predict(ModelInstance& model, const Tensor& x,
                             int64_t batch_size = 256);
double accuracy(ModelInstance& model, const Tensor& x,
                const std::vector<int64_t>& y);

// Checkpoint: serialized graph + flat parameter blob with per-tensor
// offsets, versioned header.
void save_checkpoint(const ModelInstance& model, const std::string& path);
ModelInstance load_checkpoint(const std::string& path);

} // namespace etcnas

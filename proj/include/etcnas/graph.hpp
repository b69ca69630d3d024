#pragma once

// Typed DAG of layer specifications: the intermediate representation shared
// by the search space, the reference baselines and the neural engine.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etcnas/errors.hpp"

namespace etcnas {

enum class LayerKind {
    Input,
    Conv1D,
    SeparableConv1D,
    Dense,
    BatchNorm,
    Dropout,
    ReLU,
    ELU,
    MaxPool1D,
    AvgPool1D,
    Add,
    Concat,
    Flatten,
    GlobalAvgPool,
    Softmax,
    Identity,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// Attributes are meaningful only for the kinds that use them:
//   kernel_size/stride/filters  - Conv1D, SeparableConv1D
//   kernel_size/stride/offset   - MaxPool1D, AvgPool1D (offset shifts the
//                                 first pooling window; used by the
//                                 factorized-reduction shifted path)
//   units                       - Dense
//   rate                        - Dropout
//   reshape2d                   - Input (zero-pad the byte vector to the next
//                                 H x W rectangle; 2D spatial layout)
struct LayerSpec {
    LayerKind kind = LayerKind::Identity;
    int64_t kernel_size = 0;
    int64_t stride = 1;
    int64_t filters = 0;
    int64_t units = 0;
    double rate = 0.0;
    int64_t offset = 0;
    bool reshape2d = false;

    bool operator==(const LayerSpec&) const = default;
};

using NodeId = int64_t;

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    int64_t slot = 0; // input ordering at dst (Concat order, op operand order)

    bool operator==(const Edge&) const = default;
};

// Channels-last shape. spatial is empty after Flatten/GlobalAvgPool/Dense.
struct Shape {
    std::vector<int64_t> spatial;
    int64_t channels = 0;

    bool operator==(const Shape&) const = default;
    int64_t elements() const;
    std::string str() const;
};

struct ModelGraph {
    std::vector<std::pair<NodeId, LayerSpec>> nodes; // insertion order
    std::vector<Edge> edges;
    int64_t input_length = 0;
    int64_t input_channels = 1;
    int64_t num_classes = 0;

    NodeId add_node(const LayerSpec& spec);
    void set_next_id(NodeId n) { next_id_ = n; }
    void connect(NodeId src, NodeId dst, int64_t slot = 0);
    const LayerSpec& spec_of(NodeId id) const;
    std::vector<NodeId> inputs_of(NodeId id) const; // sorted by slot
    std::vector<NodeId> topological_order() const;  // throws on cycles

    bool operator==(const ModelGraph&) const = default;

private:
    NodeId next_id_ = 0;
};

struct ParamCount {
    int64_t total = 0;
    int64_t trainable = 0;
};

// Per-node output shapes under the channels-last 1D/2D convention.
// Pooling and strided layers use same-padding halving: out = ceil(in / stride).
std::map<NodeId, Shape> infer_shapes(const ModelGraph& graph);

// Validates all structural invariants (single Input, single Softmax sink,
// acyclic, reachable, Add shape agreement) by running shape inference.
void validate(const ModelGraph& graph);

ParamCount count_params(const ModelGraph& graph);

// Stable structured-text (JSON) descriptor, schema-versioned.
std::string serialize(const ModelGraph& graph);
ModelGraph deserialize(const std::string& text);

} // namespace etcnas

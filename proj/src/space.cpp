#include "etcnas/space.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace etcnas {

namespace {

LayerSpec conv1d(int64_t k, int64_t f, int64_t s = 1) {
    LayerSpec spec;
    spec.kind = LayerKind::Conv1D;
    spec.kernel_size = k;
    spec.filters = f;
    spec.stride = s;
    return spec;
}

LayerSpec sepconv1d(int64_t k, int64_t f) {
    LayerSpec spec;
    spec.kind = LayerKind::SeparableConv1D;
    spec.kernel_size = k;
    spec.filters = f;
    return spec;
}

LayerSpec pool(LayerKind kind, int64_t k, int64_t s = 1, int64_t offset = 0) {
    LayerSpec spec;
    spec.kind = kind;
    spec.kernel_size = k;
    spec.stride = s;
    spec.offset = offset;
    return spec;
}

LayerSpec simple(LayerKind kind) {
    LayerSpec spec;
    spec.kind = kind;
    return spec;
}

LayerSpec dropout(double rate) {
    LayerSpec spec;
    spec.kind = LayerKind::Dropout;
    spec.rate = rate;
    return spec;
}

LayerSpec dense(int64_t units) {
    LayerSpec spec;
    spec.kind = LayerKind::Dense;
    spec.units = units;
    return spec;
}

NodeId chain(ModelGraph& g, NodeId from, const LayerSpec& spec) {
    NodeId n = g.add_node(spec);
    g.connect(from, n);
    return n;
}

// ReLU -> pointwise conv -> batch norm; introduces the cell's filter count.
NodeId filter_alignment(ModelGraph& g, NodeId in, int64_t filters) {
    NodeId n = chain(g, in, simple(LayerKind::ReLU));
    n = chain(g, n, conv1d(1, filters));
    return chain(g, n, simple(LayerKind::BatchNorm));
}

// Two parallel stride-2 paths (the second shifted by one element), pointwise
// convs carrying half the target filters each, concatenated and normalized.
// Halves the spatial length.
NodeId factorized_reduction(ModelGraph& g, NodeId in, int64_t target_filters) {
    int64_t half = target_filters / 2;
    NodeId a = chain(g, in, pool(LayerKind::AvgPool1D, 1, 2, 0));
    a = chain(g, a, conv1d(1, half));
    NodeId b = chain(g, in, pool(LayerKind::AvgPool1D, 1, 2, 1));
    b = chain(g, b, conv1d(1, target_filters - half));
    NodeId cat = g.add_node(simple(LayerKind::Concat));
    g.connect(a, cat, 0);
    g.connect(b, cat, 1);
    return chain(g, cat, simple(LayerKind::BatchNorm));
}

// ReLU -> separable conv -> batch norm -> dropout.
NodeId sepconv_hyper(ModelGraph& g, NodeId in, int64_t k, int64_t filters,
                     double rate) {
    NodeId n = chain(g, in, simple(LayerKind::ReLU));
    n = chain(g, n, sepconv1d(k, filters));
    n = chain(g, n, simple(LayerKind::BatchNorm));
    return chain(g, n, dropout(rate));
}

NodeId apply_cell_op(ModelGraph& g, NodeId in, CellOp op, int64_t filters,
                     double rate) {
    switch (op) {
    case CellOp::Identity:
        return chain(g, in, simple(LayerKind::Identity));
    case CellOp::SepConv3:
        // two sequential separable-conv hyper-layers per SepConv choice
        return sepconv_hyper(g, sepconv_hyper(g, in, 3, filters, rate), 3,
                             filters, rate);
    case CellOp::SepConv5:
        return sepconv_hyper(g, sepconv_hyper(g, in, 5, filters, rate), 5,
                             filters, rate);
    case CellOp::AvgPool3:
        return chain(g, in, pool(LayerKind::AvgPool1D, 3, 1));
    case CellOp::MaxPool3:
        return chain(g, in, pool(LayerKind::MaxPool1D, 3, 1));
    }
    throw ArityViolation("bad cell op");
}

NodeId build_cell(ModelGraph& g, NodeId cell_input, const CellSpec& cell,
                  const SpaceConfig& space, int64_t filters) {
    std::vector<NodeId> outputs = {cell_input}; // index 0 = cell input
    std::set<int64_t> consumed;
    for (size_t k = 0; k < cell.decisions.size(); ++k) {
        const NodeDecision& d = cell.decisions[k];
        NodeId a = apply_cell_op(g, outputs[d.input1], space.op_set[d.op1],
                                 filters, space.cell_dropout_rate);
        NodeId b = apply_cell_op(g, outputs[d.input2], space.op_set[d.op2],
                                 filters, space.cell_dropout_rate);
        NodeId add = g.add_node(simple(LayerKind::Add));
        g.connect(a, add, 0);
        g.connect(b, add, 1);
        consumed.insert(d.input1);
        consumed.insert(d.input2);
        outputs.push_back(add);
    }
    // Loose ends: node outputs never used inside the cell, aggregated into a
    // terminal add together with the last node's output.
    std::vector<NodeId> loose;
    for (size_t i = 1; i + 1 < outputs.size(); ++i)
        if (!consumed.count(static_cast<int64_t>(i))) loose.push_back(outputs[i]);
    if (loose.empty()) return outputs.back();
    NodeId add = g.add_node(simple(LayerKind::Add));
    int64_t slot = 0;
    for (NodeId n : loose) g.connect(n, add, slot++);
    g.connect(outputs.back(), add, slot);
    return add;
}

} // namespace

const char* cell_op_name(CellOp op) {
    switch (op) {
    case CellOp::Identity: return "Identity";
    case CellOp::SepConv3: return "SepConv3";
    case CellOp::SepConv5: return "SepConv5";
    case CellOp::AvgPool3: return "AvgPool3";
    case CellOp::MaxPool3: return "MaxPool3";
    }
    return "?";
}

bool is_op_position(int64_t position) { return position % 2 == 1; }

int64_t decision_arity(const SpaceConfig& space, int64_t position) {
    if (position < 0 || position >= space.sequence_length())
        throw IndexOutOfRange("position " + std::to_string(position) +
                              " out of range for sequence length " +
                              std::to_string(space.sequence_length()));
    if (is_op_position(position))
        return static_cast<int64_t>(space.op_set.size());
    int64_t node = (position % (space.nodes_per_cell * 4)) / 4;
    return node + 1; // cell input plus prior node outputs
}

void check_sequence(const SpaceConfig& space, const DecisionSequence& seq) {
    if (static_cast<int64_t>(seq.size()) != space.sequence_length())
        throw ArityViolation("sequence length " + std::to_string(seq.size()) +
                             " != " + std::to_string(space.sequence_length()));
    for (int64_t i = 0; i < space.sequence_length(); ++i)
        if (seq[i] < 0 || seq[i] >= decision_arity(space, i))
            throw ArityViolation("position " + std::to_string(i) + " value " +
                                 std::to_string(seq[i]) + " exceeds arity " +
                                 std::to_string(decision_arity(space, i)));
}

DecisionSequence sample_random(const SpaceConfig& space, std::mt19937_64& rng) {
    DecisionSequence seq(space.sequence_length());
    for (int64_t i = 0; i < space.sequence_length(); ++i) {
        std::uniform_int_distribution<int64_t> d(0, decision_arity(space, i) - 1);
        seq[i] = d(rng);
    }
    return seq;
}

unsigned __int128 space_size(const SpaceConfig& space) {
    unsigned __int128 n = 1;
    for (int64_t i = 0; i < space.sequence_length(); ++i)
        n *= static_cast<unsigned __int128>(decision_arity(space, i));
    return n;
}

std::string space_size_str(const SpaceConfig& space) {
    unsigned __int128 n = space_size(space);
    if (n == 0) return "0";
    std::string s;
    while (n > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(n % 10)));
        n /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

std::vector<CellSpec> to_cells(const SpaceConfig& space,
                               const DecisionSequence& seq) {
    check_sequence(space, seq);
    std::vector<CellSpec> cells;
    int64_t p = 0;
    for (int64_t c = 0; c < space.num_cells; ++c) {
        CellSpec cell;
        cell.kind = (c == 0) ? CellKind::Normal : CellKind::Reduction;
        for (int64_t k = 0; k < space.nodes_per_cell; ++k) {
            NodeDecision d;
            d.input1 = seq[p++];
            d.op1 = seq[p++];
            d.input2 = seq[p++];
            d.op2 = seq[p++];
            cell.decisions.push_back(d);
        }
        cells.push_back(cell);
    }
    return cells;
}

ModelGraph decode(const DecisionSequence& seq, const SpaceConfig& space) {
    auto cells = to_cells(space, seq);
    ModelGraph g;
    g.input_length = space.input_length;
    g.input_channels = space.input_channels;
    g.num_classes = space.num_classes;

    NodeId cur = g.add_node(simple(LayerKind::Input));
    int64_t filters = space.initial_filters;
    for (const CellSpec& cell : cells) {
        if (cell.kind == CellKind::Normal) {
            cur = filter_alignment(g, cur, filters);
        } else {
            filters *= 2;
            cur = factorized_reduction(g, cur, filters);
        }
        cur = build_cell(g, cur, cell, space, filters);
    }
    cur = chain(g, cur, simple(LayerKind::GlobalAvgPool));
    cur = chain(g, cur, dense(space.num_classes));
    chain(g, cur, simple(LayerKind::Softmax));
    return g;
}

// ---- CNN + MLP baseline spaces --------------------------------------------

namespace {

void check_permutation(const std::vector<LayerOrderItem>& order,
                       const char* what) {
    std::set<LayerOrderItem> s(order.begin(), order.end());
    if (order.size() != 3 || s.size() != 3)
        throw DomainViolation(std::string(what) +
                              " must be a permutation of dropout/activation/"
                              "batch norm");
}

void check_cnn_mlp(const CnnMlpParams& p) {
    if (p.conv_pool_blocks < 1)
        throw DomainViolation("conv_pool_blocks must be >= 1");
    if (p.conv_block_repeat < 2 || p.conv_block_repeat > 6)
        throw DomainViolation("conv_block_repeat must be in {2..6}");
    if (p.kernel != 1 && p.kernel != 2)
        throw DomainViolation("kernel must be in {1, 2}");
    if (p.filters != 32 && p.filters != 64)
        throw DomainViolation("filters must be in {32, 64}");
    if (!(p.conv_dropout > 0.0 && p.conv_dropout < 0.05))
        throw DomainViolation("conv_dropout must be in (0, 0.05)");
    check_permutation(p.conv_order, "conv_order");
    if (p.dense_units != 100 && p.dense_units != 200 && p.dense_units != 400)
        throw DomainViolation("dense_units must be in {100, 200, 400}");
    if (p.dense_layers < 3 || p.dense_layers > 5)
        throw DomainViolation("dense_layers must be in {3, 4, 5}");
    if (p.reduce_factor != 1.0 && p.reduce_factor != 0.7)
        throw DomainViolation("reduce_factor must be in {1, 0.7}");
    if (!(p.mlp_dropout > 0.3 && p.mlp_dropout < 0.5))
        throw DomainViolation("mlp_dropout must be in (0.3, 0.5)");
    check_permutation(p.mlp_order, "mlp_order");
}

NodeId order_items(ModelGraph& g, NodeId cur,
                   const std::vector<LayerOrderItem>& order, double rate,
                   bool relu, bool batchnorm) {
    for (LayerOrderItem item : order) {
        switch (item) {
        case LayerOrderItem::Dropout:
            cur = chain(g, cur, dropout(rate));
            break;
        case LayerOrderItem::Activation:
            cur = chain(g, cur, simple(relu ? LayerKind::ReLU : LayerKind::ELU));
            break;
        case LayerOrderItem::BatchNorm:
            if (batchnorm) cur = chain(g, cur, simple(LayerKind::BatchNorm));
            break;
        }
    }
    return cur;
}

} // namespace

ModelGraph build_cnn_mlp(const CnnMlpParams& p, CnnDims dims,
                         int64_t input_length, int64_t num_classes) {
    check_cnn_mlp(p);
    ModelGraph g;
    g.input_length = input_length;
    g.input_channels = 1;
    g.num_classes = num_classes;

    LayerSpec input = simple(LayerKind::Input);
    input.reshape2d = (dims == CnnDims::TwoD);
    NodeId cur = g.add_node(input);

    for (int64_t b = 0; b < p.conv_pool_blocks; ++b) {
        // filters are cut in half per block after the first two, which use
        // a fixed repeat of 2
        int64_t f = (b < 2) ? p.filters : std::max<int64_t>(1, p.filters >> (b - 1));
        int64_t repeat = (b < 2) ? 2 : p.conv_block_repeat;
        for (int64_t r = 0; r < repeat; ++r) {
            cur = chain(g, cur, conv1d(p.kernel, f));
            cur = order_items(g, cur, p.conv_order, p.conv_dropout,
                              p.activation_relu, p.conv_batchnorm);
        }
        cur = chain(g, cur,
                    pool(p.pooling_max ? LayerKind::MaxPool1D
                                       : LayerKind::AvgPool1D,
                         2, 2));
    }
    cur = chain(g, cur, simple(LayerKind::Flatten));

    int64_t units = p.dense_units;
    for (int64_t i = 0; i < p.dense_layers; ++i) {
        cur = chain(g, cur, dense(units));
        cur = order_items(g, cur, p.mlp_order, p.mlp_dropout,
                          p.mlp_activation_relu, p.mlp_batchnorm);
        units = static_cast<int64_t>(std::floor(static_cast<double>(units) *
                                                p.reduce_factor));
    }
    cur = chain(g, cur, dense(num_classes));
    chain(g, cur, simple(LayerKind::Softmax));
    return g;
}

// ---- Fixed reference baselines --------------------------------------------

ReferenceModel reference_from_name(const std::string& name) {
    if (name == "UWOrangeH") return ReferenceModel::UWOrangeH;
    if (name == "UCDavisCNN") return ReferenceModel::UCDavisCNN;
    if (name == "DeepPacketCNN") return ReferenceModel::DeepPacketCNN;
    if (name == "E2ECNN") return ReferenceModel::E2ECNN;
    throw UnknownReference("unknown reference model: " + name);
}

const char* reference_name(ReferenceModel m) {
    switch (m) {
    case ReferenceModel::UWOrangeH: return "UWOrangeH";
    case ReferenceModel::UCDavisCNN: return "UCDavisCNN";
    case ReferenceModel::DeepPacketCNN: return "DeepPacketCNN";
    case ReferenceModel::E2ECNN: return "E2ECNN";
    }
    return "?";
}

ModelGraph build_reference(ReferenceModel name, int64_t input_len,
                           int64_t num_classes) {
    ModelGraph g;
    g.input_length = input_len;
    g.input_channels = 1;
    g.num_classes = num_classes;
    NodeId cur = g.add_node(simple(LayerKind::Input));

    // Published dimensions are only partially stated; widths below are
    // documented defaults and the resulting counts are approximate.
    switch (name) {
    case ReferenceModel::DeepPacketCNN:
        // two 1D convolutions, one max pool, four dense layers ending in the
        // softmax classifier
        cur = chain(g, cur, conv1d(4, 200, 3));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, conv1d(5, 200, 1));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, pool(LayerKind::MaxPool1D, 2, 2));
        cur = chain(g, cur, simple(LayerKind::Flatten));
        for (int64_t units : {int64_t{200}, int64_t{100}, int64_t{50}}) {
            cur = chain(g, cur, dense(units));
            cur = chain(g, cur, simple(LayerKind::ReLU));
            cur = chain(g, cur, dropout(0.05));
        }
        cur = chain(g, cur, dense(num_classes));
        break;
    case ReferenceModel::E2ECNN:
        // (conv + max pool) x 2, then two fully-connected layers
        for (int64_t f : {int64_t{32}, int64_t{64}}) {
            cur = chain(g, cur, conv1d(25, f, 1));
            cur = chain(g, cur, simple(LayerKind::ReLU));
            cur = chain(g, cur, pool(LayerKind::MaxPool1D, 3, 3));
        }
        cur = chain(g, cur, simple(LayerKind::Flatten));
        cur = chain(g, cur, dense(1024));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, dense(num_classes));
        break;
    case ReferenceModel::UWOrangeH:
        cur = chain(g, cur, conv1d(4, 200, 3));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, conv1d(5, 200, 1));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, pool(LayerKind::MaxPool1D, 2, 2));
        cur = chain(g, cur, simple(LayerKind::Flatten));
        for (int64_t units : {int64_t{120}, int64_t{120}}) {
            cur = chain(g, cur, dense(units));
            cur = chain(g, cur, simple(LayerKind::ReLU));
            cur = chain(g, cur, dropout(0.3));
        }
        cur = chain(g, cur, dense(num_classes));
        break;
    case ReferenceModel::UCDavisCNN:
        // same CNN trunk as UWOrange-H, narrower head, no dropout
        cur = chain(g, cur, conv1d(4, 200, 3));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, conv1d(5, 200, 1));
        cur = chain(g, cur, simple(LayerKind::ReLU));
        cur = chain(g, cur, pool(LayerKind::MaxPool1D, 2, 2));
        cur = chain(g, cur, simple(LayerKind::Flatten));
        for (int64_t units : {int64_t{100}, int64_t{100}}) {
            cur = chain(g, cur, dense(units));
            cur = chain(g, cur, simple(LayerKind::ReLU));
        }
        cur = chain(g, cur, dense(num_classes));
        break;
    }
    chain(g, cur, simple(LayerKind::Softmax));
    return g;
}

} // namespace etcnas

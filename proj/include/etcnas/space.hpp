#pragma once

// Decision sequences and their decoding into ModelGraphs: the cell-based
// micro search space, the CNN+MLP baseline spaces, and the fixed reference
// architectures.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "etcnas/graph.hpp"

namespace etcnas {

enum class CellOp { Identity, SepConv3, SepConv5, AvgPool3, MaxPool3 };

const char* cell_op_name(CellOp op);

struct SpaceConfig {
    int64_t nodes_per_cell = 4;
    std::vector<CellOp> op_set = {CellOp::Identity, CellOp::SepConv3,
                                  CellOp::SepConv5, CellOp::AvgPool3,
                                  CellOp::MaxPool3};
    int64_t num_cells = 2; // Normal [+ Reduction]
    int64_t initial_filters = 64;
    double cell_dropout_rate = 0.4;
    int64_t input_length = 600;
    int64_t input_channels = 1;
    int64_t num_classes = 2;

    // 4 integers per node: input1, op1, input2, op2
    int64_t sequence_length() const { return num_cells * nodes_per_cell * 4; }
};

using DecisionSequence = std::vector<int64_t>;

struct NodeDecision {
    int64_t input1 = 0;
    int64_t op1 = 0;
    int64_t input2 = 0;
    int64_t op2 = 0;
};

enum class CellKind { Normal, Reduction };

struct CellSpec {
    CellKind kind = CellKind::Normal;
    std::vector<NodeDecision> decisions;
};

// Number of valid values at a sequence position. Input slots at node k have
// arity k+1 (the cell input plus k prior node outputs); op slots have arity
// |op_set|.
int64_t decision_arity(const SpaceConfig& space, int64_t position);

bool is_op_position(int64_t position);

void check_sequence(const SpaceConfig& space, const DecisionSequence& seq);

DecisionSequence sample_random(const SpaceConfig& space, std::mt19937_64& rng);

// Cardinality of the space: prod over cells, nodes k of (k+1)^2 * |op_set|^2.
unsigned __int128 space_size(const SpaceConfig& space);
std::string space_size_str(const SpaceConfig& space);

std::vector<CellSpec> to_cells(const SpaceConfig& space,
                               const DecisionSequence& seq);

ModelGraph decode(const DecisionSequence& seq, const SpaceConfig& space);

// ---- CNN + MLP baseline spaces --------------------------------------------

enum class LayerOrderItem { Dropout, Activation, BatchNorm };

struct CnnMlpParams {
    // CNN half
    int64_t conv_pool_blocks = 2;       // CONV-Pool Block Repeat
    int64_t conv_block_repeat = 2;      // in {2..6}, applies after block 2
    int64_t kernel = 2;                 // in {1, 2}
    int64_t filters = 32;               // in {32, 64}
    double conv_dropout = 0.02;         // in (0, 0.05)
    std::vector<LayerOrderItem> conv_order = {LayerOrderItem::Dropout,
                                              LayerOrderItem::Activation,
                                              LayerOrderItem::BatchNorm};
    bool pooling_max = true;            // MaxPool vs AveragePool
    bool activation_relu = true;        // relu vs elu
    bool conv_batchnorm = true;         // optional
    // MLP half
    int64_t dense_units = 100;          // in {100, 200, 400}
    int64_t dense_layers = 3;           // in {3, 4, 5}
    double reduce_factor = 1.0;         // in {1, 0.7}
    bool mlp_activation_relu = true;
    bool mlp_batchnorm = true;          // optional
    double mlp_dropout = 0.4;           // in (0.3, 0.5)
    std::vector<LayerOrderItem> mlp_order = {LayerOrderItem::Dropout,
                                             LayerOrderItem::BatchNorm,
                                             LayerOrderItem::Activation};
};

enum class CnnDims { OneD, TwoD };

ModelGraph build_cnn_mlp(const CnnMlpParams& params, CnnDims dims,
                         int64_t input_length, int64_t num_classes);

// ---- Fixed reference baselines --------------------------------------------

enum class ReferenceModel { UWOrangeH, UCDavisCNN, DeepPacketCNN, E2ECNN };

ReferenceModel reference_from_name(const std::string& name);
const char* reference_name(ReferenceModel m);

ModelGraph build_reference(ReferenceModel name, int64_t input_len,
                           int64_t num_classes);

} // namespace etcnas

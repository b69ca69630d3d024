#include "etcnas/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace etcnas {

namespace {

constexpr const char* kSchemaTag = "etcnas-graph/1";

constexpr std::array<const char*, 16> kKindNames = {
    "Input", "Conv1D", "SeparableConv1D", "Dense", "BatchNorm", "Dropout",
    "ReLU", "ELU", "MaxPool1D", "AvgPool1D", "Add", "Concat", "Flatten",
    "GlobalAvgPool", "Softmax", "Identity"};

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

} // namespace

const char* layer_kind_name(LayerKind k) {
    return kKindNames[static_cast<size_t>(k)];
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (size_t i = 0; i < kKindNames.size(); ++i)
        if (name == kKindNames[i]) return static_cast<LayerKind>(i);
    throw ParseError("unknown layer kind: " + name);
}

int64_t Shape::elements() const {
    int64_t n = channels;
    for (int64_t s : spatial) n *= s;
    return n;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << "(";
    for (int64_t s : spatial) os << s << ",";
    os << channels << ")";
    return os.str();
}

NodeId ModelGraph::add_node(const LayerSpec& spec) {
    NodeId id = next_id_++;
    nodes.emplace_back(id, spec);
    return id;
}

void ModelGraph::connect(NodeId src, NodeId dst, int64_t slot) {
    edges.push_back({src, dst, slot});
}

const LayerSpec& ModelGraph::spec_of(NodeId id) const {
    for (const auto& [nid, spec] : nodes)
        if (nid == id) return spec;
    throw UnreachableNode("no node with id " + std::to_string(id));
}

std::vector<NodeId> ModelGraph::inputs_of(NodeId id) const {
    std::vector<const Edge*> in;
    for (const auto& e : edges)
        if (e.dst == id) in.push_back(&e);
    std::sort(in.begin(), in.end(),
              [](const Edge* a, const Edge* b) { return a->slot < b->slot; });
    std::vector<NodeId> out;
    out.reserve(in.size());
    for (const Edge* e : in) out.push_back(e->src);
    return out;
}

std::vector<NodeId> ModelGraph::topological_order() const {
    std::map<NodeId, int64_t> indegree;
    for (const auto& [id, spec] : nodes) indegree[id] = 0;
    for (const auto& e : edges) {
        if (!indegree.count(e.src) || !indegree.count(e.dst))
            throw ParseError("edge references unknown node id");
        indegree[e.dst]++;
    }
    std::vector<NodeId> ready, order;
    for (const auto& [id, spec] : nodes)
        if (indegree[id] == 0) ready.push_back(id);
    while (!ready.empty()) {
        NodeId n = ready.back();
        ready.pop_back();
        order.push_back(n);
        for (const auto& e : edges)
            if (e.src == n && --indegree[e.dst] == 0) ready.push_back(e.dst);
    }
    if (order.size() != nodes.size())
        throw ShapeMismatch("graph contains a cycle");
    return order;
}

std::map<NodeId, Shape> infer_shapes(const ModelGraph& graph) {
    int input_count = 0, softmax_count = 0;
    NodeId input_id = -1;
    for (const auto& [id, spec] : graph.nodes) {
        if (spec.kind == LayerKind::Input) { input_count++; input_id = id; }
        if (spec.kind == LayerKind::Softmax) softmax_count++;
    }
    if (input_count != 1)
        throw ShapeMismatch("graph must have exactly one Input node, found " +
                            std::to_string(input_count));
    if (softmax_count != 1)
        throw ShapeMismatch("graph must have exactly one Softmax node, found " +
                            std::to_string(softmax_count));

    auto order = graph.topological_order();
    std::map<NodeId, Shape> shapes;
    for (NodeId id : order) {
        const LayerSpec& spec = graph.spec_of(id);
        auto in_ids = graph.inputs_of(id);
        if (spec.kind == LayerKind::Input) {
            if (!in_ids.empty())
                throw ShapeMismatch("Input node must not have in-edges");
            Shape s;
            if (spec.reshape2d) {
                auto side = static_cast<int64_t>(
                    std::ceil(std::sqrt(static_cast<double>(graph.input_length))));
                int64_t h = side;
                int64_t w = ceil_div(graph.input_length, side);
                s.spatial = {h, w}; // zero-padded to the next rectangle
            } else {
                s.spatial = {graph.input_length};
            }
            s.channels = graph.input_channels;
            shapes[id] = s;
            continue;
        }
        if (in_ids.empty())
            throw UnreachableNode("node " + std::to_string(id) +
                                  " is unreachable from Input");
        std::vector<Shape> in;
        for (NodeId src : in_ids) in.push_back(shapes.at(src));
        const Shape& a = in[0];
        Shape out = a;
        switch (spec.kind) {
        case LayerKind::Conv1D:
        case LayerKind::SeparableConv1D:
            if (a.spatial.empty())
                throw ShapeMismatch("conv over flattened input");
            for (auto& d : out.spatial) d = ceil_div(d, spec.stride);
            out.channels = spec.filters;
            break;
        case LayerKind::MaxPool1D:
        case LayerKind::AvgPool1D:
            if (a.spatial.empty())
                throw ShapeMismatch("pool over flattened input");
            for (auto& d : out.spatial) d = ceil_div(d, spec.stride);
            break;
        case LayerKind::Dense:
            if (!a.spatial.empty())
                throw ShapeMismatch("Dense requires flattened input, got " + a.str());
            out.channels = spec.units;
            break;
        case LayerKind::Flatten:
            out.spatial.clear();
            out.channels = a.elements();
            break;
        case LayerKind::GlobalAvgPool:
            out.spatial.clear();
            out.channels = a.channels;
            break;
        case LayerKind::Add:
            if (in.size() < 2)
                throw ShapeMismatch("Add needs >= 2 inputs");
            for (const Shape& s : in)
                if (!(s == a))
                    throw ShapeMismatch("Add input shapes differ: " + a.str() +
                                        " vs " + s.str());
            break;
        case LayerKind::Concat: {
            int64_t c = 0;
            for (const Shape& s : in) {
                if (s.spatial != a.spatial)
                    throw ShapeMismatch("Concat spatial dims differ: " + a.str() +
                                        " vs " + s.str());
                c += s.channels;
            }
            out.channels = c;
            break;
        }
        case LayerKind::BatchNorm:
        case LayerKind::Dropout:
        case LayerKind::ReLU:
        case LayerKind::ELU:
        case LayerKind::Softmax:
        case LayerKind::Identity:
            break;
        case LayerKind::Input:
            break; // handled above
        }
        if (spec.kind != LayerKind::Add && spec.kind != LayerKind::Concat &&
            in.size() != 1)
            throw ShapeMismatch(std::string(layer_kind_name(spec.kind)) +
                                " takes exactly one input");
        shapes[id] = out;
    }

    // reachability from Input: every node except Input must have appeared via
    // an in-edge chain; topological order already guarantees edge consistency,
    // check connectivity explicitly.
    std::map<NodeId, bool> reached;
    reached[input_id] = true;
    for (NodeId id : order) {
        if (id == input_id) continue;
        bool r = false;
        for (NodeId src : graph.inputs_of(id)) r = r || reached[src];
        if (!r)
            throw UnreachableNode("node " + std::to_string(id) +
                                  " is unreachable from Input");
        reached[id] = true;
    }
    return shapes;
}

void validate(const ModelGraph& graph) { infer_shapes(graph); }

ParamCount count_params(const ModelGraph& graph) {
    auto shapes = infer_shapes(graph);
    ParamCount pc;
    for (const auto& [id, spec] : graph.nodes) {
        auto in_ids = graph.inputs_of(id);
        int64_t c_in = in_ids.empty() ? 0 : shapes.at(in_ids[0]).channels;
        int64_t spatial_rank =
            in_ids.empty() ? 0
                           : static_cast<int64_t>(shapes.at(in_ids[0]).spatial.size());
        switch (spec.kind) {
        case LayerKind::Conv1D: {
            int64_t kvol = 1;
            for (int64_t d = 0; d < spatial_rank; ++d) kvol *= spec.kernel_size;
            pc.total += kvol * c_in * spec.filters + spec.filters;
            pc.trainable += kvol * c_in * spec.filters + spec.filters;
            break;
        }
        case LayerKind::SeparableConv1D: {
            int64_t kvol = 1;
            for (int64_t d = 0; d < spatial_rank; ++d) kvol *= spec.kernel_size;
            // depthwise carries no bias, pointwise does
            int64_t n = kvol * c_in + c_in * spec.filters + spec.filters;
            pc.total += n;
            pc.trainable += n;
            break;
        }
        case LayerKind::Dense:
            pc.total += c_in * spec.units + spec.units;
            pc.trainable += c_in * spec.units + spec.units;
            break;
        case LayerKind::BatchNorm:
            pc.total += 4 * c_in;     // gamma, beta, moving mean, moving var
            pc.trainable += 2 * c_in; // gamma, beta
            break;
        default:
            break;
        }
    }
    return pc;
}

std::string serialize(const ModelGraph& graph) {
    nlohmann::ordered_json j;
    j["schema"] = kSchemaTag;
    j["input_length"] = graph.input_length;
    j["input_channels"] = graph.input_channels;
    j["num_classes"] = graph.num_classes;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& [id, spec] : graph.nodes) {
        nlohmann::ordered_json n;
        n["id"] = id;
        n["kind"] = layer_kind_name(spec.kind);
        if (spec.kernel_size) n["kernel_size"] = spec.kernel_size;
        if (spec.stride != 1) n["stride"] = spec.stride;
        if (spec.filters) n["filters"] = spec.filters;
        if (spec.units) n["units"] = spec.units;
        if (spec.rate != 0.0) n["rate"] = spec.rate;
        if (spec.offset) n["offset"] = spec.offset;
        if (spec.reshape2d) n["reshape2d"] = true;
        j["nodes"].push_back(n);
    }
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : graph.edges)
        j["edges"].push_back({e.src, e.dst, e.slot});
    return j.dump(2);
}

ModelGraph deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("bad graph descriptor: ") + e.what());
    }
    try {
        if (!j.contains("schema"))
            throw ParseError("missing schema tag");
        if (j["schema"] != kSchemaTag)
            throw SchemaVersionMismatch("expected " + std::string(kSchemaTag) +
                                        ", found " +
                                        j["schema"].get<std::string>());
        ModelGraph g;
        g.input_length = j.at("input_length").get<int64_t>();
        g.input_channels = j.at("input_channels").get<int64_t>();
        g.num_classes = j.at("num_classes").get<int64_t>();
        std::map<NodeId, bool> seen;
        NodeId max_id = -1;
        for (const auto& n : j.at("nodes")) {
            LayerSpec spec;
            spec.kind = layer_kind_from_name(n.at("kind").get<std::string>());
            spec.kernel_size = n.value("kernel_size", int64_t{0});
            spec.stride = n.value("stride", int64_t{1});
            spec.filters = n.value("filters", int64_t{0});
            spec.units = n.value("units", int64_t{0});
            spec.rate = n.value("rate", 0.0);
            spec.offset = n.value("offset", int64_t{0});
            spec.reshape2d = n.value("reshape2d", false);
            NodeId id = n.at("id").get<NodeId>();
            g.nodes.emplace_back(id, spec);
            seen[id] = true;
            max_id = std::max(max_id, id);
        }
        g.set_next_id(max_id + 1);
        for (const auto& e : j.at("edges")) {
            Edge edge{e.at(0).get<NodeId>(), e.at(1).get<NodeId>(),
                      e.at(2).get<int64_t>()};
            if (!seen.count(edge.src) || !seen.count(edge.dst))
                throw ParseError("edge (" + std::to_string(edge.src) + "," +
                                 std::to_string(edge.dst) +
                                 ") references a missing node id");
            g.edges.push_back(edge);
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad graph descriptor field: ") + e.what());
    }
}

} // namespace etcnas

// Python bindings for the core operations: space decoding and sizing,
// parameter accounting, graph descriptors, metrics, dataset IO and the
// search loop with a Python evaluator callback.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "etcnas/controllers.hpp"
#include "etcnas/dataset.hpp"
#include "etcnas/metrics.hpp"
#include "etcnas/orchestrator.hpp"
#include "etcnas/space.hpp"

namespace py = pybind11;
using namespace etcnas;

PYBIND11_MODULE(_etcnas, m) {
    m.doc() = "architecture search for early encrypted-traffic classification";

    py::class_<SpaceConfig>(m, "SpaceConfig")
        .def(py::init<>())
        .def_readwrite("nodes_per_cell", &SpaceConfig::nodes_per_cell)
        .def_readwrite("num_cells", &SpaceConfig::num_cells)
        .def_readwrite("initial_filters", &SpaceConfig::initial_filters)
        .def_readwrite("input_length", &SpaceConfig::input_length)
        .def_readwrite("input_channels", &SpaceConfig::input_channels)
        .def_readwrite("num_classes", &SpaceConfig::num_classes)
        .def("sequence_length", &SpaceConfig::sequence_length);

    py::class_<ParamCount>(m, "ParamCount")
        .def_readonly("total", &ParamCount::total)
        .def_readonly("trainable", &ParamCount::trainable);

    py::class_<ModelGraph>(m, "ModelGraph")
        .def_property_readonly(
            "num_nodes",
            [](const ModelGraph& g) { return g.nodes.size(); })
        .def_readonly("input_length", &ModelGraph::input_length)
        .def_readonly("num_classes", &ModelGraph::num_classes);

    m.def("decode", &decode, py::arg("sequence"), py::arg("space"));
    m.def("space_size", &space_size_str, py::arg("space"));
    m.def("count_params",
          [](const ModelGraph& g) { return count_params(g); });
    m.def("serialize", &serialize);
    m.def("deserialize", &deserialize);
    m.def("sample_random", [](const SpaceConfig& space, uint64_t seed) {
        std::mt19937_64 rng(seed);
        return sample_random(space, rng);
    }, py::arg("space"), py::arg("seed"));

    py::class_<Scores>(m, "Scores")
        .def_readonly("accuracy", &Scores::accuracy)
        .def_readonly("weighted_precision", &Scores::weighted_precision)
        .def_readonly("weighted_recall", &Scores::weighted_recall)
        .def_readonly("weighted_f1", &Scores::weighted_f1);

    m.def(
        "scores",
        [](const std::vector<int64_t>& y_true,
           const std::vector<int64_t>& y_pred, int64_t num_classes) {
            return scores(confusion(y_true, y_pred, num_classes));
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("num_classes"));

    py::class_<ByteDataset>(m, "ByteDataset")
        .def(py::init<>())
        .def_readwrite("feature_len", &ByteDataset::feature_len)
        .def_readwrite("class_names", &ByteDataset::class_names)
        .def_readwrite("features", &ByteDataset::features)
        .def_readwrite("labels", &ByteDataset::labels)
        .def("size", &ByteDataset::size)
        .def("num_classes", &ByteDataset::num_classes);

    m.def("write_dataset", &write_dataset);
    m.def("read_dataset", &read_dataset);
    m.def("make_synthetic", &make_synthetic, py::arg("samples"),
          py::arg("feature_len"), py::arg("num_classes"), py::arg("seed"));

    py::class_<TrialRecord>(m, "TrialRecord")
        .def(py::init<>())
        .def_readwrite("trial_index", &TrialRecord::trial_index)
        .def_readwrite("sequence", &TrialRecord::sequence)
        .def_readwrite("reward", &TrialRecord::reward);

    py::class_<SearchReport>(m, "SearchReport")
        .def_readonly("trials", &SearchReport::trials)
        .def_readonly("strategy", &SearchReport::strategy);

    m.def(
        "run_search",
        [](const std::string& strategy, const SpaceConfig& space,
           const std::function<double(const DecisionSequence&)>& evaluator,
           int64_t trials, uint64_t seed) {
            Evaluator ev = [&](const DecisionSequence& seq) {
                TrialRecord r;
                r.reward = evaluator(seq);
                return r;
            };
            return run_search(strategy_from_name(strategy), space, ev, trials,
                              seed);
        },
        py::arg("strategy"), py::arg("space"), py::arg("evaluator"),
        py::arg("trials"), py::arg("seed"));

    m.def("top_n", &top_n, py::arg("report"), py::arg("n"));
}

#pragma once

// Canonical labeled byte dataset: fixed-length feature vectors with class
// labels, binary file format, CSV import adapter, stratified splitting and
// the synthetic sets used for desk-scale training checks.

#include <cstdint>
#include <string>
#include <vector>

#include "etcnas/errors.hpp"
#include "etcnas/tensor.hpp"

namespace etcnas {

struct ByteDataset {
    int64_t feature_len = 0;
    std::vector<std::string> class_names;
    std::vector<std::vector<uint8_t>> features; // each exactly feature_len
    std::vector<int64_t> labels;

    int64_t size() const { return static_cast<int64_t>(features.size()); }
    int64_t num_classes() const {
        return static_cast<int64_t>(class_names.size());
    }
};

void write_dataset(const ByteDataset& ds, const std::string& path);
ByteDataset read_dataset(const std::string& path);

// One row = comma-separated feature bytes followed by the class name.
ByteDataset import_csv(const std::string& path, int64_t feature_len);

struct SplitWarning {
    int64_t class_index = 0;
    std::string message;
};

struct SplitResultSet {
    ByteDataset train;
    ByteDataset test;
    std::vector<SplitWarning> warnings;
};

// Stratified deterministic split; per-class train count is
// min(round(fraction * n), n - 1) for n >= 2 and n for singleton classes
// (flagged with a warning).
SplitResultSet split_dataset(const ByteDataset& ds, double train_fraction,
                             uint64_t seed);

// bytes scaled to [0, 1], shaped (N, feature_len, 1)
Tensor to_tensor(const ByteDataset& ds);

// Linearly separable synthetic byte data: class means spread across the byte
// range with small noise, separable even after global averaging.
ByteDataset make_synthetic(int64_t samples, int64_t feature_len,
                           int64_t num_classes, uint64_t seed);

} // namespace etcnas

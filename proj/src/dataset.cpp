#include "etcnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace etcnas {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'C', 'D'};
constexpr uint32_t kVersion = 1;

template <typename T> void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T> T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("truncated dataset file");
    return v;
}

} // namespace

void write_dataset(const ByteDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open dataset for writing: " + path);
    os.write(kMagic, 4);
    put<uint32_t>(os, kVersion);
    put<uint64_t>(os, ds.features.size());
    put<uint32_t>(os, static_cast<uint32_t>(ds.feature_len));
    put<uint32_t>(os, static_cast<uint32_t>(ds.class_names.size()));
    for (const auto& name : ds.class_names) {
        put<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (size_t i = 0; i < ds.features.size(); ++i) {
        if (static_cast<int64_t>(ds.features[i].size()) != ds.feature_len)
            throw LengthMismatch("sample " + std::to_string(i) +
                                 " feature length mismatch");
        os.write(reinterpret_cast<const char*>(ds.features[i].data()),
                 ds.feature_len);
        put<uint32_t>(os, static_cast<uint32_t>(ds.labels[i]));
    }
}

ByteDataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open dataset: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw MagicMismatch("not a dataset file: " + path);
    auto version = get<uint32_t>(is);
    if (version != kVersion)
        throw SchemaVersionMismatch("unsupported dataset version " +
                                    std::to_string(version));
    ByteDataset ds;
    auto n = get<uint64_t>(is);
    ds.feature_len = get<uint32_t>(is);
    auto n_classes = get<uint32_t>(is);
    for (uint32_t i = 0; i < n_classes; ++i) {
        auto len = get<uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw ParseError("truncated class-name table");
        ds.class_names.push_back(name);
    }
    for (uint64_t i = 0; i < n; ++i) {
        std::vector<uint8_t> row(ds.feature_len);
        is.read(reinterpret_cast<char*>(row.data()), ds.feature_len);
        auto label = get<uint32_t>(is);
        if (!is) throw ParseError("truncated sample records");
        if (label >= n_classes)
            throw LabelOutOfRange("sample " + std::to_string(i) +
                                  " label out of range");
        ds.features.push_back(std::move(row));
        ds.labels.push_back(label);
    }
    return ds;
}

ByteDataset import_csv(const std::string& path, int64_t feature_len) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open CSV: " + path);
    ByteDataset ds;
    ds.feature_len = feature_len;
    std::map<std::string, int64_t> class_index;
    std::string line;
    int64_t row_no = 0;
    while (std::getline(is, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (static_cast<int64_t>(fields.size()) != feature_len + 1)
            throw LengthMismatch("row " + std::to_string(row_no) + " has " +
                                 std::to_string(fields.size() - 1) +
                                 " features, expected " +
                                 std::to_string(feature_len));
        std::vector<uint8_t> row(feature_len);
        for (int64_t i = 0; i < feature_len; ++i) {
            int v = std::stoi(fields[i]);
            if (v < 0 || v > 255)
                throw ParseError("row " + std::to_string(row_no) +
                                 ": byte value out of range");
            row[i] = static_cast<uint8_t>(v);
        }
        const std::string& cls = fields.back();
        auto it = class_index.find(cls);
        if (it == class_index.end()) {
            it = class_index.emplace(cls, ds.class_names.size()).first;
            ds.class_names.push_back(cls);
        }
        ds.features.push_back(std::move(row));
        ds.labels.push_back(it->second);
    }
    return ds;
}

SplitResultSet split_dataset(const ByteDataset& ds, double train_fraction,
                             uint64_t seed) {
    SplitResultSet out;
    out.train.feature_len = out.test.feature_len = ds.feature_len;
    out.train.class_names = out.test.class_names = ds.class_names;
    std::mt19937_64 rng(seed);
    for (int64_t c = 0; c < ds.num_classes(); ++c) {
        std::vector<int64_t> idx;
        for (int64_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == c) idx.push_back(i);
        int64_t n = static_cast<int64_t>(idx.size());
        if (n == 0) {
            out.warnings.push_back({c, "class has no samples"});
            continue;
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        int64_t train_n;
        if (n == 1) {
            train_n = 1;
            out.warnings.push_back({c, "singleton class: no test samples"});
        } else {
            train_n = std::min<int64_t>(
                static_cast<int64_t>(std::llround(train_fraction *
                                                  static_cast<double>(n))),
                n - 1);
            if (train_n < 1) train_n = 1;
        }
        for (int64_t i = 0; i < n; ++i) {
            ByteDataset& dst = i < train_n ? out.train : out.test;
            dst.features.push_back(ds.features[idx[i]]);
            dst.labels.push_back(c);
        }
    }
    return out;
}

Tensor to_tensor(const ByteDataset& ds) {
    Tensor t({ds.size(), ds.feature_len, 1});
    for (int64_t i = 0; i < ds.size(); ++i)
        for (int64_t j = 0; j < ds.feature_len; ++j)
            t.data[i * ds.feature_len + j] =
                static_cast<double>(ds.features[i][j]) / 255.0;
    return t;
}

ByteDataset make_synthetic(int64_t samples, int64_t feature_len,
                           int64_t num_classes, uint64_t seed) {
    ByteDataset ds;
    ds.feature_len = feature_len;
    for (int64_t c = 0; c < num_classes; ++c)
        ds.class_names.push_back("class" + std::to_string(c));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 10.0);
    for (int64_t i = 0; i < samples; ++i) {
        int64_t c = i % num_classes;
        double mean = 40.0 + 175.0 * static_cast<double>(c) /
                                 static_cast<double>(std::max<int64_t>(
                                     num_classes - 1, 1));
        std::vector<uint8_t> row(feature_len);
        for (int64_t j = 0; j < feature_len; ++j) {
            double v = mean + noise(rng);
            row[j] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        }
        ds.features.push_back(std::move(row));
        ds.labels.push_back(c);
    }
    return ds;
}

} // namespace etcnas

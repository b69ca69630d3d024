#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "etcnas/dataset.hpp"

using namespace etcnas;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p) : path(p) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("binary format round-trips exactly") {
    ByteDataset ds = make_synthetic(100, 24, 3, 7);
    TempFile f("ds_roundtrip.etcd");
    write_dataset(ds, f.path);
    ByteDataset r = read_dataset(f.path);
    CHECK(r.feature_len == ds.feature_len);
    CHECK(r.class_names == ds.class_names);
    CHECK(r.features == ds.features);
    CHECK(r.labels == ds.labels);
}

TEST_CASE("reader rejects foreign files and future versions") {
    TempFile f("ds_bad.etcd");
    {
        std::ofstream os(f.path, std::ios::binary);
        os << "NOPE" << std::string(64, '\0');
    }
    CHECK_THROWS_AS(read_dataset(f.path), MagicMismatch);

    ByteDataset ds = make_synthetic(4, 8, 2, 1);
    write_dataset(ds, f.path);
    // bump the version field in place (bytes 4..7)
    std::fstream fs(f.path, std::ios::in | std::ios::out | std::ios::binary);
    fs.seekp(4);
    uint32_t v = 99;
    fs.write(reinterpret_cast<char*>(&v), 4);
    fs.close();
    CHECK_THROWS_AS(read_dataset(f.path), SchemaVersionMismatch);
}

TEST_CASE("csv import maps class names and checks row widths") {
    TempFile f("ds_import.csv");
    {
        std::ofstream os(f.path);
        os << "1,2,3,catA\n4,5,6,catB\n7,8,9,catA\n";
    }
    ByteDataset ds = import_csv(f.path, 3);
    CHECK(ds.size() == 3);
    CHECK(ds.class_names == std::vector<std::string>{"catA", "catB"});
    CHECK(ds.labels == std::vector<int64_t>{0, 1, 0});
    CHECK(ds.features[1] == std::vector<uint8_t>{4, 5, 6});

    {
        std::ofstream os(f.path);
        os << "1,2,3,catA\n4,5,catB\n";
    }
    try {
        import_csv(f.path, 3);
        FAIL("expected LengthMismatch");
    } catch (const LengthMismatch& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos); // row 2
    }
}

TEST_CASE("stratified split: 100 samples over 2 classes -> 40/10 each") {
    ByteDataset ds = make_synthetic(100, 8, 2, 5); // alternating labels
    auto split = split_dataset(ds, 0.8, 5);
    CHECK(split.train.size() == 80);
    CHECK(split.test.size() == 20);
    for (int64_t c = 0; c < 2; ++c) {
        int64_t train_c = 0, test_c = 0;
        for (auto l : split.train.labels) train_c += (l == c);
        for (auto l : split.test.labels) test_c += (l == c);
        CHECK(train_c == 40);
        CHECK(test_c == 10);
    }
    CHECK(split.warnings.empty());
}

TEST_CASE("split is deterministic per seed") {
    ByteDataset ds = make_synthetic(50, 8, 2, 9);
    auto a = split_dataset(ds, 0.8, 1);
    auto b = split_dataset(ds, 0.8, 1);
    auto c = split_dataset(ds, 0.8, 2);
    CHECK(a.train.features == b.train.features);
    CHECK(a.train.features != c.train.features);
}

TEST_CASE("small classes: round(0.8 n) floored at n-1, singletons flagged") {
    ByteDataset ds;
    ds.feature_len = 4;
    ds.class_names = {"a", "b"};
    for (int i = 0; i < 3; ++i) {
        ds.features.push_back({1, 2, 3, 4});
        ds.labels.push_back(0);
    }
    ds.features.push_back({9, 9, 9, 9});
    ds.labels.push_back(1);
    auto split = split_dataset(ds, 0.8, 3);
    // class a: round(2.4) = 2 train, 1 test; class b singleton: all train
    int64_t a_train = 0, a_test = 0;
    for (auto l : split.train.labels) a_train += (l == 0);
    for (auto l : split.test.labels) a_test += (l == 0);
    CHECK(a_train == 2);
    CHECK(a_test == 1);
    REQUIRE(split.warnings.size() == 1);
    CHECK(split.warnings[0].class_index == 1);
}

TEST_CASE("to_tensor scales bytes into [0,1] with trailing channel dim") {
    ByteDataset ds;
    ds.feature_len = 2;
    ds.class_names = {"x"};
    ds.features = {{0, 255}, {51, 102}};
    ds.labels = {0, 0};
    Tensor t = to_tensor(ds);
    CHECK(t.shape == std::vector<int64_t>{2, 2, 1});
    CHECK(t.data[0] == doctest::Approx(0.0));
    CHECK(t.data[1] == doctest::Approx(1.0));
    CHECK(t.data[2] == doctest::Approx(0.2));
    CHECK(t.data[3] == doctest::Approx(0.4));
}

TEST_CASE("synthetic classes are separated in mean byte value") {
    ByteDataset ds = make_synthetic(200, 32, 2, 2);
    double mean[2] = {0, 0};
    int64_t count[2] = {0, 0};
    for (int64_t i = 0; i < ds.size(); ++i) {
        double m = 0;
        for (auto b : ds.features[i]) m += b;
        mean[ds.labels[i]] += m / 32.0;
        count[ds.labels[i]]++;
    }
    CHECK(mean[1] / count[1] - mean[0] / count[0] > 100.0);
}

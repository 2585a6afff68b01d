#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "vfl/data.hpp"
#include "vfl/engine.hpp"
#include "vfl/errors.hpp"
#include "vfl/info.hpp"

using namespace vfl;
using namespace vfl::data;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
}

fs::path write_bytes(const std::string& name, const std::vector<unsigned char>& bytes) {
    const fs::path p = fs::temp_directory_path() / ("vflsim_test_" + name);
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                             static_cast<std::streamsize>(bytes.size()));
    return p;
}

std::vector<unsigned char> image_file(std::uint32_t magic, std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
    std::vector<unsigned char> b;
    put_u32(b, magic);
    put_u32(b, count);
    put_u32(b, rows);
    put_u32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

std::vector<unsigned char> label_file(std::uint32_t magic, const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> b;
    put_u32(b, magic);
    put_u32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

}  // namespace

TEST_CASE("gen_synthetic sizes, balance and determinism") {
    const Dataset a = gen_synthetic(103, 12, 10, 4.0, 9);
    CHECK(a.features.rows() == 103);
    CHECK(a.features.cols() == 12);
    CHECK(a.n_classes == 10);
    a.validate();
    std::vector<int> counts(10, 0);
    for (int y : a.labels) ++counts[static_cast<std::size_t>(y)];
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    CHECK(counts[0] == 11);  // remainder goes to low classes

    const Dataset b = gen_synthetic(103, 12, 10, 4.0, 9);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(gen_synthetic(103, 12, 10, 4.0, 10).features != a.features);
}

TEST_CASE("gen_synthetic rejects invalid sizes") {
    CHECK_THROWS_AS(gen_synthetic(5, 20, 10, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_synthetic(50, 5, 10, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_synthetic(50, 5, 1, 1.0, 1), ConfigError);
}

TEST_CASE("zero separation carries almost no label information") {
    const Dataset ds = gen_synthetic(10000, 10, 10, 0.0, 4);
    // Jointly hashing all columns would give every sample its own symbol, so
    // the check runs per column.
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c)
        CHECK(info::binned_mi(ds.features.col(c), ds.labels, 10).value <= 0.15);
}

TEST_CASE("well separated blobs are learnable by a shallow model") {
    const Dataset ds = gen_synthetic(2000, 20, 10, 10.0, 2);
    const auto spec = nn::mlp_spec(20, {32}, 10);
    const auto model = engine::train_centralized(spec, ds, 10, 64, 0.05, 2);
    const auto pred = argmax_rows(nn::forward(model, ds.features).back(), 10);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
    CHECK(static_cast<double>(hits) / static_cast<double>(pred.size()) >= 0.95);
}

TEST_CASE("load_idx reads a hand-built fixture exactly") {
    const auto img = write_bytes("img_ok", image_file(0x803, 2, 2, 2, {0, 255, 51, 102, 1, 2, 3, 254}));
    const auto lab = write_bytes("lab_ok", label_file(0x801, {3, 0}));
    const Dataset ds = load_idx(img, lab);
    REQUIRE(ds.features.rows() == 2);
    REQUIRE(ds.features.cols() == 4);
    const double expect[8] = {0, 255, 51, 102, 1, 2, 3, 254};
    for (int i = 0; i < 8; ++i) CHECK(ds.features(i / 4, i % 4) == expect[i] / 255.0);
    CHECK(ds.labels == Labels{3, 0});
    CHECK(ds.n_classes == 4);

    const Dataset one = load_idx(img, lab, 1);
    CHECK(one.features.rows() == 1);
    CHECK(one.labels == Labels{3});
}

TEST_CASE("load_idx format errors") {
    const auto img = write_bytes("img_fe", image_file(0x803, 3, 1, 2, {1, 2, 3, 4, 5, 6}));
    const auto lab2 = write_bytes("lab_fe2", label_file(0x801, {0, 1}));
    CHECK_THROWS_AS(load_idx(img, lab2), FormatError);

    const auto bad_magic = write_bytes("lab_fe_magic", label_file(0x803, {0, 1, 1}));
    CHECK_THROWS_AS(load_idx(img, bad_magic), FormatError);

    const auto short_img = write_bytes("img_short", image_file(0x803, 3, 1, 2, {1, 2, 3}));
    const auto lab3 = write_bytes("lab_fe3", label_file(0x801, {0, 1, 1}));
    CHECK_THROWS_AS(load_idx(short_img, lab3), FormatError);

    const auto header = write_bytes("img_header", {0, 0, 8, 3, 0});
    try {
        load_idx(header, lab3);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    CHECK_THROWS_AS(load_idx(fs::temp_directory_path() / "vflsim_no_such_file", lab3), IoError);
}

TEST_CASE("partition_features sizes and coverage") {
    const auto p = partition_features(10, 4, 3);
    REQUIRE(p.size() == 4);
    CHECK(p[0].size() == 3);
    CHECK(p[1].size() == 3);
    CHECK(p[2].size() == 2);
    CHECK(p[3].size() == 2);
    std::set<std::size_t> all;
    for (const auto& s : p) {
        CHECK(std::is_sorted(s.begin(), s.end()));
        all.insert(s.begin(), s.end());
    }
    CHECK(all.size() == 10);
    CHECK(*all.rbegin() == 9);

    const auto single = partition_features(7, 1, 5);
    CHECK(single == std::vector<ColumnSet>{{0, 1, 2, 3, 4, 5, 6}});
    CHECK_THROWS_AS(partition_features(3, 4, 1), ConfigError);
}

TEST_CASE("partition_features is seeded") {
    CHECK(partition_features(100, 2, 8) == partition_features(100, 2, 8));
    std::set<std::vector<ColumnSet>> seen;
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(partition_features(100, 2, s));
    CHECK(seen.size() == 20);
}

TEST_CASE("partitioned dataset exposes party columns") {
    const PartitionedDataset pd = partition(gen_synthetic(30, 10, 3, 2.0, 1), 3, 4);
    pd.validate();
    for (std::size_t k = 0; k < 3; ++k) {
        const Matrix f = pd.party_features(k);
        CHECK(f.cols() == static_cast<Eigen::Index>(pd.party_columns[k].size()));
        CHECK(f.col(0) == pd.base.features.col(static_cast<Eigen::Index>(pd.party_columns[k][0])));
    }
    CHECK_THROWS_AS(pd.party_features(3), ConfigError);
}

TEST_CASE("reassign_task mappings") {
    const auto specs = builtin_task_specs(TaskKind::mnist_like_10);
    REQUIRE(specs.size() == 4);
    CHECK(reassign_task(Labels{0, 5, 9}, specs[0]) == Labels{0, 5, 9});
    CHECK(reassign_task(Labels{0, 1, 2, 3}, specs[3]) == Labels{0, 1, 0, 1});
    CHECK(reassign_task(Labels{7}, specs[1]) == Labels{3});
    CHECK_THROWS_AS(reassign_task(Labels{10}, specs[1]), DataError);
    CHECK_THROWS_AS(reassign_task(Labels{-1}, specs[1]), DataError);

    Dataset ds = gen_synthetic(40, 10, 10, 1.0, 1);
    const Dataset parity = reassign_task(ds, specs[3]);
    CHECK(parity.n_classes == 2);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(parity.labels[i] == ds.labels[i] % 2);
}

TEST_CASE("built-in task chains") {
    const auto specs = builtin_task_specs(TaskKind::mnist_like_10);
    std::vector<std::size_t> c_new;
    for (const auto& s : specs) {
        s.validate();
        c_new.push_back(s.c_new);
        CHECK(s.c_orig == 10);
    }
    CHECK(c_new == std::vector<std::size_t>{10, 5, 4, 2});
    CHECK(specs[0].name == "original");
    CHECK(specs[3].name == "task3");
    for (int c = 0; c < 10; ++c) CHECK(specs[3].mapping[static_cast<std::size_t>(c)] == c % 2);

    for (std::size_t C : {2, 3, 6, 7, 16}) {
        const auto g = builtin_task_specs(TaskKind::generic, C);
        CHECK(g.front().c_new == C);
        CHECK(g.back().c_new == 2);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i].validate();
            if (i > 0) CHECK(g[i].c_new < g[i - 1].c_new);
            std::vector<int> sizes(g[i].c_new, 0);
            for (int m : g[i].mapping) ++sizes[static_cast<std::size_t>(m)];
            CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
        }
    }
    CHECK(find_task("task2", 10).c_new == 4);
    CHECK_THROWS_AS(find_task("task9", 10), ConfigError);
}

TEST_CASE("TaskSpec validation") {
    TaskSpec bad{"bad", {0, 0, 0}, 3, 2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    TaskSpec short_map{"short", {0, 1}, 3, 2};
    CHECK_THROWS_AS(short_map.validate(), ConfigError);
}

TEST_CASE("dataset validation") {
    Dataset ds = gen_synthetic(20, 10, 10, 1.0, 1);
    ds.labels[0] = 10;
    CHECK_THROWS_AS(ds.validate(), DataError);
    Dataset missing = gen_synthetic(20, 10, 10, 1.0, 1);
    missing.n_classes = 11;
    CHECK_THROWS_AS(missing.validate(), DataError);
}

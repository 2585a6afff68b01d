#include "vfl/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "vfl/errors.hpp"

namespace vfl::data {

void Dataset::validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
    std::vector<std::size_t> counts(n_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (counts[c] == 0) throw DataError("class " + std::to_string(c) + " has no samples");
}

Matrix PartitionedDataset::party_features(std::size_t k) const {
    if (k >= party_columns.size()) throw ConfigError("party " + std::to_string(k) + " does not exist");
    return gather_cols(base.features, party_columns[k]);
}

void PartitionedDataset::validate() const {
    base.validate();
    std::vector<int> seen(base.dim(), 0);
    for (const auto& cols : party_columns) {
        if (cols.empty()) throw ConfigError("a party holds no feature columns");
        for (auto c : cols) {
            if (c >= base.dim() || seen[c]++) throw ConfigError("party column sets do not partition the features");
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw ConfigError("party column sets do not cover every feature");
}

void TaskSpec::validate() const {
    if (mapping.size() != c_orig) throw ConfigError("task '" + name + "': mapping size differs from c_orig");
    if (c_new == 0 || c_new > c_orig) throw ConfigError("task '" + name + "': c_new must lie in [1, c_orig]");
    std::vector<int> hit(c_new, 0);
    for (int v : mapping) {
        if (v < 0 || static_cast<std::size_t>(v) >= c_new)
            throw ConfigError("task '" + name + "': mapping target out of range");
        hit[static_cast<std::size_t>(v)] = 1;
    }
    if (std::find(hit.begin(), hit.end(), 0) != hit.end())
        throw ConfigError("task '" + name + "': mapping is not surjective");
}

Dataset gen_synthetic(std::size_t n, std::size_t d, std::size_t n_classes, double separation, std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError("gen_synthetic: need at least 2 classes");
    if (n < n_classes) throw ConfigError("gen_synthetic: n < n_classes");
    if (d < n_classes) throw ConfigError("gen_synthetic: d < n_classes");
    std::mt19937_64 rng(derive_seed(seed, {0x5EED}));
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix centers(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(d));
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = normal(rng);
        centers.row(c) *= separation / centers.row(c).norm();
    }

    Dataset ds;
    ds.n_classes = n_classes;
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<int>(i % n_classes);
        ds.labels[i] = c;
        for (Eigen::Index j = 0; j < centers.cols(); ++j)
            ds.features(static_cast<Eigen::Index>(i), j) = centers(c, j) + normal(rng);
    }
    return ds;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& file) {
    if (offset + 4 > bytes.size())
        throw FormatError(file + ": truncated header at offset " + std::to_string(offset));
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit) {
    constexpr std::uint32_t image_magic = 0x00000803;
    constexpr std::uint32_t label_magic = 0x00000801;
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);
    const auto img_name = images_path.string();
    const auto lab_name = labels_path.string();

    if (auto m = read_be32(img, 0, img_name); m != image_magic)
        throw FormatError(img_name + ": bad magic " + hex(m) + " at offset 0, expected " + hex(image_magic));
    if (auto m = read_be32(lab, 0, lab_name); m != label_magic)
        throw FormatError(lab_name + ": bad magic " + hex(m) + " at offset 0, expected " + hex(label_magic));

    const std::size_t n_images = read_be32(img, 4, img_name);
    const std::size_t rows = read_be32(img, 8, img_name);
    const std::size_t cols = read_be32(img, 12, img_name);
    const std::size_t n_labels = read_be32(lab, 4, lab_name);
    if (n_images != n_labels)
        throw FormatError(lab_name + ": label count " + std::to_string(n_labels) + " at offset 4 does not match image count " +
                          std::to_string(n_images));
    const std::size_t d = rows * cols;
    if (img.size() < 16 + n_images * d)
        throw FormatError(img_name + ": truncated pixel data at offset " + std::to_string(img.size()));
    if (lab.size() < 8 + n_labels)
        throw FormatError(lab_name + ": truncated label data at offset " + std::to_string(lab.size()));

    const std::size_t n = limit > 0 ? std::min(limit, n_images) : n_images;
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    ds.labels.resize(n);
    int max_label = -1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * d + j] / 255.0;
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.n_classes = static_cast<std::size_t>(max_label + 1);
    return ds;
}

std::vector<ColumnSet> partition_features(std::size_t d, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("partition_features: k must be >= 1");
    if (d < k) throw ConfigError("partition_features: d = " + std::to_string(d) + " < k = " + std::to_string(k));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, {0xC015}));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<ColumnSet> parts;
    std::size_t start = 0;
    for (std::size_t p = 0; p < k; ++p) {
        const std::size_t len = d / k + (p < d % k ? 1 : 0);
        ColumnSet cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + len));
        std::sort(cols.begin(), cols.end());
        parts.push_back(std::move(cols));
        start += len;
    }
    return parts;
}

PartitionedDataset partition(Dataset base, std::size_t k, std::uint64_t seed) {
    PartitionedDataset pd;
    pd.party_columns = partition_features(base.dim(), k, seed);
    pd.base = std::move(base);
    return pd;
}

Labels reassign_task(const Labels& labels, const TaskSpec& spec) {
    Labels out;
    out.reserve(labels.size());
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec.c_orig)
            throw DataError("reassign_task: label " + std::to_string(y) + " outside task '" + spec.name + "' domain");
        out.push_back(spec.mapping[static_cast<std::size_t>(y)]);
    }
    return out;
}

Dataset reassign_task(Dataset ds, const TaskSpec& spec) {
    if (ds.n_classes != spec.c_orig)
        throw ConfigError("task '" + spec.name + "' expects " + std::to_string(spec.c_orig) + " classes, dataset has " +
                          std::to_string(ds.n_classes));
    ds.labels = reassign_task(ds.labels, spec);
    ds.n_classes = spec.c_new;
    return ds;
}

namespace {

// Contiguous near-balanced grouping: class c -> floor(c * c_new / c_orig).
TaskSpec grouped(std::string name, std::size_t c_orig, std::size_t c_new) {
    TaskSpec t{std::move(name), {}, c_orig, c_new};
    for (std::size_t c = 0; c < c_orig; ++c) t.mapping.push_back(static_cast<int>(c * c_new / c_orig));
    return t;
}

}  // namespace

std::vector<TaskSpec> builtin_task_specs(TaskKind kind, std::size_t n_classes) {
    std::vector<TaskSpec> specs;
    if (kind == TaskKind::mnist_like_10) {
        specs.push_back(grouped("original", 10, 10));
        TaskSpec pairs{"task1", {}, 10, 5};
        for (int c = 0; c < 10; ++c) pairs.mapping.push_back(c / 2);
        specs.push_back(pairs);
        // sizes 3, 3, 2, 2
        specs.push_back(TaskSpec{"task2", {0, 0, 0, 1, 1, 1, 2, 2, 3, 3}, 10, 4});
        TaskSpec parity{"task3", {}, 10, 2};
        for (int c = 0; c < 10; ++c) parity.mapping.push_back(c % 2);
        specs.push_back(parity);
    } else {
        if (n_classes < 2) throw ConfigError("builtin_task_specs: need at least 2 classes");
        specs.push_back(grouped("original", n_classes, n_classes));
        std::size_t c = n_classes;
        int idx = 1;
        while (c > 2) {
            c = std::max<std::size_t>(2, (c + 1) / 2);
            specs.push_back(grouped("task" + std::to_string(idx++), n_classes, c));
        }
    }
    for (const auto& s : specs) s.validate();
    return specs;
}

TaskSpec find_task(const std::string& name, std::size_t n_classes) {
    const auto kind = n_classes == 10 ? TaskKind::mnist_like_10 : TaskKind::generic;
    for (auto& t : builtin_task_specs(kind, n_classes))
        if (t.name == name) return t;
    throw ConfigError("unknown task '" + name + "' for " + std::to_string(n_classes) + " classes");
}

}  // namespace vfl::data

#include "vfl/matrix.hpp"

#include "vfl/errors.hpp"

namespace vfl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ShapeError("gather_rows: row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= static_cast<std::size_t>(m.cols())) throw ShapeError("gather_cols: column index out of range");
        out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
    }
    return out;
}

Matrix gather(const Matrix& m, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        if (cols[j] >= static_cast<std::size_t>(m.cols())) throw ShapeError("gather: column index out of range");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ShapeError("gather: row index out of range");
        const auto src = m.row(static_cast<Eigen::Index>(rows[i]));
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src(static_cast<Eigen::Index>(cols[j]));
    }
    return out;
}

std::vector<int> argmax_rows(const Matrix& m, std::size_t n_cols) {
    if (n_cols == 0 || n_cols > static_cast<std::size_t>(m.cols())) throw ShapeError("argmax_rows: bad column count");
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < static_cast<Eigen::Index>(n_cols); ++j)
            if (m(i, j) > m(i, best)) best = static_cast<int>(j);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(seed);
    for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
    return h;
}

}  // namespace vfl

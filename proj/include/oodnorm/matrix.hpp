#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace oodnorm {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows are samples, columns are features.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return a_.empty(); }

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return a_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return a_[r * cols_ + c];
    }

    std::span<double> row(std::size_t r) {
        assert(r < rows_);
        return {a_.data() + r * cols_, cols_};
    }
    std::span<const double> row(std::size_t r) const {
        assert(r < rows_);
        return {a_.data() + r * cols_, cols_};
    }

    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    bool all_finite() const {
        for (double v : a_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// New matrix holding the listed columns, in the given order.
    Matrix select_cols(std::span<const std::size_t> idx) const {
        Matrix out(rows_, idx.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = 0; k < idx.size(); ++k) out(r, k) = (*this)(r, idx[k]);
        return out;
    }

    /// Writes the columns of `src` into the listed column slots.
    void place_cols(const Matrix& src, std::span<const std::size_t> idx) {
        assert(src.rows() == rows_ && src.cols() == idx.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = 0; k < idx.size(); ++k) (*this)(r, idx[k]) = src(r, k);
    }

    /// New matrix holding the listed rows, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t c = 0; c < cols_; ++c) out(k, c) = (*this)(idx[k], c);
        return out;
    }

    friend bool operator==(const Matrix& x, const Matrix& y) {
        return x.rows_ == y.rows_ && x.cols_ == y.cols_ && x.a_ == y.a_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

} // namespace oodnorm

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace patan {

/// Dense row-major matrix of doubles. The only numeric container in the
/// project; everything trains in 64-bit.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    // Row-major literal, e.g. Matrix::from({{1,2},{3,4}}).
    static Matrix from(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row(std::initializer_list<double> values);
    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<const double> row_span(int r) const {
        return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }

    void fill(double v);
    void set_zero() { fill(0.0); }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Shape string for diagnostics, "3x4".
std::string shape_str(const Matrix& m);

// c = a * b. Shapes checked by the caller.
void matmul_into(const Matrix& a, const Matrix& b, Matrix& c);
// dst += g * b^T and dst += a^T * g; the two matmul backward accumulants.
void add_matmul_nt(Matrix& dst, const Matrix& g, const Matrix& b);
void add_matmul_tn(Matrix& dst, const Matrix& a, const Matrix& g);
// dst += alpha * src (same shape).
void axpy(Matrix& dst, double alpha, const Matrix& src);

} // namespace patan

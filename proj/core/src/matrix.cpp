#include "patan/matrix.hpp"

#include <algorithm>
#include <sstream>

#include "patan/errors.hpp"

namespace patan {

Matrix Matrix::from(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<int>(rows.size()), rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != m.cols_) {
            throw ConfigError("Matrix::from: ragged initializer");
        }
        int c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

Matrix Matrix::row(std::initializer_list<double> values) {
    Matrix m(1, static_cast<int>(values.size()));
    int c = 0;
    for (double v : values) m(0, c++) = v;
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void matmul_into(const Matrix& a, const Matrix& b, Matrix& c) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    c.set_zero();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        double* crow = c.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_matmul_nt(Matrix& dst, const Matrix& g, const Matrix& b) {
    // dst[m x k] += g[m x n] * b[k x n]^T
    const int m = g.rows(), n = g.cols(), k = b.rows();
    for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * n;
        double* drow = dst.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b.data() + static_cast<std::size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            drow[p] += acc;
        }
    }
}

void add_matmul_tn(Matrix& dst, const Matrix& a, const Matrix& g) {
    // dst[k x n] += a[m x k]^T * g[m x n]
    const int m = a.rows(), k = a.cols(), n = g.cols();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        const double* grow = g.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* drow = dst.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
    }
}

void axpy(Matrix& dst, double alpha, const Matrix& src) {
    const std::size_t n = dst.size();
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < n; ++i) d[i] += alpha * s[i];
}

} // namespace patan

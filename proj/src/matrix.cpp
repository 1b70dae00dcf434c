#include "tslt/matrix.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cmath>

namespace tslt {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match shape (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer for matrix");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Matrix::reshape(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(*this) + " to (" + std::to_string(rows) + "x" +
                         std::to_string(cols) + ")");
    }
    rows_ = rows;
    cols_ = cols;
}

Matrix Matrix::reshaped(std::size_t rows, std::size_t cols) const {
    Matrix copy = *this;
    copy.reshape(rows, cols);
    return copy;
}

std::string shape_string(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + shape_string(a) + " x " + shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out_row = out.row(i).data();
        const double* a_row = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a_row[k];
            const double* b_row = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt shape mismatch: " + shape_string(a) + " x " + shape_string(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* a_row = a.row(i).data();
        double* out_row = out.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* b_row = b.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += a_row[k] * b_row[k];
            }
            out_row[j] = acc;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn shape mismatch: " + shape_string(a) + "^T x " + shape_string(b));
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* a_row = a.row(k).data();
        const double* b_row = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a_row[i];
            if (aki == 0.0) {
                continue;
            }
            double* out_row = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) {
                out_row[j] += aki * b_row[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

Matrix rowwise_softmax(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto in = m.row(i);
        auto dst = out.row(i);
        if (in.empty()) {
            continue;
        }
        const double peak = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            dst[j] = std::exp(in[j] - peak);
            total += dst[j];
        }
        for (double& v : dst) {
            v /= total;
        }
    }
    return out;
}

Matrix sum_over_rows(const Matrix& m) {
    Matrix out(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(0, j) += r[j];
        }
    }
    return out;
}

Matrix mean_over_rows(const Matrix& m) {
    if (m.rows() == 0) {
        throw EmptyInputError("mean_over_rows on a matrix with zero rows");
    }
    Matrix out = sum_over_rows(m);
    const double scale = 1.0 / static_cast<double>(m.rows());
    for (double& v : out.values()) {
        v *= scale;
    }
    return out;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) {
        throw ShapeError("row vector " + shape_string(bias) + " cannot broadcast over " + shape_string(m));
    }
    const auto b = bias.row(0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += b[j];
        }
    }
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_abs_diff shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    }
    return worst;
}

}  // namespace tslt

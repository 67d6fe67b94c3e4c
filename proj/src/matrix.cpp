#include "attnedit/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace attnedit {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) {
        throw std::invalid_argument("Matrix: negative dimensions");
    }
}

Matrix::Matrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0 || data_.size() != static_cast<size_t>(rows) * cols) {
        throw std::invalid_argument("Matrix: data size does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    }
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a.at(i, k);
            for (int j = 0; j < b.cols(); ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

std::vector<double> vecmat(std::span<const double> v, const Matrix& m) {
    if (static_cast<int>(v.size()) != m.rows()) {
        throw std::invalid_argument("vecmat: vector length does not match matrix rows");
    }
    std::vector<double> out(m.cols(), 0.0);
    for (int r = 0; r < m.rows(); ++r) {
        const double vr = v[r];
        const auto row = m.row(r);
        for (int c = 0; c < m.cols(); ++c) {
            out[c] += vr * row[c];
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m, double scale) {
    Matrix out(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < m.cols(); ++c) {
            row_max = std::max(row_max, scale * m.at(r, c));
        }
        double sum = 0.0;
        for (int c = 0; c < m.cols(); ++c) {
            const double e = std::exp(scale * m.at(r, c) - row_max);
            out.at(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < m.cols(); ++c) {
            out.at(r, c) /= sum;
        }
    }
    return out;
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
    if (v.size() != gain.size() || v.size() != bias.size()) {
        throw std::invalid_argument("layer_norm: length mismatch");
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("layer_norm: eps must be positive");
    }
    const size_t n = v.size();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = gain[i] * ((v[i] - mean) * inv) + bias[i];
    }
    return out;
}

}  // namespace attnedit

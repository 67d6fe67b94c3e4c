#pragma once

#include <span>
#include <vector>

namespace attnedit {

// Dense row-major matrix of doubles. All model arithmetic runs in 64-bit
// floating point so determinism checks never fight precision.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);
    Matrix(int rows, int cols, std::vector<double> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    bool operator==(const Matrix& other) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Standard matrix product; throws std::invalid_argument on an inner-dimension
// mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row vector (1 x r) times matrix (r x c).
std::vector<double> vecmat(std::span<const double> v, const Matrix& m);

// Row-wise softmax of scale*m, stabilized by row-max subtraction.
Matrix softmax_rows(const Matrix& m, double scale);

// Zero-mean unit-variance normalization (population variance, eps inside the
// square root) followed by the affine gain/bias.
std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps);

}  // namespace attnedit

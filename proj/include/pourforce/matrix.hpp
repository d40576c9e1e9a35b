#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pourforce/rng.hpp"

namespace pourforce {

// Width of one timestep's feature vector, everywhere in the pipeline.
inline constexpr int kInputFeatures = 9;

// Dense row-major matrix of doubles. The single numeric carrier of the
// library: weights, activations, gradients and padded sequences are all
// Matrix values. Shapes are checked on every public operation.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);                       // zero-filled
    Matrix(int rows, int cols, double fill);
    Matrix(int rows, int cols, std::vector<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int r, int c) {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    double operator()(int r, int c) const {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;
    std::string shape_str() const;   // e.g. "2x3"

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double k);
Matrix transposed(const Matrix& a);

// Numerically stable logistic: evaluated on the non-overflowing branch for
// either sign of x, so large |x| saturates instead of producing NaN.
double sigmoid(double x);
Matrix sigmoid(const Matrix& x);
Matrix tanh(const Matrix& x);

// Entries i.i.d. uniform on +/- sqrt(6 / (rows + cols)).
Matrix glorot_uniform(Rng& rng, int rows, int cols);

// Shortest decimal representation that parses back to the same 64-bit value.
std::string format_double(double v);

}  // namespace pourforce

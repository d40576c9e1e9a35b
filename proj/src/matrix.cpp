#include "pourforce/matrix.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace pourforce {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), std::string(op) + ": shape mismatch " +
                                 a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    require(rows >= 1 && cols >= 1, "Matrix: non-positive shape " + shape_str());
}

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * cols, fill) {
    require(rows >= 1 && cols >= 1, "Matrix: non-positive shape " + shape_str());
}

Matrix::Matrix(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    require(rows >= 1 && cols >= 1, "Matrix: non-positive shape " + shape_str());
    require(data_.size() == static_cast<std::size_t>(rows) * cols,
            "Matrix: " + std::to_string(data_.size()) +
                " values for shape " + shape_str());
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: shape mismatch " + a.shape_str() +
                                      " * " + b.shape_str());
    Matrix out(a.rows(), b.cols());
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    const int n = a.rows(), k = a.cols(), m = b.cols();
    for (int i = 0; i < n; ++i) {
        const double* arow = ad + static_cast<std::size_t>(i) * k;
        double* orow = od + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = bd + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape("add", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape("sub", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape("hadamard", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

Matrix scale(const Matrix& a, double k) {
    Matrix out = a;
    for (double& v : out.data()) v *= k;
    return out;
}

Matrix transposed(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = sigmoid(v);
    return out;
}

Matrix tanh(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = std::tanh(v);
    return out;
}

Matrix glorot_uniform(Rng& rng, int rows, int cols) {
    require(rows >= 1 && cols >= 1, "glorot_uniform: non-positive shape");
    double limit = std::sqrt(6.0 / (rows + cols));
    Matrix out(rows, cols);
    for (double& v : out.data()) v = rng.uniform(-limit, limit);
    return out;
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace pourforce

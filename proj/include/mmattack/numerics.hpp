#pragma once

// Dense linear algebra and norm/clipping primitives. All arithmetic is double precision.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmattack {

using Vector = std::vector<double>;

/// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

/// y = m * x
Vector mat_vec(const Matrix& m, std::span<const double> x);

double frobenius_norm(const Matrix& m);
bool is_symmetric(const Matrix& m, double tol = 0.0);

/// (x - y)^T s_inv (x - y). Rejects mismatched dimensions and non-finite inputs.
double mahalanobis_sq(std::span<const double> x, std::span<const double> y, const Matrix& s_inv);

/// Sample covariance with the unbiased (n - 1) estimator. Needs at least two vectors.
Matrix covariance(std::span<const Vector> features);

/// (S + lambda_reg * I)^{-1} through a Cholesky factorization.
Matrix regularized_inverse(const Matrix& s, double lambda_reg);

/// Lower-triangular Cholesky factor; throws NumericalError when the matrix is not positive definite.
Matrix cholesky(const Matrix& spd);

/// Clamp every entry to [-bound, bound].
std::vector<double> linf_clip(std::span<const double> v, double bound);
void linf_clip_inplace(std::span<double> v, double bound);

std::size_t l0_norm(std::span<const double> v);
double l1_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);
double linf_norm(std::span<const double> v);

double squared_euclidean(std::span<const double> x, std::span<const double> y);

bool all_finite(std::span<const double> v);

}  // namespace mmattack

#include "mmattack/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmattack/errors.hpp"

namespace mmattack {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw InvalidArgument("Matrix: entry count " + std::to_string(data_.size()) +
                              " does not match " + std::to_string(rows_) + "x" +
                              std::to_string(cols_));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidArgument("matrix product: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

namespace {

Matrix elementwise(const Matrix& a, const Matrix& b, double sign) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidArgument("matrix elementwise op: shapes differ");
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += sign * b.data()[i];
    return out;
}

}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) { return elementwise(a, b, 1.0); }
Matrix operator-(const Matrix& a, const Matrix& b) { return elementwise(a, b, -1.0); }

Vector mat_vec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) throw InvalidArgument("mat_vec: dimension mismatch");
    Vector y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

double frobenius_norm(const Matrix& m) { return l2_norm(m.data()); }

bool is_symmetric(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) return false;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    return true;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double mahalanobis_sq(std::span<const double> x, std::span<const double> y, const Matrix& s_inv) {
    if (x.size() != y.size() || s_inv.rows() != x.size() || s_inv.cols() != x.size()) {
        throw InvalidArgument("mahalanobis_sq: dimension mismatch");
    }
    if (!all_finite(x) || !all_finite(y)) throw InvalidArgument("mahalanobis_sq: non-finite input");

    const std::size_t n = x.size();
    Vector diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - y[i];

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (diff[i] == 0.0) continue;
        const auto row = s_inv.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * diff[j];
        total += diff[i] * acc;
    }
    // S^-1 is positive definite; rounding can still produce a tiny negative.
    return std::max(total, 0.0);
}

Matrix covariance(std::span<const Vector> features) {
    if (features.size() < 2) throw InvalidArgument("covariance: need at least 2 vectors");
    const std::size_t d = features.front().size();
    for (const auto& f : features) {
        if (f.size() != d) throw InvalidArgument("covariance: vectors differ in length");
    }

    Vector mean(d, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < d; ++i) mean[i] += f[i];
    for (auto& m : mean) m /= static_cast<double>(features.size());

    Matrix cov(d, d);
    for (const auto& f : features) {
        for (std::size_t i = 0; i < d; ++i) {
            const double di = f[i] - mean[i];
            for (std::size_t j = i; j < d; ++j) cov(i, j) += di * (f[j] - mean[j]);
        }
    }
    const double denom = static_cast<double>(features.size() - 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= denom;
            cov(j, i) = cov(i, j);
        }
    }
    return cov;
}

Matrix cholesky(const Matrix& spd) {
    if (spd.rows() != spd.cols()) throw InvalidArgument("cholesky: matrix is not square");
    const std::size_t n = spd.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = spd(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            throw NumericalError("cholesky: non-positive pivot at column " + std::to_string(j));
        }
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = spd(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            l(i, j) = acc / l(j, j);
        }
    }
    return l;
}

Matrix regularized_inverse(const Matrix& s, double lambda_reg) {
    if (s.rows() != s.cols()) throw InvalidArgument("regularized_inverse: matrix is not square");
    if (!(lambda_reg >= 0.0)) throw InvalidArgument("regularized_inverse: lambda_reg must be >= 0");
    double scale = 1.0;
    for (double v : s.data()) scale = std::max(scale, std::abs(v));
    if (!is_symmetric(s, 1e-12 * scale)) throw InvalidArgument("regularized_inverse: matrix is not symmetric");

    const std::size_t n = s.rows();
    Matrix reg = s;
    for (std::size_t i = 0; i < n; ++i) reg(i, i) += lambda_reg;
    const Matrix l = cholesky(reg);

    // Solve L L^T X = I one column at a time.
    Matrix inv(n, n);
    Vector z(n);
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = (i == col) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * z[k];
            z[i] = acc / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = z[ii];
            for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * inv(k, col);
            inv(ii, col) = acc / l(ii, ii);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = avg;
            inv(j, i) = avg;
        }
    }
    return inv;
}

std::vector<double> linf_clip(std::span<const double> v, double bound) {
    std::vector<double> out(v.begin(), v.end());
    linf_clip_inplace(out, bound);
    return out;
}

void linf_clip_inplace(std::span<double> v, double bound) {
    for (auto& x : v) x = std::clamp(x, -bound, bound);
}

std::size_t l0_norm(std::span<const double> v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; }));
}

double l1_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double linf_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

double squared_euclidean(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("squared_euclidean: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace mmattack

#pragma once

// Dense small-dimension linear algebra for covariances and gains.
//
// Dimensions in this library are tiny (state and observation dimensions of a
// few units), so everything is a plain row-major std::vector and the
// eigensolver is cyclic Jacobi.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mlenkf {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> values() const { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Vector multiply(const Matrix& a, std::span<const double> x);

/// Largest absolute entry; 0 for an empty matrix.
double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);

/// Square matrix whose stored entries satisfy a(i,j) == a(j,i) bit-exactly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim);
  /// Throws InvalidInput unless `m` is square, non-empty and exactly symmetric.
  explicit SymMatrix(Matrix m);
  SymMatrix(std::initializer_list<std::initializer_list<double>> rows);

  /// (m + mᵀ) / 2.
  static SymMatrix symmetrized(const Matrix& m);
  static SymMatrix diagonal(std::span<const double> d);
  static SymMatrix identity(std::size_t n);

  std::size_t dim() const { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  /// Writes both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double v);
  void add(std::size_t i, std::size_t j, double v);
  const Matrix& matrix() const { return m_; }

  bool operator==(const SymMatrix&) const = default;

 private:
  Matrix m_;
};

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b);
SymMatrix operator-(const SymMatrix& a, const SymMatrix& b);
SymMatrix operator*(double s, const SymMatrix& a);

/// Returns a·s·aᵀ, symmetric by construction.
SymMatrix congruence(const Matrix& a, const SymMatrix& s);

double trace(const SymMatrix& a);

struct EigenDecomposition {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns, column k pairs with eigenvalues[k]
};

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius mass is at most
/// 1e-13·‖A‖_F; throws NoConvergence after 100 sweeps and InvalidInput on
/// non-finite entries.
EigenDecomposition sym_eigen(const SymMatrix& a);

/// Σ_{λ_k > 0} λ_k q_k q_kᵀ. A matrix with no negative eigenvalue is returned
/// unchanged (bit-exact), so the projection is the identity on PSD input.
SymMatrix psd_truncate(const SymMatrix& a);

struct PsdTruncation {
  SymMatrix matrix;
  bool modified = false;  // true iff some eigenvalue was negative
};
PsdTruncation psd_truncate_flagged(const SymMatrix& a);

/// max_k |λ_k|.
double spectral_norm(const SymMatrix& a);
/// Induced 2-norm of a general matrix, via the eigenvalues of aᵀa.
double spectral_norm(const Matrix& a);
double min_eigenvalue(const SymMatrix& a);

/// Lower-triangular L with L·Lᵀ = s. No pivoting; a non-positive pivot throws
/// NotSpd.
Matrix cholesky(const SymMatrix& s);

/// Solves s·x = b for SPD s through its Cholesky factor.
Matrix spd_solve(const SymMatrix& s, const Matrix& b);

/// F with F·Fᵀ = a for PSD a (negative eigenvalues are clipped to zero). Works
/// for singular covariances where Cholesky would fail.
Matrix psd_factor(const SymMatrix& a);

}  // namespace mlenkf

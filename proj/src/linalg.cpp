#include "mlenkf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mlenkf/error.hpp"

namespace mlenkf {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagonalTolerance = 1e-13;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidInput("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  Matrix m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.data_.begin());
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("Matrix product: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "Matrix sum");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "Matrix difference");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = s * a(i, j);
  return c;
}

Vector multiply(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw InvalidInput("Matrix-vector product: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

SymMatrix::SymMatrix(std::size_t dim) : m_(dim, dim) {
  if (dim == 0) throw InvalidInput("SymMatrix: dimension must be at least 1");
}

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols()) {
    throw InvalidInput("SymMatrix: matrix must be square and non-empty");
  }
  for (std::size_t i = 0; i < m_.rows(); ++i)
    for (std::size_t j = i + 1; j < m_.cols(); ++j)
      if (m_(i, j) != m_(j, i)) throw InvalidInput("SymMatrix: matrix is not symmetric");
}

SymMatrix::SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymMatrix(Matrix(rows)) {}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw InvalidInput("SymMatrix::symmetrized: matrix must be square and non-empty");
  }
  SymMatrix s(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    s.m_(i, i) = m(i, i);
    for (std::size_t j = i + 1; j < m.cols(); ++j) s.set(i, j, 0.5 * (m(i, j) + m(j, i)));
  }
  return s;
}

SymMatrix SymMatrix::diagonal(std::span<const double> d) {
  SymMatrix s(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) s.m_(i, i) = d[i];
  return s;
}

SymMatrix SymMatrix::identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }

void SymMatrix::set(std::size_t i, std::size_t j, double v) {
  m_(i, j) = v;
  m_(j, i) = v;
}

void SymMatrix::add(std::size_t i, std::size_t j, double v) {
  m_(i, j) += v;
  if (i != j) m_(j, i) += v;
}

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) { return SymMatrix(a.matrix() + b.matrix()); }
SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) { return SymMatrix(a.matrix() - b.matrix()); }
SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(s * a.matrix()); }

SymMatrix congruence(const Matrix& a, const SymMatrix& s) {
  return SymMatrix::symmetrized(a * s.matrix() * a.transposed());
}

double trace(const SymMatrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) t += a(i, i);
  return t;
}

// ---------------------------------------------------------------------------

EigenDecomposition sym_eigen(const SymMatrix& input) {
  const std::size_t n = input.dim();
  Matrix a = input.matrix();
  for (double v : a.values()) {
    if (!std::isfinite(v)) throw InvalidInput("sym_eigen: non-finite matrix entry");
  }
  Matrix v = Matrix::identity(n);
  const double threshold = kOffDiagonalTolerance * frobenius_norm(a);

  auto off_diagonal_mass = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep <= kMaxSweeps; ++sweep) {
    if (off_diagonal_mass() <= threshold) break;
    if (sweep == kMaxSweeps) {
      throw NoConvergence("sym_eigen: Jacobi iteration did not converge in 100 sweeps");
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = v(i, order[k]);
  }
  return out;
}

PsdTruncation psd_truncate_flagged(const SymMatrix& a) {
  const EigenDecomposition eig = sym_eigen(a);
  if (eig.eigenvalues.back() >= 0.0) return {a, false};

  const std::size_t n = a.dim();
  SymMatrix out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.eigenvalues[k];
    if (!(lambda > 0.0)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double qi = eig.eigenvectors(i, k);
      for (std::size_t j = i; j < n; ++j) out.add(i, j, lambda * qi * eig.eigenvectors(j, k));
    }
  }
  return {std::move(out), true};
}

SymMatrix psd_truncate(const SymMatrix& a) { return psd_truncate_flagged(a).matrix; }

double spectral_norm(const SymMatrix& a) {
  const EigenDecomposition eig = sym_eigen(a);
  return std::max(std::abs(eig.eigenvalues.front()), std::abs(eig.eigenvalues.back()));
}

double spectral_norm(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  const SymMatrix gram = SymMatrix::symmetrized(a.transposed() * a);
  return std::sqrt(std::max(0.0, sym_eigen(gram).eigenvalues.front()));
}

double min_eigenvalue(const SymMatrix& a) { return sym_eigen(a).eigenvalues.back(); }

Matrix cholesky(const SymMatrix& s) {
  const std::size_t n = s.dim();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = s(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      throw NotSpd("cholesky: non-positive pivot at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = s(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

Matrix spd_solve(const SymMatrix& s, const Matrix& b) {
  if (b.rows() != s.dim()) throw InvalidInput("spd_solve: right-hand side has wrong row count");
  const Matrix l = cholesky(s);
  const std::size_t n = s.dim();
  Matrix x = b;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x(i, c);
      for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * x(k, c);
      x(i, c) = acc / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double acc = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) acc -= l(k, i) * x(k, c);
      x(i, c) = acc / l(i, i);
    }
  }
  return x;
}

Matrix psd_factor(const SymMatrix& a) {
  const EigenDecomposition eig = sym_eigen(a);
  const std::size_t n = a.dim();
  Matrix f(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double root = std::sqrt(std::max(0.0, eig.eigenvalues[k]));
    for (std::size_t i = 0; i < n; ++i) f(i, k) = eig.eigenvectors(i, k) * root;
  }
  return f;
}

}  // namespace mlenkf

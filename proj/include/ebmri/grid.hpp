#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ebmri {

using cplx = std::complex<double>;

/// Dense row-major 2D array of real or complex doubles.
template <typename T>
class Grid {
public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols),
        v_(static_cast<std::size_t>(checked(rows)) * static_cast<std::size_t>(checked(cols)), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  T &operator()(int r, int c) { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T &operator()(int r, int c) const { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
  T &operator[](std::size_t i) { return v_[i]; }
  const T &operator[](std::size_t i) const { return v_[i]; }

  T *data() { return v_.data(); }
  const T *data() const { return v_.data(); }

  bool same_shape(const Grid &o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Grid &o) const { return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_; }

private:
  static int checked(int n) {
    if (n < 1) throw std::invalid_argument("grid extent must be >= 1");
    return n;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> v_;
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<cplx>;

/// Ordered collection of per-coil complex sensitivity or k-space planes.
using CoilSet = std::vector<ComplexGrid>;

enum class Boundary { dirichlet, replicate };

/// Stacked horizontal (dx) and vertical (dy) forward differences.
/// Under replicate boundary both components keep the source shape; under
/// dirichlet they carry one extra column / row for the leading edge against
/// the zero exterior.
struct GradientField {
  RealGrid dx;
  RealGrid dy;
};

// ---- small vector-space helpers shared across modules ----

inline double dot(const RealGrid &a, const RealGrid &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Real inner product on C^n viewed as R^{2n}.
inline double dot_real(const ComplexGrid &a, const ComplexGrid &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  return s;
}

inline double dot_real(const CoilSet &a, const CoilSet &b) {
  double s = 0;
  for (std::size_t c = 0; c < a.size(); ++c) s += dot_real(a[c], b[c]);
  return s;
}

inline double norm_sq(const RealGrid &a) { return dot(a, a); }
inline double norm_sq(const ComplexGrid &a) { return dot_real(a, a); }
inline double norm_sq(const CoilSet &a) { return dot_real(a, a); }

template <typename T>
Grid<T> &axpy(Grid<T> &y, double alpha, const Grid<T> &x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
  return y;
}

inline CoilSet &axpy(CoilSet &y, double alpha, const CoilSet &x) {
  for (std::size_t c = 0; c < y.size(); ++c) axpy(y[c], alpha, x[c]);
  return y;
}

template <typename T>
Grid<T> &scale(Grid<T> &g, double alpha) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= alpha;
  return g;
}

inline CoilSet &scale(CoilSet &s, double alpha) {
  for (auto &g : s) scale(g, alpha);
  return s;
}

inline double max_abs(const RealGrid &g) {
  double m = 0;
  for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(g[i]));
  return m;
}

template <typename T>
bool all_finite(const Grid<T> &g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if constexpr (std::is_same_v<T, cplx>) {
      if (!std::isfinite(g[i].real()) || !std::isfinite(g[i].imag())) return false;
    } else {
      if (!std::isfinite(g[i])) return false;
    }
  }
  return true;
}

} // namespace ebmri

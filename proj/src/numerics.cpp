#include "ebmri/numerics.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace ebmri {

namespace {

// FFTW plan creation is not thread-safe; execution of a cached plan on fresh
// arrays is.  Plans are created with FFTW_UNALIGNED so they can run on any
// buffer of the right shape.
std::mutex plan_mutex;

fftw_plan dft_plan(int rows, int cols, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto key = std::make_tuple(rows, cols, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<cplx> a(static_cast<std::size_t>(rows) * cols);
  std::vector<cplx> b(a.size());
  fftw_plan p = fftw_plan_dft_2d(rows, cols, reinterpret_cast<fftw_complex *>(a.data()),
                                 reinterpret_cast<fftw_complex *>(b.data()), sign,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, p);
  return p;
}

fftw_plan dst_plan(int rows, int cols) {
  static std::map<std::pair<int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto key = std::make_pair(rows, cols);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<double> a(static_cast<std::size_t>(rows) * cols);
  std::vector<double> b(a.size());
  fftw_plan p = fftw_plan_r2r_2d(rows, cols, a.data(), b.data(), FFTW_RODFT00, FFTW_RODFT00,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, p);
  return p;
}

ComplexGrid dft2(const ComplexGrid &g, int sign) {
  ComplexGrid out(g.rows(), g.cols());
  ComplexGrid in = g; // fftw_execute_dft may not read from const
  fftw_execute_dft(dft_plan(g.rows(), g.cols(), sign),
                   reinterpret_cast<fftw_complex *>(in.data()),
                   reinterpret_cast<fftw_complex *>(out.data()));
  const double s = 1.0 / std::sqrt(static_cast<double>(g.size()));
  scale(out, s);
  return out;
}

} // namespace

ComplexGrid fft2(const ComplexGrid &g) { return dft2(g, FFTW_FORWARD); }
ComplexGrid ifft2(const ComplexGrid &g) { return dft2(g, FFTW_BACKWARD); }

RealGrid dst2(const RealGrid &g) {
  RealGrid out(g.rows(), g.cols());
  RealGrid in = g;
  fftw_execute_r2r(dst_plan(g.rows(), g.cols()), in.data(), out.data());
  // FFTW's RODFT00 is 2 * sum x_j sin(...); the orthonormal DST-I needs
  // sqrt(2/(N+1)) per axis.
  const double s = 1.0 / (std::sqrt(2.0 * (g.rows() + 1)) * std::sqrt(2.0 * (g.cols() + 1)));
  scale(out, s);
  return out;
}

RealGrid dst2_inv(const RealGrid &g) { return dst2(g); }

template <typename T>
Grid<T> fftshift(const Grid<T> &g) {
  Grid<T> out(g.rows(), g.cols());
  const int sr = g.rows() / 2, sc = g.cols() / 2;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      out((r + sr) % g.rows(), (c + sc) % g.cols()) = g(r, c);
  return out;
}

template <typename T>
Grid<T> ifftshift(const Grid<T> &g) {
  Grid<T> out(g.rows(), g.cols());
  const int sr = (g.rows() + 1) / 2, sc = (g.cols() + 1) / 2;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      out((r + sr) % g.rows(), (c + sc) % g.cols()) = g(r, c);
  return out;
}

template Grid<double> fftshift(const Grid<double> &);
template Grid<cplx> fftshift(const Grid<cplx> &);
template Grid<double> ifftshift(const Grid<double> &);
template Grid<cplx> ifftshift(const Grid<cplx> &);

GradientField grad(const RealGrid &g, Boundary b) {
  const int R = g.rows(), C = g.cols();
  GradientField f;
  if (b == Boundary::replicate) {
    f.dx = RealGrid(R, C, 0.0);
    f.dy = RealGrid(R, C, 0.0);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c + 1 < C; ++c) f.dx(r, c) = g(r, c + 1) - g(r, c);
    for (int r = 0; r + 1 < R; ++r)
      for (int c = 0; c < C; ++c) f.dy(r, c) = g(r + 1, c) - g(r, c);
  } else {
    // One difference per cell edge, including both edges against the zero
    // exterior.
    f.dx = RealGrid(R, C + 1, 0.0);
    f.dy = RealGrid(R + 1, C, 0.0);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c <= C; ++c) {
        const double right = (c < C) ? g(r, c) : 0.0;
        const double left = (c > 0) ? g(r, c - 1) : 0.0;
        f.dx(r, c) = right - left;
      }
    for (int r = 0; r <= R; ++r)
      for (int c = 0; c < C; ++c) {
        const double lower = (r < R) ? g(r, c) : 0.0;
        const double upper = (r > 0) ? g(r - 1, c) : 0.0;
        f.dy(r, c) = lower - upper;
      }
  }
  return f;
}

RealGrid grad_adjoint(const GradientField &f, Boundary b) {
  if (b == Boundary::replicate) {
    const int R = f.dx.rows(), C = f.dx.cols();
    if (f.dy.rows() != R || f.dy.cols() != C)
      throw std::invalid_argument("gradient field components disagree in shape");
    RealGrid out(R, C, 0.0);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        double v = 0;
        if (c >= 1) v += f.dx(r, c - 1);
        if (c + 1 < C) v -= f.dx(r, c);
        if (r >= 1) v += f.dy(r - 1, c);
        if (r + 1 < R) v -= f.dy(r, c);
        out(r, c) = v;
      }
    return out;
  }
  const int R = f.dy.rows() - 1, C = f.dx.cols() - 1;
  if (f.dx.rows() != R || f.dy.cols() != C)
    throw std::invalid_argument("gradient field components disagree in shape");
  RealGrid out(R, C, 0.0);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out(r, c) = f.dx(r, c) - f.dx(r, c + 1) + f.dy(r, c) - f.dy(r + 1, c);
  return out;
}

RealGrid laplace_eigenvalues(int rows, int cols) {
  RealGrid xi(rows, cols);
  const double pi = std::numbers::pi;
  for (int i = 0; i < rows; ++i) {
    const double a = 2.0 - 2.0 * std::cos((i + 1) * pi / (rows + 1));
    for (int j = 0; j < cols; ++j)
      xi(i, j) = a + 2.0 - 2.0 * std::cos((j + 1) * pi / (cols + 1));
  }
  return xi;
}

RealGrid rss(const CoilSet &coils) {
  if (coils.empty()) throw std::invalid_argument("rss: empty coil set");
  for (const auto &c : coils)
    if (!c.same_shape(coils.front())) throw std::invalid_argument("rss: coil shapes differ");
  RealGrid out(coils.front().rows(), coils.front().cols(), 0.0);
  for (const auto &c : coils)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::norm(c[i]);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  return out;
}

} // namespace ebmri

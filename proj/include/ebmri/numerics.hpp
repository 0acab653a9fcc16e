#pragma once

#include "ebmri/grid.hpp"

namespace ebmri {

/// Unitary 2D DFT (1/sqrt(n) both directions), so the adjoint equals the
/// inverse.
ComplexGrid fft2(const ComplexGrid &g);
ComplexGrid ifft2(const ComplexGrid &g);

/// Orthonormal DST-I.  The transform matrix is symmetric orthogonal, hence
/// the transform is an involution; dst2_inv is provided for readability.
RealGrid dst2(const RealGrid &g);
RealGrid dst2_inv(const RealGrid &g);

/// Moves the zero-frequency component between corner and center layout.
/// fftshift and ifftshift coincide for even extents and are mutual inverses
/// for odd ones.
template <typename T> Grid<T> fftshift(const Grid<T> &g);
template <typename T> Grid<T> ifftshift(const Grid<T> &g);

/// Forward finite differences.  replicate: the trailing difference is zero
/// (shape preserved per component).  dirichlet: values outside the domain are
/// zero, so both edge differences are kept and dx is (rows, cols+1), dy is
/// (rows+1, cols); grad_adjoint of grad is then the Dirichlet Laplacian
/// diagonalized by dst2.
GradientField grad(const RealGrid &g, Boundary b);

/// Exact linear adjoint of grad (negative divergence).
RealGrid grad_adjoint(const GradientField &f, Boundary b);

/// Eigenvalues of the 2D Dirichlet Laplacian on a rows x cols grid:
/// xi(i,j) = (2 - 2 cos((i+1) pi / (rows+1))) + (2 - 2 cos((j+1) pi / (cols+1))).
RealGrid laplace_eigenvalues(int rows, int cols);

/// Pixel-wise root-sum-of-squares coil combination.
RealGrid rss(const CoilSet &coils);

} // namespace ebmri

#pragma once

#include "ebmri/data.hpp"
#include "ebmri/grid.hpp"

#include <cstdint>
#include <utility>

namespace ebmri {

// k-space planes and masks below live in DFT layout (zero frequency at index
// (0, 0)), matching raw fft2 output.  SamplingMask::dft_layout() converts
// from the stored centered layout.

/// SENSE forward operator: per coil, mask * fft2(sigma_c * x).
struct SenseOperator {
  RealGrid mask; // DFT layout, values in {0, 1}
  CoilSet coils;

  SenseOperator(const SamplingMask &m, CoilSet c);
  SenseOperator(RealGrid mask_dft, CoilSet c);
};

/// Measured multi-coil k-space; unsampled entries are exactly zero.
struct MeasuredData {
  CoilSet planes;
  double noise_std = 0.0;
};

MeasuredData apply_A(const RealGrid &x, const SenseOperator &op);

/// Adjoint over the real inner product on x: sum_c conj(sigma_c) * ifft2(mask * z_c).
ComplexGrid apply_A_adjoint(const MeasuredData &z, const SenseOperator &op);

/// apply_A plus i.i.d. complex Gaussian noise on sampled points only;
/// noise_std applies to the real and imaginary components separately.
MeasuredData simulate_measurement(const RealGrid &x, const CoilSet &coils,
                                  const SamplingMask &mask, double noise_std,
                                  std::uint64_t seed);

/// 1/2 sum_c || mask * fft2(sigma_c * u / rss(Sigma)) - z_c ||^2 with the
/// convention 0/0 := 0.  Throws std::domain_error where rss is zero but u is
/// not.
double data_term(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                 const RealGrid &mask_dft);

RealGrid grad_u_data(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                     const RealGrid &mask_dft);

/// Gradient with respect to the sensitivities, packaged so that the real and
/// imaginary parts are the partial derivatives with respect to the real and
/// imaginary coordinates (twice the Wirtinger conjugate derivative).  With
/// the real inner product this is the steepest-ascent direction of the
/// real-valued data term.
CoilSet grad_sigma_data(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                        const RealGrid &mask_dft);

/// Zero-filled RSS initialization: u0 = rss of the coil images, sigma_c =
/// coil image / u0 (0/0 := 0), so that sigma_c * u0 recombines exactly.
std::pair<RealGrid, CoilSet> zf_rss_init(const MeasuredData &z, const RealGrid &mask_dft);

} // namespace ebmri

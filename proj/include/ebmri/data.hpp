#pragma once

#include "ebmri/grid.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ebmri {

enum class MaskPattern { cartesian, random, radial, spiral, gaussian2d };

enum class PhaseDir { vertical, horizontal };

/// Binary k-space sampling mask plus the parameters that generated it.
/// The mask grid is stored in centered layout (zero frequency at
/// (rows/2, cols/2)); the forward model shifts it into DFT layout.
struct SamplingMask {
  RealGrid mask; // values in {0, 1}
  MaskPattern pattern = MaskPattern::cartesian;
  double accel = 1.0;
  std::optional<double> acl_fraction;
  PhaseDir phase_dir = PhaseDir::vertical;
  std::uint64_t seed = 0;

  /// Mask in DFT layout, ready to multiply an unshifted fft2 output.
  RealGrid dft_layout() const;

  std::size_t sampled_points() const;
};

struct MaskParams {
  double accel = 4.0;           // cartesian, random, gaussian2d
  double acl_fraction = 0.0;    // cartesian; 0 disables the calibration block
  PhaseDir phase_dir = PhaseDir::vertical;
  int spokes = 45;              // radial
  double spiral_turns = 12.0;   // spiral density
  double gauss_sigma_frac = 0.25; // gaussian2d: std as fraction of max extent
};

SamplingMask make_mask(MaskPattern pattern, int rows, int cols, const MaskParams &params,
                       std::uint64_t seed);

/// n / (number of sampled points).
double acceleration_factor(const SamplingMask &mask);

/// Affine rescale of a non-constant grid onto exactly [0, 1].
RealGrid normalize_slice(const RealGrid &g);

/// One normalized reference slice of a training corpus.
struct SliceRecord {
  RealGrid image; // values in [0, 1]
  std::string id;
};

/// Loads every .npy in a directory (sorted by name), normalizing slices that
/// are not already in [0, 1].
std::vector<SliceRecord> load_slice_directory(const std::string &dir);

/// Standard Shepp-Logan ellipse phantom (modified intensities, range [0, 1]).
RealGrid shepp_logan(int rows, int cols);

struct SimulatedCoils {
  CoilSet coils;
  bool ground_truth = true;
};

/// Spatially smooth synthetic sensitivities: per coil, a sum of wide complex
/// Gaussian bumps sharing one phase so the coil magnitude never vanishes.
SimulatedCoils smooth_coils(int rows, int cols, int n_coils, std::uint64_t seed);

/// Toy training corpus: each sample holds two Gaussian blobs at random
/// interior positions, clipped to [0, 1].
std::vector<RealGrid> blob_dataset(int n, int rows, int cols, std::uint64_t seed);

/// Mask NPY (f8, 0/1, centered layout) plus a JSON sidecar with the
/// generation parameters at <path>.json.
void save_mask(const SamplingMask &mask, const std::string &path);
SamplingMask load_mask(const std::string &path);

} // namespace ebmri

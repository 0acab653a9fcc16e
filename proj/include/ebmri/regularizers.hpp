#pragma once

#include "ebmri/grid.hpp"
#include "ebmri/rng.hpp"

#include <string>
#include <vector>

namespace ebmri {

// ---- Charbonnier-smoothed total variation ----

struct TvConfig {
  double epsilon = 1e-3;
};

/// sum_i sqrt(dx_i^2 + dy_i^2 + eps^2) with replicate boundary.
double tv_value(const RealGrid &u, const TvConfig &cfg);
RealGrid tv_grad(const RealGrid &u, const TvConfig &cfg);

// ---- Convolutional energy regularizer ----
//
// R(u) = | FC( S_L( ... S_1( crop(u) ) ... ) ) | with
// S_l(x) = lrelu(W2_l lrelu(W1_l x + b1_l) + b2_l), lrelu(x) = max(leak*x, x),
// 3x3 kernels, W1 stride 1, W2 stride 2, both zero-padded by one.

struct EbmArchitecture {
  int layers = 6;
  int base_features = 48;
  double feature_ratio = 1.75;
  double leak = 0.05;
  int crop_rows = 320;
  int crop_cols = 320;
};

/// Per-layer feature counts: round(base * ratio^(l-1)).
std::vector<int> channel_table(const EbmArchitecture &arch);

/// Flat-storage offsets for every parameter tensor.
struct EbmLayout {
  struct Layer {
    int in_ch = 0, out_ch = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  };
  std::vector<Layer> layer;
  std::size_t fc = 0;     // offset of the fully connected row vector
  std::size_t total = 0;  // total parameter count
  int fc_ch = 0, fc_rows = 0, fc_cols = 0; // final feature map dimensions
};

EbmLayout ebm_layout(const EbmArchitecture &arch);

/// All learnable parameters in one flat vector (layout via ebm_layout), which
/// keeps the optimizer and the finite-difference checks simple.
struct EbmParameters {
  std::vector<double> flat;

  EbmParameters() = default;
  explicit EbmParameters(const EbmArchitecture &arch)
      : flat(ebm_layout(arch).total, 0.0) {}

  static EbmParameters random_init(const EbmArchitecture &arch, Rng &rng);
};

double ebm_value(const RealGrid &u, const EbmParameters &p, const EbmArchitecture &arch);

/// Gradient with respect to the input image.  If u exceeds the crop shape the
/// gradient is exactly zero outside the centered crop window.
RealGrid ebm_grad_input(const RealGrid &u, const EbmParameters &p, const EbmArchitecture &arch);

EbmParameters ebm_grad_params(const RealGrid &u, const EbmParameters &p,
                              const EbmArchitecture &arch);

/// One shared forward pass for samplers that need both.
struct EbmEval {
  double value = 0.0;
  RealGrid grad_input;
};
EbmEval ebm_value_and_grad_input(const RealGrid &u, const EbmParameters &p,
                                 const EbmArchitecture &arch);

// ---- checkpoints ----
//
// Binary container: "EBMCKPT\n", u32 little-endian header length, JSON header
// (architecture fields plus a tensor name/shape table), then the flat f8
// parameter data.

void save_checkpoint(const EbmArchitecture &arch, const EbmParameters &p,
                     const std::string &path);
std::pair<EbmArchitecture, EbmParameters> load_checkpoint(const std::string &path);

} // namespace ebmri

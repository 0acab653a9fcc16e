#include "ebmri/data.hpp"

#include "ebmri/npy.hpp"
#include "ebmri/numerics.hpp"
#include "ebmri/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace ebmri {

namespace {

using json = nlohmann::json;

const char *pattern_name(MaskPattern p) {
  switch (p) {
    case MaskPattern::cartesian: return "cartesian";
    case MaskPattern::random: return "random";
    case MaskPattern::radial: return "radial";
    case MaskPattern::spiral: return "spiral";
    case MaskPattern::gaussian2d: return "gaussian2d";
  }
  return "?";
}

MaskPattern pattern_from_name(const std::string &s) {
  if (s == "cartesian") return MaskPattern::cartesian;
  if (s == "random") return MaskPattern::random;
  if (s == "radial") return MaskPattern::radial;
  if (s == "spiral") return MaskPattern::spiral;
  if (s == "gaussian2d") return MaskPattern::gaussian2d;
  throw std::invalid_argument("unknown mask pattern: " + s);
}

// Selects the fully sampled center block plus uniformly random extra lines.
// `lines` indexes the phase-encode axis.
std::vector<char> cartesian_lines(int lines, double accel, double acl_fraction, Rng &rng) {
  const int n_acl = acl_fraction > 0.0 ? static_cast<int>(std::llround(acl_fraction * lines)) : 0;
  if (acl_fraction > 0.0 && n_acl < 1)
    throw std::invalid_argument("acl_fraction too small: rounds to zero calibration lines");
  const int total = std::max(1, static_cast<int>(std::llround(lines / accel)));
  if (n_acl > total)
    throw std::invalid_argument("calibration block exceeds the sampling budget");

  std::vector<char> sel(lines, 0);
  const int start = (lines - n_acl) / 2;
  for (int i = 0; i < n_acl; ++i) sel[start + i] = 1;

  std::vector<int> rest;
  for (int i = 0; i < lines; ++i)
    if (!sel[i]) rest.push_back(i);
  int need = total - n_acl;
  for (int i = 0; i < need; ++i) {
    const auto j = static_cast<std::size_t>(rng.below(rest.size() - i));
    std::swap(rest[i], rest[i + j]);
    sel[rest[i]] = 1;
  }
  return sel;
}

void stamp_line(RealGrid &m, double r0, double c0, double r1, double c1) {
  // Dense parametric walk; half-pixel steps guarantee an 8-connected line.
  const double len = std::hypot(r1 - r0, c1 - c0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int r = static_cast<int>(std::llround(r0 + t * (r1 - r0)));
    const int c = static_cast<int>(std::llround(c0 + t * (c1 - c0)));
    if (r >= 0 && r < m.rows() && c >= 0 && c < m.cols()) m(r, c) = 1.0;
  }
}

} // namespace

RealGrid SamplingMask::dft_layout() const { return ifftshift(mask); }

std::size_t SamplingMask::sampled_points() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) n += mask[i] != 0.0;
  return n;
}

SamplingMask make_mask(MaskPattern pattern, int rows, int cols, const MaskParams &params,
                       std::uint64_t seed) {
  if (params.accel < 1.0) throw std::invalid_argument("acceleration must be >= 1");
  Rng rng(seed);
  SamplingMask out;
  out.pattern = pattern;
  out.accel = params.accel;
  out.phase_dir = params.phase_dir;
  out.seed = seed;
  out.mask = RealGrid(rows, cols, 0.0);
  RealGrid &m = out.mask;
  const double cr = rows / 2.0, cc = cols / 2.0; // continuous center, pixel center at floor(n/2)

  switch (pattern) {
    case MaskPattern::cartesian: {
      out.acl_fraction = params.acl_fraction;
      if (params.phase_dir == PhaseDir::vertical) {
        auto sel = cartesian_lines(cols, params.accel, params.acl_fraction, rng);
        for (int c = 0; c < cols; ++c)
          if (sel[c])
            for (int r = 0; r < rows; ++r) m(r, c) = 1.0;
      } else {
        auto sel = cartesian_lines(rows, params.accel, params.acl_fraction, rng);
        for (int r = 0; r < rows; ++r)
          if (sel[r])
            for (int c = 0; c < cols; ++c) m(r, c) = 1.0;
      }
      break;
    }
    case MaskPattern::random: {
      const double p = 1.0 / params.accel;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          if (rng.bernoulli(p)) m(r, c) = 1.0;
      break;
    }
    case MaskPattern::radial: {
      if (params.spokes < 1) throw std::invalid_argument("radial mask needs >= 1 spoke");
      const double rad = std::hypot(cr, cc) + 1.0;
      for (int s = 0; s < params.spokes; ++s) {
        const double theta = std::numbers::pi * s / params.spokes;
        const double dr = std::sin(theta), dc = std::cos(theta);
        stamp_line(m, std::floor(cr) - rad * dr, std::floor(cc) - rad * dc,
                   std::floor(cr) + rad * dr, std::floor(cc) + rad * dc);
      }
      break;
    }
    case MaskPattern::spiral: {
      // Archimedean r = a * phi rasterized from the grid center outward;
      // spiral_turns controls the radial line density.
      const double rad = std::hypot(cr, cc);
      const double phi_max = 2.0 * std::numbers::pi * params.spiral_turns;
      const double a = rad / phi_max;
      const int steps = static_cast<int>(std::ceil(phi_max * rad)); // fine angular walk
      for (int s = 0; s <= steps; ++s) {
        const double phi = phi_max * s / steps;
        const double r = std::floor(cr) + a * phi * std::sin(phi);
        const double c = std::floor(cc) + a * phi * std::cos(phi);
        const int ri = static_cast<int>(std::llround(r));
        const int ci = static_cast<int>(std::llround(c));
        if (ri >= 0 && ri < rows && ci >= 0 && ci < cols) m(ri, ci) = 1.0;
      }
      break;
    }
    case MaskPattern::gaussian2d: {
      const std::size_t n = static_cast<std::size_t>(rows) * cols;
      auto want = static_cast<std::size_t>(std::llround(n / params.accel));
      want = std::max<std::size_t>(1, std::min(want, n));
      const double sigma = params.gauss_sigma_frac * std::max(rows, cols);
      // Weighted sampling without replacement via exponential keys.
      std::vector<std::pair<double, std::size_t>> keys(n);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const double d2 = (r - std::floor(cr)) * (r - std::floor(cr)) +
                            (c - std::floor(cc)) * (c - std::floor(cc));
          const double w = std::exp(-d2 / (2.0 * sigma * sigma));
          const double e = -std::log(1.0 - rng.uniform());
          keys[static_cast<std::size_t>(r) * cols + c] = {e / w, static_cast<std::size_t>(r) * cols + c};
        }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(want), keys.end());
      for (std::size_t i = 0; i < want; ++i) m[keys[i].second] = 1.0;
      break;
    }
  }

  if (out.sampled_points() == 0) m(rows / 2, cols / 2) = 1.0;
  return out;
}

double acceleration_factor(const SamplingMask &mask) {
  const auto sampled = mask.sampled_points();
  if (sampled == 0) throw std::invalid_argument("mask has no sampled points");
  return static_cast<double>(mask.mask.size()) / static_cast<double>(sampled);
}

RealGrid normalize_slice(const RealGrid &g) {
  double lo = g[0], hi = g[0];
  for (std::size_t i = 0; i < g.size(); ++i) {
    lo = std::min(lo, g[i]);
    hi = std::max(hi, g[i]);
  }
  if (hi == lo) throw std::invalid_argument("normalize_slice: constant input");
  RealGrid out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = (g[i] - lo) / (hi - lo);
  return out;
}

RealGrid shepp_logan(int rows, int cols) {
  // Modified Shepp-Logan intensities (values stay within [0, 1]).
  struct Ellipse {
    double x, y, a, b, phi_deg, value;
  };
  static const Ellipse es[] = {
      {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
      {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
      {0.22, 0.0, 0.11, 0.31, -18.0, -0.2},
      {-0.22, 0.0, 0.16, 0.41, 18.0, -0.2},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
      {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
      {0.0, -0.605, 0.023, 0.023, 0.0, 0.1},
      {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
  };
  RealGrid g(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double y = 1.0 - 2.0 * (r + 0.5) / rows;
    for (int c = 0; c < cols; ++c) {
      const double x = 2.0 * (c + 0.5) / cols - 1.0;
      double v = 0.0;
      for (const auto &e : es) {
        const double t = e.phi_deg * std::numbers::pi / 180.0;
        const double xr = std::cos(t) * (x - e.x) + std::sin(t) * (y - e.y);
        const double yr = -std::sin(t) * (x - e.x) + std::cos(t) * (y - e.y);
        if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
      }
      g(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return g;
}

SimulatedCoils smooth_coils(int rows, int cols, int n_coils, std::uint64_t seed) {
  if (n_coils < 1) throw std::invalid_argument("need at least one coil");
  Rng rng(seed);
  SimulatedCoils out;
  const double diag = std::hypot(rows, cols);
  for (int c = 0; c < n_coils; ++c) {
    ComplexGrid coil(rows, cols, cplx(0.0, 0.0));
    // A shared phase per coil keeps the bump sum from cancelling anywhere.
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const cplx dir = std::polar(1.0, phase);
    const int bumps = 2 + static_cast<int>(rng.below(3));
    for (int b = 0; b < bumps; ++b) {
      // Bump centers ring the interior; widths are broad enough to stay
      // smooth yet decay toward the boundary, where the dirichlet gradient
      // energy would otherwise pick up the raw coil magnitude.
      const double ang = 2.0 * std::numbers::pi * (c + rng.uniform() * 0.75) / n_coils;
      const double mr = rows * (0.5 + 0.24 * std::sin(ang));
      const double mc = cols * (0.5 + 0.24 * std::cos(ang));
      const double width = diag * (0.17 + 0.08 * rng.uniform());
      const double amp = 0.5 + rng.uniform();
      for (int r = 0; r < rows; ++r)
        for (int cc2 = 0; cc2 < cols; ++cc2) {
          const double d2 = (r - mr) * (r - mr) + (cc2 - mc) * (cc2 - mc);
          coil(r, cc2) += dir * (amp * std::exp(-d2 / (2.0 * width * width)));
        }
    }
    out.coils.push_back(std::move(coil));
  }
  out.ground_truth = true;
  return out;
}

std::vector<SliceRecord> load_slice_directory(const std::string &dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto &e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".npy") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<SliceRecord> out;
  for (const auto &p : paths) {
    SliceRecord rec;
    rec.image = load_real(p.string());
    rec.id = p.stem().string();
    double lo = rec.image[0], hi = rec.image[0];
    for (std::size_t i = 0; i < rec.image.size(); ++i) {
      lo = std::min(lo, rec.image[i]);
      hi = std::max(hi, rec.image[i]);
    }
    if (lo < 0.0 || hi > 1.0) rec.image = normalize_slice(rec.image);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<RealGrid> blob_dataset(int n, int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RealGrid> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    RealGrid g(rows, cols, 0.0);
    for (int b = 0; b < 2; ++b) {
      const double mr = rows * (0.3 + 0.4 * rng.uniform());
      const double mc = cols * (0.3 + 0.4 * rng.uniform());
      const double w = 0.5 * (rows + cols) * (0.10 + 0.06 * rng.uniform());
      const double amp = 0.6 + 0.4 * rng.uniform();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          g(r, c) += amp * std::exp(-((r - mr) * (r - mr) + (c - mc) * (c - mc)) / (2 * w * w));
    }
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = std::min(g[j], 1.0);
    out.push_back(std::move(g));
  }
  return out;
}

void save_mask(const SamplingMask &mask, const std::string &path) {
  save_tensor(mask.mask, path);
  json meta;
  meta["pattern"] = pattern_name(mask.pattern);
  meta["accel"] = mask.accel;
  if (mask.acl_fraction) meta["acl_fraction"] = *mask.acl_fraction;
  meta["phase_dir"] = mask.phase_dir == PhaseDir::vertical ? "vertical" : "horizontal";
  meta["seed"] = mask.seed;
  std::ofstream f(path + ".json");
  if (!f) throw NpyError(NpyError::Kind::io, "cannot write mask metadata: " + path + ".json");
  f << meta.dump(2) << "\n";
}

SamplingMask load_mask(const std::string &path) {
  SamplingMask out;
  out.mask = load_real(path);
  for (std::size_t i = 0; i < out.mask.size(); ++i)
    if (out.mask[i] != 0.0 && out.mask[i] != 1.0)
      throw NpyError(NpyError::Kind::bad_shape, "mask values must be 0/1: " + path);
  std::ifstream f(path + ".json");
  if (f) {
    json meta = json::parse(f);
    out.pattern = pattern_from_name(meta.value("pattern", "cartesian"));
    out.accel = meta.value("accel", 1.0);
    if (meta.contains("acl_fraction")) out.acl_fraction = meta["acl_fraction"].get<double>();
    out.phase_dir = meta.value("phase_dir", "vertical") == std::string("horizontal")
                        ? PhaseDir::horizontal
                        : PhaseDir::vertical;
    out.seed = meta.value("seed", std::uint64_t{0});
  }
  return out;
}

} // namespace ebmri

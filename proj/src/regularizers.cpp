#include "ebmri/regularizers.hpp"

#include "ebmri/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace ebmri {

double tv_value(const RealGrid &u, const TvConfig &cfg) {
  const GradientField f = grad(u, Boundary::replicate);
  double s = 0;
  for (std::size_t i = 0; i < f.dx.size(); ++i)
    s += std::sqrt(f.dx[i] * f.dx[i] + f.dy[i] * f.dy[i] + cfg.epsilon * cfg.epsilon);
  return s;
}

RealGrid tv_grad(const RealGrid &u, const TvConfig &cfg) {
  GradientField f = grad(u, Boundary::replicate);
  for (std::size_t i = 0; i < f.dx.size(); ++i) {
    const double nu = std::sqrt(f.dx[i] * f.dx[i] + f.dy[i] * f.dy[i] + cfg.epsilon * cfg.epsilon);
    f.dx[i] /= nu;
    f.dy[i] /= nu;
  }
  return grad_adjoint(f, Boundary::replicate);
}

std::vector<int> channel_table(const EbmArchitecture &arch) {
  if (arch.layers < 1) throw std::invalid_argument("need at least one layer");
  std::vector<int> c(arch.layers);
  double f = arch.base_features;
  for (int l = 0; l < arch.layers; ++l) {
    c[l] = std::max(1, static_cast<int>(std::llround(f)));
    f *= arch.feature_ratio;
  }
  return c;
}

EbmLayout ebm_layout(const EbmArchitecture &arch) {
  const auto chan = channel_table(arch);
  EbmLayout lo;
  std::size_t off = 0;
  int in_ch = 1;
  int h = arch.crop_rows, w = arch.crop_cols;
  for (int l = 0; l < arch.layers; ++l) {
    EbmLayout::Layer L;
    L.in_ch = in_ch;
    L.out_ch = chan[l];
    L.w1 = off;
    off += static_cast<std::size_t>(L.out_ch) * L.in_ch * 9;
    L.b1 = off;
    off += L.out_ch;
    L.w2 = off;
    off += static_cast<std::size_t>(L.out_ch) * L.out_ch * 9;
    L.b2 = off;
    off += L.out_ch;
    lo.layer.push_back(L);
    in_ch = chan[l];
    h = (h + 1) / 2; // stride 2, pad 1, kernel 3
    w = (w + 1) / 2;
  }
  lo.fc = off;
  lo.fc_ch = in_ch;
  lo.fc_rows = h;
  lo.fc_cols = w;
  lo.total = off + static_cast<std::size_t>(in_ch) * h * w;
  return lo;
}

EbmParameters EbmParameters::random_init(const EbmArchitecture &arch, Rng &rng) {
  EbmParameters p(arch);
  const EbmLayout lo = ebm_layout(arch);
  for (const auto &L : lo.layer) {
    const double s1 = std::sqrt(2.0 / (L.in_ch * 9.0));
    for (std::size_t i = 0; i < static_cast<std::size_t>(L.out_ch) * L.in_ch * 9; ++i)
      p.flat[L.w1 + i] = s1 * rng.normal();
    const double s2 = std::sqrt(2.0 / (L.out_ch * 9.0));
    for (std::size_t i = 0; i < static_cast<std::size_t>(L.out_ch) * L.out_ch * 9; ++i)
      p.flat[L.w2 + i] = s2 * rng.normal();
  }
  const std::size_t nfc = lo.total - lo.fc;
  const double sfc = 1.0 / std::sqrt(static_cast<double>(nfc));
  for (std::size_t i = 0; i < nfc; ++i) p.flat[lo.fc + i] = sfc * rng.normal();
  return p;
}

namespace {

struct Tensor {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c, int hh, int ww) : ch(c), h(hh), w(ww), v(static_cast<std::size_t>(c) * hh * ww, 0.0) {}

  double *plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
  const double *plane(int c) const { return v.data() + static_cast<std::size_t>(c) * h * w; }
};

// 3x3 convolution, zero padding 1.  Output is ceil(h/s) x ceil(w/s).
Tensor conv(const Tensor &in, const double *W, const double *b, int out_ch, int stride) {
  const int oh = (in.h + stride - 1) / stride;
  const int ow = (in.w + stride - 1) / stride;
  Tensor out(out_ch, oh, ow);
  for (int oc = 0; oc < out_ch; ++oc) {
    double *op = out.plane(oc);
    for (int i = 0; i < oh * ow; ++i) op[i] = b[oc];
    for (int ic = 0; ic < in.ch; ++ic) {
      const double *ip = in.plane(ic);
      const double *k = W + (static_cast<std::size_t>(oc) * in.ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = k[ky * 3 + kx];
          if (wk == 0.0) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= in.h) continue;
            const double *irow = ip + static_cast<std::size_t>(iy) * in.w;
            double *orow = op + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - 1;
              if (ix < 0 || ix >= in.w) continue;
              orow[ox] += wk * irow[ix];
            }
          }
        }
    }
  }
  return out;
}

// Scatters dout back through the convolution to the input.
Tensor conv_input_grad(const Tensor &dout, const double *W, int in_ch, int in_h, int in_w,
                       int stride) {
  Tensor din(in_ch, in_h, in_w);
  for (int oc = 0; oc < dout.ch; ++oc) {
    const double *dp = dout.plane(oc);
    for (int ic = 0; ic < in_ch; ++ic) {
      double *gp = din.plane(ic);
      const double *k = W + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = k[ky * 3 + kx];
          if (wk == 0.0) continue;
          for (int oy = 0; oy < dout.h; ++oy) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= in_h) continue;
            const double *drow = dp + static_cast<std::size_t>(oy) * dout.w;
            double *grow = gp + static_cast<std::size_t>(iy) * in_w;
            for (int ox = 0; ox < dout.w; ++ox) {
              const int ix = ox * stride + kx - 1;
              if (ix < 0 || ix >= in_w) continue;
              grow[ix] += wk * drow[ox];
            }
          }
        }
    }
  }
  return din;
}

void conv_param_grad(const Tensor &in, const Tensor &dout, double *dW, double *db, int stride) {
  for (int oc = 0; oc < dout.ch; ++oc) {
    const double *dp = dout.plane(oc);
    double acc_b = 0;
    for (int i = 0; i < dout.h * dout.w; ++i) acc_b += dp[i];
    db[oc] += acc_b;
    for (int ic = 0; ic < in.ch; ++ic) {
      const double *ip = in.plane(ic);
      double *k = dW + (static_cast<std::size_t>(oc) * in.ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double acc = 0;
          for (int oy = 0; oy < dout.h; ++oy) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= in.h) continue;
            const double *irow = ip + static_cast<std::size_t>(iy) * in.w;
            const double *drow = dp + static_cast<std::size_t>(oy) * dout.w;
            for (int ox = 0; ox < dout.w; ++ox) {
              const int ix = ox * stride + kx - 1;
              if (ix < 0 || ix >= in.w) continue;
              acc += irow[ix] * drow[ox];
            }
          }
          k[ky * 3 + kx] += acc;
        }
    }
  }
}

void lrelu_inplace(Tensor &t, double leak) {
  for (auto &x : t.v) x = x >= 0.0 ? x : leak * x;
}

// dz = da * lrelu'(z); the kink takes the identity branch at zero.
Tensor lrelu_back(const Tensor &z, const Tensor &da, double leak) {
  Tensor dz = da;
  for (std::size_t i = 0; i < dz.v.size(); ++i)
    if (z.v[i] < 0.0) dz.v[i] *= leak;
  return dz;
}

struct CropWindow {
  int r0 = 0, c0 = 0;
};

CropWindow crop_window(const RealGrid &u, const EbmArchitecture &arch) {
  if (u.rows() < arch.crop_rows || u.cols() < arch.crop_cols)
    throw std::invalid_argument("input is smaller than the crop shape");
  return {(u.rows() - arch.crop_rows) / 2, (u.cols() - arch.crop_cols) / 2};
}

struct ForwardPass {
  std::vector<Tensor> acts; // acts[0] = cropped input, acts[l+1] after layer l
  std::vector<Tensor> z1, z2;
  double fc_out = 0.0;
};

ForwardPass forward(const RealGrid &u, const EbmParameters &p, const EbmArchitecture &arch,
                    const EbmLayout &lo, bool keep) {
  const CropWindow cw = crop_window(u, arch);
  ForwardPass fp;
  Tensor a(1, arch.crop_rows, arch.crop_cols);
  for (int r = 0; r < arch.crop_rows; ++r)
    for (int c = 0; c < arch.crop_cols; ++c)
      a.v[static_cast<std::size_t>(r) * arch.crop_cols + c] = u(cw.r0 + r, cw.c0 + c);
  if (keep) fp.acts.push_back(a);

  const double *P = p.flat.data();
  for (const auto &L : lo.layer) {
    Tensor z1 = conv(a, P + L.w1, P + L.b1, L.out_ch, 1);
    Tensor a1 = z1;
    lrelu_inplace(a1, arch.leak);
    Tensor z2 = conv(a1, P + L.w2, P + L.b2, L.out_ch, 2);
    a = z2;
    lrelu_inplace(a, arch.leak);
    if (keep) {
      fp.z1.push_back(std::move(z1));
      fp.z2.push_back(std::move(z2));
      fp.acts.push_back(a);
    }
  }

  double f = 0;
  const double *fc = P + lo.fc;
  for (std::size_t i = 0; i < a.v.size(); ++i) f += fc[i] * a.v[i];
  fp.fc_out = f;
  if (!keep) fp.acts.push_back(std::move(a)); // final map only
  return fp;
}

// sign(0) := 0 keeps the |.| head subgradient bounded.
double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct BackwardResult {
  Tensor d_input;
  EbmParameters d_params;
};

BackwardResult backward(const ForwardPass &fp, const EbmParameters &p,
                        const EbmArchitecture &arch, const EbmLayout &lo, bool want_input,
                        bool want_params) {
  BackwardResult out;
  if (want_params) out.d_params = EbmParameters(arch);
  const double *P = p.flat.data();
  double *G = want_params ? out.d_params.flat.data() : nullptr;
  const double s = sgn(fp.fc_out);

  const Tensor &top = fp.acts.back();
  Tensor d(top.ch, top.h, top.w);
  const double *fc = P + lo.fc;
  for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = s * fc[i];
  if (want_params) {
    double *gfc = G + lo.fc;
    for (std::size_t i = 0; i < top.v.size(); ++i) gfc[i] += s * top.v[i];
  }

  for (int l = arch.layers - 1; l >= 0; --l) {
    const auto &L = lo.layer[l];
    const Tensor &z2 = fp.z2[l];
    Tensor a1 = fp.z1[l];
    lrelu_inplace(a1, arch.leak);

    Tensor dz2 = lrelu_back(z2, d, arch.leak);
    if (want_params) conv_param_grad(a1, dz2, G + L.w2, G + L.b2, 2);
    Tensor da1 = conv_input_grad(dz2, P + L.w2, L.out_ch, a1.h, a1.w, 2);

    Tensor dz1 = lrelu_back(fp.z1[l], da1, arch.leak);
    const Tensor &in = fp.acts[l];
    if (want_params) conv_param_grad(in, dz1, G + L.w1, G + L.b1, 1);
    if (l > 0 || want_input)
      d = conv_input_grad(dz1, P + L.w1, L.in_ch, in.h, in.w, 1);
  }
  if (want_input) out.d_input = std::move(d);
  return out;
}

} // namespace

double ebm_value(const RealGrid &u, const EbmParameters &p, const EbmArchitecture &arch) {
  const EbmLayout lo = ebm_layout(arch);
  if (p.flat.size() != lo.total) throw std::invalid_argument("parameter size mismatch");
  return std::abs(forward(u, p, arch, lo, false).fc_out);
}

EbmEval ebm_value_and_grad_input(const RealGrid &u, const EbmParameters &p,
                                 const EbmArchitecture &arch) {
  const EbmLayout lo = ebm_layout(arch);
  if (p.flat.size() != lo.total) throw std::invalid_argument("parameter size mismatch");
  const CropWindow cw = crop_window(u, arch);
  ForwardPass fp = forward(u, p, arch, lo, true);
  BackwardResult br = backward(fp, p, arch, lo, true, false);

  EbmEval ev;
  ev.value = std::abs(fp.fc_out);
  ev.grad_input = RealGrid(u.rows(), u.cols(), 0.0);
  for (int r = 0; r < arch.crop_rows; ++r)
    for (int c = 0; c < arch.crop_cols; ++c)
      ev.grad_input(cw.r0 + r, cw.c0 + c) =
          br.d_input.v[static_cast<std::size_t>(r) * arch.crop_cols + c];
  return ev;
}

RealGrid ebm_grad_input(const RealGrid &u, const EbmParameters &p, const EbmArchitecture &arch) {
  return ebm_value_and_grad_input(u, p, arch).grad_input;
}

EbmParameters ebm_grad_params(const RealGrid &u, const EbmParameters &p,
                              const EbmArchitecture &arch) {
  const EbmLayout lo = ebm_layout(arch);
  if (p.flat.size() != lo.total) throw std::invalid_argument("parameter size mismatch");
  ForwardPass fp = forward(u, p, arch, lo, true);
  return backward(fp, p, arch, lo, false, true).d_params;
}

void save_checkpoint(const EbmArchitecture &arch, const EbmParameters &p,
                     const std::string &path) {
  const EbmLayout lo = ebm_layout(arch);
  if (p.flat.size() != lo.total) throw std::invalid_argument("parameter size mismatch");
  nlohmann::json h;
  h["layers"] = arch.layers;
  h["base_features"] = arch.base_features;
  h["feature_ratio"] = arch.feature_ratio;
  h["leak"] = arch.leak;
  h["crop_rows"] = arch.crop_rows;
  h["crop_cols"] = arch.crop_cols;
  h["dtype"] = "<f8";
  nlohmann::json tensors = nlohmann::json::array();
  const auto chan = channel_table(arch);
  for (int l = 0; l < arch.layers; ++l) {
    const auto &L = lo.layer[l];
    tensors.push_back({{"name", "w1." + std::to_string(l)}, {"shape", {L.out_ch, L.in_ch, 3, 3}}});
    tensors.push_back({{"name", "b1." + std::to_string(l)}, {"shape", {L.out_ch}}});
    tensors.push_back({{"name", "w2." + std::to_string(l)}, {"shape", {L.out_ch, L.out_ch, 3, 3}}});
    tensors.push_back({{"name", "b2." + std::to_string(l)}, {"shape", {L.out_ch}}});
  }
  tensors.push_back({{"name", "fc"}, {"shape", {lo.fc_ch, lo.fc_rows, lo.fc_cols}}});
  h["tensors"] = std::move(tensors);
  (void)chan;

  const std::string header = h.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write("EBMCKPT\n", 8);
  const auto len = static_cast<std::uint32_t>(header.size());
  char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                  static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  f.write(lenb, 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char *>(p.flat.data()),
          static_cast<std::streamsize>(p.flat.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short checkpoint write: " + path);
}

std::pair<EbmArchitecture, EbmParameters> load_checkpoint(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, "EBMCKPT\n", 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  unsigned char lenb[4];
  if (!f.read(reinterpret_cast<char *>(lenb), 4))
    throw std::runtime_error("truncated checkpoint header: " + path);
  const std::size_t len = lenb[0] | (lenb[1] << 8) | (lenb[2] << 16) |
                          (static_cast<std::size_t>(lenb[3]) << 24);
  std::string header(len, '\0');
  if (!f.read(header.data(), static_cast<std::streamsize>(len)))
    throw std::runtime_error("truncated checkpoint header: " + path);
  const nlohmann::json h = nlohmann::json::parse(header);

  EbmArchitecture arch;
  arch.layers = h.at("layers").get<int>();
  arch.base_features = h.at("base_features").get<int>();
  arch.feature_ratio = h.at("feature_ratio").get<double>();
  arch.leak = h.at("leak").get<double>();
  arch.crop_rows = h.at("crop_rows").get<int>();
  arch.crop_cols = h.at("crop_cols").get<int>();

  EbmParameters p(arch);
  if (!f.read(reinterpret_cast<char *>(p.flat.data()),
              static_cast<std::streamsize>(p.flat.size() * sizeof(double))))
    throw std::runtime_error("truncated checkpoint data: " + path);
  return {arch, std::move(p)};
}

} // namespace ebmri

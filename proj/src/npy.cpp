#include "ebmri/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace ebmri {

namespace {

constexpr char kMagic[] = "\x93NUMPY";

std::string header_dict(const char *descr, const std::vector<std::size_t> &shape) {
  std::ostringstream os;
  os << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) os << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
  os << "), }";
  std::string h = os.str();
  // Pad with spaces so that magic+version+len+header is a multiple of 64,
  // terminated by newline.
  const std::size_t base = 6 + 2 + 2;
  std::size_t total = base + h.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  h.append(padded - total, ' ');
  h.push_back('\n');
  return h;
}

std::string encode(const char *descr, const std::vector<std::size_t> &shape, const void *data,
                   std::size_t nbytes) {
  std::string h = header_dict(descr, shape);
  std::string out;
  out.reserve(10 + h.size() + nbytes);
  out.append(kMagic, 6);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(h.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  out.append(h);
  out.append(static_cast<const char *>(data), nbytes);
  return out;
}

void write_file(const std::string &bytes, const std::string &path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw NpyError(NpyError::Kind::io, "cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw NpyError(NpyError::Kind::io, "short write: " + path);
}

struct Parsed {
  std::string descr;
  std::vector<std::size_t> shape;
  std::vector<char> payload;
};

// Minimal parser for the python-dict literal numpy writes.
std::string dict_value(const std::string &dict, const std::string &key) {
  auto kpos = dict.find("'" + key + "'");
  if (kpos == std::string::npos) throw NpyError(NpyError::Kind::bad_header, "missing key " + key);
  auto colon = dict.find(':', kpos);
  if (colon == std::string::npos) throw NpyError(NpyError::Kind::bad_header, "malformed header");
  auto start = dict.find_first_not_of(" \t", colon + 1);
  if (start == std::string::npos) throw NpyError(NpyError::Kind::bad_header, "malformed header");
  if (dict[start] == '\'') {
    auto end = dict.find('\'', start + 1);
    if (end == std::string::npos) throw NpyError(NpyError::Kind::bad_header, "malformed header");
    return dict.substr(start + 1, end - start - 1);
  }
  if (dict[start] == '(') {
    auto end = dict.find(')', start);
    if (end == std::string::npos) throw NpyError(NpyError::Kind::bad_header, "malformed header");
    return dict.substr(start, end - start + 1);
  }
  auto end = dict.find_first_of(",}", start);
  return dict.substr(start, end - start);
}

Parsed parse(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NpyError(NpyError::Kind::io, "cannot open: " + path);
  char magic[8];
  if (!f.read(magic, 8)) throw NpyError(NpyError::Kind::bad_magic, "file too short: " + path);
  if (std::memcmp(magic, kMagic, 6) != 0)
    throw NpyError(NpyError::Kind::bad_magic, "not an NPY file: " + path);
  if (magic[6] != 1) throw NpyError(NpyError::Kind::bad_header, "unsupported NPY version");
  unsigned char lenb[2];
  if (!f.read(reinterpret_cast<char *>(lenb), 2))
    throw NpyError(NpyError::Kind::bad_header, "truncated header length");
  const std::size_t hlen = lenb[0] | (static_cast<std::size_t>(lenb[1]) << 8);
  std::string header(hlen, '\0');
  if (!f.read(header.data(), static_cast<std::streamsize>(hlen)))
    throw NpyError(NpyError::Kind::bad_header, "truncated header");

  Parsed p;
  p.descr = dict_value(header, "descr");
  const std::string order = dict_value(header, "fortran_order");
  if (order.find("True") != std::string::npos)
    throw NpyError(NpyError::Kind::bad_header, "fortran_order arrays are not supported");
  std::string shape = dict_value(header, "shape");
  for (std::size_t i = 0; i < shape.size();) {
    if (std::isdigit(static_cast<unsigned char>(shape[i]))) {
      std::size_t j = i;
      while (j < shape.size() && std::isdigit(static_cast<unsigned char>(shape[j]))) ++j;
      p.shape.push_back(std::stoull(shape.substr(i, j - i)));
      i = j;
    } else {
      ++i;
    }
  }

  p.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return p;
}

std::size_t element_count(const Parsed &p) {
  std::size_t n = 1;
  for (auto s : p.shape) n *= s;
  return n;
}

void check_payload(const Parsed &p, std::size_t itemsize, const std::string &path) {
  if (p.payload.size() != element_count(p) * itemsize)
    throw NpyError(NpyError::Kind::bad_shape, "payload size does not match shape: " + path);
}

} // namespace

std::string npy_bytes(const RealGrid &g) {
  return encode("<f8", {static_cast<std::size_t>(g.rows()), static_cast<std::size_t>(g.cols())},
                g.data(), g.size() * sizeof(double));
}

std::string npy_bytes(const ComplexGrid &g) {
  return encode("<c16", {static_cast<std::size_t>(g.rows()), static_cast<std::size_t>(g.cols())},
                g.data(), g.size() * sizeof(cplx));
}

std::string npy_bytes(const CoilSet &coils) {
  if (coils.empty()) throw NpyError(NpyError::Kind::bad_shape, "empty coil set");
  std::vector<cplx> flat;
  flat.reserve(coils.size() * coils.front().size());
  for (const auto &c : coils) {
    if (!c.same_shape(coils.front()))
      throw NpyError(NpyError::Kind::bad_shape, "coil shapes differ");
    flat.insert(flat.end(), c.data(), c.data() + c.size());
  }
  return encode("<c16",
                {coils.size(), static_cast<std::size_t>(coils.front().rows()),
                 static_cast<std::size_t>(coils.front().cols())},
                flat.data(), flat.size() * sizeof(cplx));
}

void save_tensor(const RealGrid &g, const std::string &path) { write_file(npy_bytes(g), path); }
void save_tensor(const ComplexGrid &g, const std::string &path) { write_file(npy_bytes(g), path); }
void save_tensor(const CoilSet &coils, const std::string &path) { write_file(npy_bytes(coils), path); }

RealGrid load_real(const std::string &path) {
  Parsed p = parse(path);
  if (p.descr != "<f8") throw NpyError(NpyError::Kind::bad_dtype, "expected <f8, got " + p.descr);
  if (p.shape.size() != 2) throw NpyError(NpyError::Kind::bad_shape, "expected 2D array: " + path);
  check_payload(p, sizeof(double), path);
  RealGrid g(static_cast<int>(p.shape[0]), static_cast<int>(p.shape[1]));
  std::memcpy(g.data(), p.payload.data(), p.payload.size());
  return g;
}

ComplexGrid load_complex(const std::string &path) {
  Parsed p = parse(path);
  if (p.descr != "<c16") throw NpyError(NpyError::Kind::bad_dtype, "expected <c16, got " + p.descr);
  if (p.shape.size() != 2) throw NpyError(NpyError::Kind::bad_shape, "expected 2D array: " + path);
  check_payload(p, sizeof(cplx), path);
  ComplexGrid g(static_cast<int>(p.shape[0]), static_cast<int>(p.shape[1]));
  std::memcpy(g.data(), p.payload.data(), p.payload.size());
  return g;
}

CoilSet load_coils(const std::string &path) {
  Parsed p = parse(path);
  if (p.descr != "<c16") throw NpyError(NpyError::Kind::bad_dtype, "expected <c16, got " + p.descr);
  if (p.shape.size() != 3) throw NpyError(NpyError::Kind::bad_shape, "expected 3D array: " + path);
  check_payload(p, sizeof(cplx), path);
  CoilSet coils;
  const int rows = static_cast<int>(p.shape[1]), cols = static_cast<int>(p.shape[2]);
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  for (std::size_t c = 0; c < p.shape[0]; ++c) {
    ComplexGrid g(rows, cols);
    std::memcpy(g.data(), p.payload.data() + c * plane * sizeof(cplx), plane * sizeof(cplx));
    coils.push_back(std::move(g));
  }
  return coils;
}

} // namespace ebmri

#pragma once

#include "ebmri/grid.hpp"

#include <string>

namespace ebmri {

/// Errors raised by the NPY reader/writer, with a machine-checkable kind.
class NpyError : public std::runtime_error {
public:
  enum class Kind { io, bad_magic, bad_header, bad_dtype, bad_shape };

  NpyError(Kind kind, const std::string &msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

// NPY v1.0, little-endian, C-order.  Real grids are '<f8', complex grids
// '<c16'.  Coil stacks are 3D arrays of shape (C, rows, cols).

void save_tensor(const RealGrid &g, const std::string &path);
void save_tensor(const ComplexGrid &g, const std::string &path);
void save_tensor(const CoilSet &coils, const std::string &path);

RealGrid load_real(const std::string &path);
ComplexGrid load_complex(const std::string &path);
CoilSet load_coils(const std::string &path);

/// In-memory encodings, used by determinism checks and the savers.
std::string npy_bytes(const RealGrid &g);
std::string npy_bytes(const ComplexGrid &g);
std::string npy_bytes(const CoilSet &coils);

} // namespace ebmri

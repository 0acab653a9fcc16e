#pragma once

#include "ebmri/grid.hpp"

#include <string>

namespace ebmri {

/// Writes a 16-bit grayscale PNG, windowing [lo, hi] onto the full range.
/// hi <= lo falls back to the grid's own [0, max].
void write_png16(const RealGrid &g, const std::string &path, double lo = 0.0, double hi = 0.0);

} // namespace ebmri

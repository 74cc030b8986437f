#pragma once

#include <cstddef>

namespace apnea::nn {

/// out[c] += sum over r of m[r * cols + c], rows in order. Written out by hand
/// so results never depend on buffer alignment.
inline void add_column_sums(const double* m, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
}

}  // namespace apnea::nn

#pragma once

#include <vector>

#include "dsg/tensor.hpp"

namespace dsg {

// Sinusoidal position code: row r encodes positions[r] with interleaved
// sin/cos pairs at geometrically spaced frequencies (base 10000). dim must
// be even (pairs), positions may be negative (relative offsets).
Tensor positional_encoding(const std::vector<int>& positions, int dim);

}  // namespace dsg

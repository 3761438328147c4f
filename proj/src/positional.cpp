#include "dsg/positional.hpp"

#include <cmath>

#include "dsg/errors.hpp"

namespace dsg {

Tensor positional_encoding(const std::vector<int>& positions, int dim) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ContractError("positional encoding dimension must be even and positive, got " +
                        std::to_string(dim));
  }
  if (positions.empty()) throw ContractError("positional encoding needs at least one position");
  Tensor out({static_cast<int>(positions.size()), dim}, 0.0);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const double pos = static_cast<double>(positions[r]);
    for (int k = 0; k < dim / 2; ++k) {
      const double freq = std::pow(10000.0, -2.0 * k / dim);
      out.at(static_cast<int>(r), 2 * k) = std::sin(pos * freq);
      out.at(static_cast<int>(r), 2 * k + 1) = std::cos(pos * freq);
    }
  }
  return out;
}

}  // namespace dsg

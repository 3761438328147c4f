#include "dsg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dsg {

Tensor::Tensor(std::vector<int> shape_in, double fill) : shape(std::move(shape_in)) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ContractError("tensor shape entries must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, fill);
}

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ContractError("tensor shape entries must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  if (n != data.size()) {
    throw ContractError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str());
  }
}

Tensor Tensor::row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

int Tensor::rows() const {
  if (rank() == 2) return shape[0];
  if (rank() == 1) return 1;
  throw ContractError("rows() requires rank 1 or 2, got rank " + std::to_string(rank()));
}

int Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return shape[0];
  throw ContractError("cols() requires rank 1 or 2, got rank " + std::to_string(rank()));
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

}  // namespace dsg

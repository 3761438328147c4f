#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dsg/errors.hpp"

namespace dsg {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
// pipeline needs. A default-constructed Tensor is the "empty" sentinel
// (no shape, no data); every constructed shape has entries >= 1.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_in, double fill = 0.0);
  Tensor(std::vector<int> shape_in, std::vector<double> data_in);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // Row/column view: rank-1 tensors behave as a single row.
  int rows() const;
  int cols() const;

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;  // e.g. "[2x3]"
};

bool operator==(const Tensor& a, const Tensor& b);

// Name-keyed tensor collection; std::map so iteration order is
// deterministic everywhere (init, optimizer sweeps, serialization).
using TensorMap = std::map<std::string, Tensor>;

}  // namespace dsg

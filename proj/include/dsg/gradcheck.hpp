#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dsg/graph.hpp"
#include "dsg/tensor.hpp"

namespace dsg {

// Builds a scalar loss on a fresh graph from named parameter leaves. Called
// once for the analytic pass and twice per probed coordinate for the
// finite-difference pass, so it must be deterministic given the parameters.
using GraphBuilder = std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>;

struct GradCheckOptions {
  double eps = 1e-5;       // central-difference step
  double rel_tol = 1e-4;   // |analytic - fd| <= max(rel_tol * scale, abs_tol)
  double abs_tol = 1e-7;
  // Large tensors are probed at a deterministic random subset of coordinates
  // to keep full-model checks fast; 0 means every coordinate.
  int max_coords_per_tensor = 0;
  std::uint64_t sample_seed = 7;
};

struct GradCheckResult {
  bool passed = true;
  int coords_checked = 0;
  double worst = 0.0;        // worst |analytic - fd| / max(scale, 1e-3)
  std::string worst_where;   // "name[flat_index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

GradCheckResult check_gradients(const GraphBuilder& build, const TensorMap& params,
                                const GradCheckOptions& opts = {});

struct GradCheckCase {
  std::string name;
  GraphBuilder build;
  TensorMap params;
  GradCheckOptions opts;
};

// Named collection of gradient checks; the CLI runs the standard suite and
// fails if any case disagrees with finite differences.
class GradCheckSuite {
 public:
  void add(GradCheckCase c) { cases_.push_back(std::move(c)); }
  std::size_t size() const { return cases_.size(); }
  // One line per case to `out`; returns true when every case passes.
  bool run(std::ostream& out) const;

 private:
  std::vector<GradCheckCase> cases_;
};

// Covers every op plus the composed model blocks. Defined in checks.cpp.
GradCheckSuite standard_suite();

}  // namespace dsg

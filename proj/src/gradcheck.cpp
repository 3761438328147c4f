#include "dsg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dsg/errors.hpp"
#include "dsg/rng.hpp"

namespace dsg {

namespace {

double eval_loss(const GraphBuilder& build, const TensorMap& params) {
  Graph g;
  std::map<std::string, NodeId> ids;
  for (const auto& [name, value] : params) ids[name] = g.constant(value);
  const NodeId loss = build(g, ids);
  const Tensor& v = g.value(loss);
  if (v.numel() != 1) throw ContractError("gradient check: loss must be scalar");
  return v.data[0];
}

// Deterministic choice of which coordinates to probe for one tensor.
std::vector<std::size_t> pick_coords(std::size_t numel, int cap, std::uint64_t seed) {
  std::vector<std::size_t> coords;
  if (cap <= 0 || numel <= static_cast<std::size_t>(cap)) {
    coords.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
    return coords;
  }
  Rng rng(seed);
  std::vector<std::size_t> all(numel);
  for (std::size_t i = 0; i < numel; ++i) all[i] = i;
  for (int k = 0; k < cap; ++k) {  // partial Fisher-Yates
    const std::size_t j =
        static_cast<std::size_t>(k) +
        static_cast<std::size_t>(rng.next_u64() % (numel - static_cast<std::size_t>(k)));
    std::swap(all[static_cast<std::size_t>(k)], all[j]);
    coords.push_back(all[static_cast<std::size_t>(k)]);
  }
  std::sort(coords.begin(), coords.end());
  return coords;
}

}  // namespace

GradCheckResult check_gradients(const GraphBuilder& build, const TensorMap& params,
                                const GradCheckOptions& opts) {
  // Analytic pass: one graph with real parameter leaves.
  Graph g;
  std::map<std::string, NodeId> ids;
  for (const auto& [name, value] : params) ids[name] = g.parameter(value);
  const NodeId loss = build(g, ids);
  if (g.value(loss).numel() != 1) throw ContractError("gradient check: loss must be scalar");
  g.backward(loss);
  TensorMap analytic;
  for (const auto& [name, id] : ids) analytic[name] = g.grad(id);

  GradCheckResult result;
  std::uint64_t tensor_tag = 0;
  for (const auto& [name, value] : params) {
    const std::vector<std::size_t> coords =
        pick_coords(value.numel(), opts.max_coords_per_tensor,
                    derive_seed(opts.sample_seed, {tensor_tag}));
    ++tensor_tag;
    for (std::size_t i : coords) {
      TensorMap shifted = params;
      shifted[name].data[i] = value.data[i] + opts.eps;
      const double up = eval_loss(build, shifted);
      shifted[name].data[i] = value.data[i] - opts.eps;
      const double down = eval_loss(build, shifted);
      const double fd = (up - down) / (2.0 * opts.eps);
      const double a = analytic[name].data[i];
      const double scale = std::max(std::abs(a), std::abs(fd));
      const double diff = std::abs(a - fd);
      const double rel = diff / std::max(scale, 1e-3);
      ++result.coords_checked;
      if (rel > result.worst) {
        result.worst = rel;
        result.worst_where = name + "[" + std::to_string(i) + "]";
        result.worst_analytic = a;
        result.worst_fd = fd;
      }
      if (diff > std::max(opts.rel_tol * scale, opts.abs_tol)) result.passed = false;
    }
  }
  return result;
}

bool GradCheckSuite::run(std::ostream& out) const {
  if (cases_.empty()) throw ContractError("gradient check suite is empty");
  bool all_passed = true;
  for (const GradCheckCase& c : cases_) {
    const GradCheckResult r = check_gradients(c.build, c.params, c.opts);
    out << (r.passed ? "pass" : "FAIL") << "  " << c.name << "  coords=" << r.coords_checked
        << "  worst=" << r.worst;
    if (!r.worst_where.empty()) {
      out << " at " << r.worst_where << " (analytic=" << r.worst_analytic
          << ", fd=" << r.worst_fd << ")";
    }
    out << "\n";
    all_passed = all_passed && r.passed;
  }
  return all_passed;
}

}  // namespace dsg

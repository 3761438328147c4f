#include "dsg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dsg/errors.hpp"

namespace dsg {

namespace {

double clamp_p(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

void check_gammas(double gamma_pos, double gamma_neg) {
  if (gamma_pos < 0.0 || gamma_neg < 0.0 || gamma_neg < gamma_pos) {
    throw ContractError("asymmetric loss requires 0 <= gamma_pos <= gamma_neg, got " +
                        std::to_string(gamma_pos) + " and " + std::to_string(gamma_neg));
  }
}

}  // namespace

double bce_term(double p, int y) {
  p = clamp_p(p);
  return y ? -std::log(p) : -std::log(1.0 - p);
}

double focal_term(double p, int y, double gamma) {
  if (gamma < 0.0) throw ContractError("focal gamma must be >= 0");
  p = clamp_p(p);
  const double pt = y ? p : 1.0 - p;
  return std::pow(1.0 - pt, gamma) * -std::log(pt);
}

double class_balance_weight(double beta, long long n) {
  if (beta < 0.0 || beta >= 1.0) {
    throw ContractError("class-balance beta must be in [0, 1), got " + std::to_string(beta));
  }
  if (n < 0) throw ContractError("class count must be >= 0");
  if (n == 0) return 1.0;
  return (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n)));
}

double ar_term(double p, int y, double gamma_pos, double gamma_neg, double omega) {
  check_gammas(gamma_pos, gamma_neg);
  p = clamp_p(p);
  if (y) return omega * std::pow(1.0 - p, gamma_pos) * -std::log(p);
  return std::pow(p, gamma_neg) * -std::log(1.0 - p);
}

double margin_term(double s_pos, double s_neg, double margin) {
  return std::max(0.0, margin - s_pos + s_neg);
}

std::vector<double> class_balance_weights(const std::vector<long long>& counts, double beta) {
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) w[i] = class_balance_weight(beta, counts[i]);
  return w;
}

namespace {

// Shared elementwise builder: pos_mask * omega_row * (1-p)^gpos * -log(p)
//                           + neg_mask * p^gneg * -log(1-p),
// summed per pair, averaged over pairs. The plain cross entropy reuses this
// with zero exponents and unit weights, which makes the equivalence exact:
// pow(x, 0) evaluates to exactly 1 and multiplying by 1.0 is lossless.
NodeId weighted_ce(Graph& g, NodeId probs, const Tensor& targets, double gamma_pos,
                   double gamma_neg, const std::vector<double>& omega) {
  const int n = targets.rows();
  const int p_dim = targets.cols();
  Tensor pos = targets;
  Tensor neg(targets.shape, 0.0);
  for (std::size_t i = 0; i < pos.data.size(); ++i) {
    if (pos.data[i] != 0.0 && pos.data[i] != 1.0) {
      throw ContractError("relation targets must be 0/1");
    }
    neg.data[i] = 1.0 - pos.data[i];
  }
  Tensor omega_row({1, p_dim}, 1.0);
  if (!omega.empty()) {
    if (static_cast<int>(omega.size()) != p_dim) {
      throw ShapeError("omega length " + std::to_string(omega.size()) +
                       " does not match predicate count " + std::to_string(p_dim));
    }
    omega_row.data.assign(omega.begin(), omega.end());
  }
  const NodeId ones = g.constant(Tensor(targets.shape, 1.0));
  const NodeId one_minus_p = g.sub(ones, probs);
  const NodeId pos_term =
      g.mul(g.mul(g.constant(std::move(pos)), g.constant(std::move(omega_row))),
            g.mul(g.pow(one_minus_p, gamma_pos), g.scalar_mul(g.log(probs), -1.0)));
  const NodeId neg_term = g.mul(g.constant(std::move(neg)),
                                g.mul(g.pow(probs, gamma_neg),
                                      g.scalar_mul(g.log(one_minus_p), -1.0)));
  return g.scalar_mul(g.sum(g.add(pos_term, neg_term)), 1.0 / static_cast<double>(n));
}

NodeId focal_batch(Graph& g, NodeId probs, const Tensor& targets, double gamma) {
  const int n = targets.rows();
  Tensor pos = targets;
  Tensor neg(targets.shape, 0.0);
  for (std::size_t i = 0; i < pos.data.size(); ++i) neg.data[i] = 1.0 - pos.data[i];
  const NodeId ones = g.constant(Tensor(targets.shape, 1.0));
  // p_t = p on positive slots, 1-p on negative slots.
  const NodeId pt = g.add(g.mul(g.constant(std::move(pos)), probs),
                          g.mul(g.constant(std::move(neg)), g.sub(ones, probs)));
  const NodeId per_slot =
      g.mul(g.pow(g.sub(ones, pt), gamma), g.scalar_mul(g.log(pt), -1.0));
  return g.scalar_mul(g.sum(per_slot), 1.0 / static_cast<double>(n));
}

NodeId margin_batch(Graph& g, NodeId probs, const Tensor& targets, double margin) {
  std::vector<int> pos_idx, neg_idx;
  for (std::size_t i = 0; i < targets.data.size(); ++i) {
    (targets.data[i] != 0.0 ? pos_idx : neg_idx).push_back(static_cast<int>(i));
  }
  if (pos_idx.empty() || neg_idx.empty()) {
    // No ranking constraint exists; contribute a true zero that still
    // touches the probabilities so the graph stays connected.
    return g.scalar_mul(g.sum(probs), 0.0);
  }
  const int np = static_cast<int>(pos_idx.size());
  const int nn = static_cast<int>(neg_idx.size());
  const NodeId flat = g.reshape(probs, {static_cast<int>(targets.data.size()), 1});
  const NodeId pos_col = g.gather_rows(flat, std::move(pos_idx));  // [np, 1]
  const NodeId neg_col = g.gather_rows(flat, std::move(neg_idx));  // [nn, 1]
  // Broadcast to the [np, nn] grid of (positive, negative) pairs.
  const NodeId pos_grid = g.matmul(pos_col, g.constant(Tensor({1, nn}, 1.0)));
  const NodeId neg_grid = g.matmul(g.constant(Tensor({np, 1}, 1.0)), g.transpose(neg_col));
  const NodeId viol =
      g.relu(g.add(g.sub(g.constant(Tensor({np, nn}, margin)), pos_grid), neg_grid));
  return g.mean(viol);
}

}  // namespace

NodeId relation_loss(Graph& g, NodeId probs, const Tensor& targets, const RelLossConfig& cfg) {
  const Tensor& pv = g.value(probs);
  if (!pv.same_shape(targets)) {
    throw ShapeError("relation loss: probabilities " + pv.shape_str() + " vs targets " +
                     targets.shape_str());
  }
  if (targets.rank() != 2) throw ShapeError("relation loss: targets must be rank 2");
  switch (cfg.kind) {
    case RelLossKind::kBce:
      return weighted_ce(g, probs, targets, 0.0, 0.0, {});
    case RelLossKind::kFocal:
      return focal_batch(g, probs, targets, cfg.focal_gamma);
    case RelLossKind::kMlm:
      return margin_batch(g, probs, targets, cfg.margin);
    case RelLossKind::kAr:
      check_gammas(cfg.gamma_pos, cfg.gamma_neg);
      return weighted_ce(g, probs, targets, cfg.gamma_pos, cfg.gamma_neg, cfg.omega);
  }
  throw ContractError("unknown relation loss kind");
}

NodeId object_class_loss(Graph& g, NodeId logits, const std::vector<int>& labels) {
  const Tensor& lv = g.value(logits);
  if (lv.rank() != 2 || lv.rows() != static_cast<int>(labels.size())) {
    throw ShapeError("object loss: logits " + lv.shape_str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor onehot(lv.shape, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= lv.cols()) {
      throw ContractError("object label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(lv.cols()) + ")");
    }
    onehot.at(static_cast<int>(i), labels[i]) = 1.0;
  }
  const NodeId logp = g.log(g.softmax(logits, 1));
  const NodeId picked = g.mul(g.constant(std::move(onehot)), logp);
  return g.scalar_mul(g.sum(picked), -1.0 / static_cast<double>(labels.size()));
}

}  // namespace dsg

#pragma once

#include <vector>

#include "dsg/graph.hpp"
#include "dsg/tensor.hpp"

namespace dsg {

// ---- scalar forms (reference math, also used to weight the batch builders)

// Binary cross entropy of probability p against label y, with the same
// clamping the graph ops apply.
double bce_term(double p, int y);

// (1 - p_t)^gamma * -log(p_t) with p_t = p for positives, 1-p otherwise.
double focal_term(double p, int y, double gamma);

// Effective-number class weight (1 - beta) / (1 - beta^n). beta in [0,1);
// n = 0 gives the neutral weight 1 (it never multiplies a live term).
double class_balance_weight(double beta, long long n);

// Asymmetric reweighted term: positives get omega * (1-p)^gamma_pos * -log p,
// negatives get p^gamma_neg * -log(1-p). gamma_neg must be >= gamma_pos.
double ar_term(double p, int y, double gamma_pos, double gamma_neg, double omega);

// Margin violation max(0, margin - s_pos + s_neg) for one score pair.
double margin_term(double s_pos, double s_neg, double margin);

std::vector<double> class_balance_weights(const std::vector<long long>& counts, double beta);

// ---- batch builders on the graph

enum class RelLossKind { kBce, kFocal, kMlm, kAr };

struct RelLossConfig {
  RelLossKind kind = RelLossKind::kAr;
  double gamma_pos = 1.0;
  double gamma_neg = 4.0;
  double focal_gamma = 2.0;
  double margin = 1.0;
  // Per-predicate positive weights (class_balance_weights output); an empty
  // vector means all-ones. Only the asymmetric loss consumes them.
  std::vector<double> omega;
};

// Scalar loss over a [n_pairs, P] probability matrix and a matching 0/1
// target matrix: per-pair sum over predicate slots, mean over pairs. The
// margin loss instead averages violations over every (positive, negative)
// entry pair; with no positives or no negatives it contributes zero.
// kBce is built through the identical node sequence as the asymmetric loss
// with both exponents 0 and unit weights, so the two agree bitwise.
NodeId relation_loss(Graph& g, NodeId probs, const Tensor& targets, const RelLossConfig& cfg);

// Mean softmax cross entropy of object class logits [n, C] against labels.
NodeId object_class_loss(Graph& g, NodeId logits, const std::vector<int>& labels);

}  // namespace dsg

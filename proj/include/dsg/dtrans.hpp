#pragma once

#include <vector>

#include "dsg/graph.hpp"
#include "dsg/rng.hpp"

namespace dsg {

// Weight handles for one transformer block, bound into a live graph.
// wq/wk/wv/wo are [D,D]; the feed-forward expands to 2D and back.
struct AttnParams {
  NodeId wq, wk, wv, wo;
  NodeId ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// Columns [from, from + count) of x, used to split projections per head.
NodeId slice_cols(Graph& g, NodeId x, int from, int count);

// Scaled dot-product attention with `heads` independent column slices,
// concatenated and mixed by wo. q_in is [n,D], kv is [m,D].
NodeId multi_head_attention(Graph& g, NodeId q_in, NodeId kv, const AttnParams& p, int heads);

// x * sigmoid(x) expansion MLP; smooth everywhere, which keeps the
// finite-difference checks honest.
NodeId feed_forward(Graph& g, NodeId x, const AttnParams& p);

// Post-norm block: y = LN(x_res + MHA(q_in, kv)); z = LN(y + FFN(y)).
// q_in is the attention input (residual carrier plus any position code);
// the residual connection always carries x_res itself.
NodeId transformer_block(Graph& g, NodeId x_res, NodeId q_in, NodeId kv, const AttnParams& p,
                         int heads);

// K rows picked from a candidate set by perturbed-logit sampling.
struct SelectedContext {
  NodeId rows;                       // [K, D]
  std::vector<int> indices;          // chosen candidate slot per draw; empty on fallback
  std::vector<double> soft_weights;  // selection probability of the chosen slot per draw
};

// Selects k rows (independent draws, with replacement) from kv scored
// against query_row: logits = q . kv^T / sqrt(D).
//  - rng != nullptr: each draw perturbs the logits with Gumbel noise at
//    temperature tau. With straight_through the forward value snaps to the
//    argmax row while the gradient flows through the soft weights; without
//    it the row is the soft mixture itself (fully differentiable, used by
//    the finite-difference suite).
//  - rng == nullptr: deterministic evaluation path; takes the top-k slots
//    by logit (ties to the lower slot), cycling when kv has fewer rows.
//  - kv invalid (empty neighborhood): k copies of query_row, with empty
//    indices and soft_weights.
// The selector itself has no learnable parameters.
SelectedContext select_context(Graph& g, NodeId query_row, NodeId kv, int k, double tau,
                               bool straight_through, Rng* rng);

}  // namespace dsg

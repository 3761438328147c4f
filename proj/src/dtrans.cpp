#include "dsg/dtrans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsg/errors.hpp"

namespace dsg {

NodeId slice_cols(Graph& g, NodeId x, int from, int count) {
  std::vector<int> rows(static_cast<std::size_t>(count));
  std::iota(rows.begin(), rows.end(), from);
  return g.transpose(g.gather_rows(g.transpose(x), std::move(rows)));
}

NodeId multi_head_attention(Graph& g, NodeId q_in, NodeId kv, const AttnParams& p, int heads) {
  const int d = g.value(q_in).cols();
  if (heads <= 0 || d % heads != 0) {
    throw ContractError("attention: feature dim " + std::to_string(d) +
                        " not divisible by head count " + std::to_string(heads));
  }
  const int dh = d / heads;
  const NodeId q = g.matmul(q_in, p.wq);
  const NodeId k = g.matmul(kv, p.wk);
  const NodeId v = g.matmul(kv, p.wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<NodeId> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const NodeId qh = slice_cols(g, q, h * dh, dh);
    const NodeId kh = slice_cols(g, k, h * dh, dh);
    const NodeId vh = slice_cols(g, v, h * dh, dh);
    const NodeId scores = g.scalar_mul(g.matmul(qh, g.transpose(kh)), scale);
    head_out.push_back(g.matmul(g.softmax(scores, 1), vh));
  }
  return g.matmul(g.concat(head_out, 1), p.wo);
}

NodeId feed_forward(Graph& g, NodeId x, const AttnParams& p) {
  const NodeId h = g.add(g.matmul(x, p.ffn_w1), p.ffn_b1);
  const NodeId act = g.mul(h, g.sigmoid(h));
  return g.add(g.matmul(act, p.ffn_w2), p.ffn_b2);
}

NodeId transformer_block(Graph& g, NodeId x_res, NodeId q_in, NodeId kv, const AttnParams& p,
                         int heads) {
  const NodeId y = g.layer_norm(g.add(x_res, multi_head_attention(g, q_in, kv, p, heads)));
  return g.layer_norm(g.add(y, feed_forward(g, y, p)));
}

SelectedContext select_context(Graph& g, NodeId query_row, NodeId kv, int k, double tau,
                               bool straight_through, Rng* rng) {
  if (k <= 0) throw ContractError("select_context: k must be positive");
  if (tau <= 0.0) throw ContractError("select_context: temperature must be positive");
  SelectedContext out;

  if (!kv.valid()) {
    // Nothing to select from; the query stands in for its own context.
    const std::vector<NodeId> copies(static_cast<std::size_t>(k), query_row);
    out.rows = k == 1 ? query_row : g.concat(copies, 0);
    return out;
  }

  const Tensor& kvv = g.value(kv);
  const Tensor& qv = g.value(query_row);
  if (qv.rows() != 1 || qv.cols() != kvv.cols()) {
    throw ShapeError("select_context: query " + qv.shape_str() + " vs candidates " +
                     kvv.shape_str());
  }
  const int m = kvv.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(kvv.cols()));
  const NodeId logits = g.scalar_mul(g.matmul(query_row, g.transpose(kv)), scale);
  const Tensor& lv = g.value(logits);

  if (rng == nullptr) {
    // Evaluation: top-k by logit, lower slot wins ties, cycle if m < k.
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return lv.data[a] > lv.data[b]; });
    // Softmax of the unperturbed logits, for the diagnostic weights.
    double mx = lv.data[0];
    for (double v : lv.data) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : lv.data) denom += std::exp((v - mx) / tau);
    std::vector<int> picks(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const int slot = order[static_cast<std::size_t>(i % m)];
      picks[static_cast<std::size_t>(i)] = slot;
      out.indices.push_back(slot);
      out.soft_weights.push_back(std::exp((lv.data[slot] - mx) / tau) / denom);
    }
    out.rows = g.gather_rows(kv, std::move(picks));
    return out;
  }

  std::vector<NodeId> picked;
  picked.reserve(static_cast<std::size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    Tensor noise({1, m}, 0.0);
    for (double& v : noise.data) v = rng->gumbel();
    const NodeId z = g.scalar_mul(g.add(logits, g.constant(std::move(noise))), 1.0 / tau);
    const NodeId w = g.softmax(z, 1);
    const Tensor& wv = g.value(w);
    int arg = 0;
    for (int j = 1; j < m; ++j) {
      if (wv.data[j] > wv.data[arg]) arg = j;
    }
    out.indices.push_back(arg);
    out.soft_weights.push_back(wv.data[static_cast<std::size_t>(arg)]);
    if (straight_through) {
      // Forward snaps to the one-hot row; the correction is a constant, so
      // the gradient sees only the soft weights.
      Tensor corr({1, m}, 0.0);
      for (int j = 0; j < m; ++j) corr.data[j] = (j == arg ? 1.0 : 0.0) - wv.data[j];
      const NodeId w_st = g.add(w, g.constant(std::move(corr)));
      picked.push_back(g.matmul(w_st, kv));
    } else {
      picked.push_back(g.matmul(w, kv));
    }
  }
  out.rows = k == 1 ? picked[0] : g.concat(picked, 0);
  return out;
}

}  // namespace dsg

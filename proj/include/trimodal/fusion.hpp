#pragma once

// Attention pooling of the available query modalities into one joint query
// embedding. A learned seed vector attends over the set's elements:
//
//   K      = rFF1(elem)  per element (row-wise feed-forward, shared weights)
//   H      = LN(seed + Multihead(seed, K, K)) * g1 + b1
//   z^eta  = LN(H + rFF2(H)) * g2 + b2
//
// Attention weights are softmax(score / sqrt(d)) with per-head projections
// of width d/heads. The set is unordered; tests pin permutation invariance.
// Batched: each element is a B x d matrix, attention runs row-per-record.

#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

namespace detail {

inline Value rff_g(ParamBinder& P, const std::string& p, Value x) {
  auto h = tanh(matmul(x, P(p + ".w1")) + P(p + ".b1"));
  return matmul(h, P(p + ".w2")) + P(p + ".b2");
}

}  // namespace detail

inline Value pool_set_g(Graph& g, ParamBinder& P, const ModelConfig& mc,
                        const std::vector<Value>& elems) {
  int n = static_cast<int>(elems.size());
  if (n < 1 || n > 3) throw ContractError("pool_set: set size must be 1..3, got " + std::to_string(n));
  g.set_scope("mab");
  int batch = g.shape(elems[0])[0];
  for (const Value& e : elems)
    if (g.shape(e) != std::vector<int>{batch, mc.d})
      throw ShapeError("pool_set: element shape " + shape_str(g.shape(e)) + ", expected [" +
                       std::to_string(batch) + "," + std::to_string(mc.d) + "]");

  std::vector<Value> keys;
  keys.reserve(static_cast<std::size_t>(n));
  for (const Value& e : elems) keys.push_back(detail::rff_g(P, "mab.rff1", e));

  auto seed = P("mab.seed");  // 1 x d
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(mc.d));
  Value mh;
  for (int j = 0; j < mc.heads; ++j) {
    std::string hp = "mab.h" + std::to_string(j);
    auto q = matmul(seed, P(hp + ".wq"));  // 1 x dh
    Value scores;                          // B x n, one column per element
    std::vector<Value> vals;
    for (int m = 0; m < n; ++m) {
      auto k = matmul(keys[static_cast<std::size_t>(m)], P(hp + ".wk"));  // B x dh
      auto col = matmul(k, q, false, true);                               // B x 1
      scores = m == 0 ? col : concat(scores, col, 1);
      vals.push_back(matmul(keys[static_cast<std::size_t>(m)], P(hp + ".wv")));
    }
    auto att = softmax_rows(scale(scores, inv_sqrt_d));  // B x n
    Value head;
    for (int m = 0; m < n; ++m) {
      auto contrib = slice(att, 1, m, 1) * vals[static_cast<std::size_t>(m)];  // col bcast
      head = m == 0 ? contrib : head + contrib;
    }
    mh = j == 0 ? head : concat(mh, head, 1);
  }
  auto attn_out = matmul(mh, P("mab.wo"));  // B x d

  auto h1 = layernorm_rows(seed + attn_out) * P("mab.ln1.g") + P("mab.ln1.b");
  auto out = layernorm_rows(h1 + detail::rff_g(P, "mab.rff2", h1)) * P("mab.ln2.g") +
             P("mab.ln2.b");
  g.set_scope("");
  return out;
}

// Single-record convenience driver.
inline std::vector<double> pool_set(const ParamTable& table, const ModelConfig& mc,
                                    const std::vector<std::vector<double>>& elems) {
  Graph g;
  ParamBinder P(g, table, false);
  std::vector<Value> vals;
  Bindings b = as_bindings(table);
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if (static_cast<int>(elems[i].size()) != mc.d)
      throw ContractError("pool_set: element dim " + std::to_string(elems[i].size()) +
                          ", expected " + std::to_string(mc.d));
    std::string name = "elem" + std::to_string(i);
    vals.push_back(g.input(name, {1, mc.d}));
    b[name] = Tensor::matrix(1, mc.d, std::vector<double>(elems[i]));
  }
  g.mark_output("eta", pool_set_g(g, P, mc, vals));
  return g.evaluate(b)["eta"].data;
}

}  // namespace trimodal::model

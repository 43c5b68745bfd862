#pragma once

// Modality encoders. Each one maps a batch of observations to a total
// embedding z_tot (B x c) split into a modality-agnostic part z_alpha
// (first d columns) and a modality-specific remainder z_beta.

#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

struct SplitEmbedding {
  Value tot;    // B x c
  Value alpha;  // B x d, first columns of tot
  Value beta;   // B x (c-d), remaining columns
};

inline SplitEmbedding split_embedding(const ModelConfig& mc, Value tot) {
  SplitEmbedding s;
  s.tot = tot;
  s.alpha = slice(tot, 1, 0, mc.d);
  s.beta = slice(tot, 1, mc.d, mc.q());
  return s;
}

// Two-layer perceptron encoder for a vector modality. `which` is "skc" or "pho".
inline SplitEmbedding encode_vector_g(Graph& g, ParamBinder& P, const ModelConfig& mc,
                                      const std::string& which, Value x) {
  std::string p = vec_encoder_prefix(mc, which);
  g.set_scope(p);
  auto h = tanh(matmul(x, P(p + ".w1")) + P(p + ".b1"));
  auto tot = matmul(h, P(p + ".w2")) + P(p + ".b2");
  g.set_scope("");
  return split_embedding(mc, tot);
}

namespace detail {

// One-hot rows for a batch of token ids.
inline Value one_hot_const(Graph& g, const std::vector<int>& ids, int width,
                           const char* what) {
  Tensor t = Tensor::zeros({static_cast<int>(ids.size()), width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= width)
      throw FormatError(FormatError::Kind::InvalidData,
                        std::string(what) + ": token " + std::to_string(ids[i]) +
                            " outside vocabulary of " + std::to_string(width));
    t.data[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(ids[i])] = 1.0;
  }
  return g.constant(std::move(t));
}

// One gated recurrent step, gates fused as [r|u|n]:
//   r = sig(xWx_r + hWh_r + b_r)    u = sig(xWx_u + hWh_u + b_u)
//   n = tanh(xWx_n + r*(hWh_n) + b_n)    h' = u*h + (1-u)*n
// Shared by the text encoder directions and the caption decoder cell.
inline Value gru_cell(Graph& g, ParamBinder& P, const std::string& prefix, Value x, Value hcur,
                      int h) {
  auto b = P(prefix + ".b");
  auto one = g.constant_scalar(1.0);
  auto gx = matmul(x, P(prefix + ".wx"));
  auto gh = matmul(hcur, P(prefix + ".wh"));
  auto r = sigmoid(slice(gx, 1, 0, h) + slice(gh, 1, 0, h) + slice(b, 0, 0, h));
  auto u = sigmoid(slice(gx, 1, h, h) + slice(gh, 1, h, h) + slice(b, 0, h, h));
  auto n = tanh(slice(gx, 1, 2 * h, h) + r * slice(gh, 1, 2 * h, h) + slice(b, 0, 2 * h, h));
  return u * hcur + (one - u) * n;
}

inline Value gru_direction(Graph& g, ParamBinder& P, const std::string& prefix,
                           const std::vector<Value>& xs, int batch, int h) {
  Value hcur = g.constant_zeros({batch, h});
  for (const Value& x : xs) hcur = gru_cell(g, P, prefix, x, hcur, h);
  return hcur;
}

}  // namespace detail

// Bidirectional recurrent encoder over fixed-length token sequences.
// Final forward and backward states are concatenated and projected to c.
inline SplitEmbedding encode_text_g(Graph& g, ParamBinder& P, const ModelConfig& mc,
                                    const std::vector<std::vector<int>>& tokens) {
  if (tokens.empty()) throw ContractError("encode_text: empty batch");
  int batch = static_cast<int>(tokens.size());
  for (const auto& seq : tokens)
    if (static_cast<int>(seq.size()) != mc.text_len)
      throw ContractError("encode_text: sequence length " + std::to_string(seq.size()) +
                          ", expected " + std::to_string(mc.text_len));
  g.set_scope("enc.txt");
  auto emb = P("enc.txt.emb");
  std::vector<Value> xs;
  xs.reserve(static_cast<std::size_t>(mc.text_len));
  for (int t = 0; t < mc.text_len; ++t) {
    std::vector<int> col(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) col[static_cast<std::size_t>(i)] = tokens[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    xs.push_back(matmul(detail::one_hot_const(g, col, mc.vocab, "encode_text"), emb));
  }
  auto h_f = detail::gru_direction(g, P, "enc.txt.f", xs, batch, mc.text_hidden);
  std::vector<Value> rev(xs.rbegin(), xs.rend());
  auto h_b = detail::gru_direction(g, P, "enc.txt.b", rev, batch, mc.text_hidden);
  auto tot = matmul(concat(h_f, h_b, 1), P("enc.txt.proj.w")) + P("enc.txt.proj.b");
  g.set_scope("");
  return split_embedding(mc, tot);
}

// ---------------------------------------------------------------------------
// Convenience single/multi-record drivers (forward only, fresh graph).

inline Tensor encode_vector(const ParamTable& table, const ModelConfig& mc,
                            const std::string& which, const std::vector<double>& x) {
  Graph g;
  ParamBinder P(g, table, false);
  int n = which == "skc" ? mc.n_s : mc.n_p;
  if (static_cast<int>(x.size()) != n)
    throw ContractError("encode_vector: input dim " + std::to_string(x.size()) + ", expected " +
                        std::to_string(n));
  auto xin = g.input("x", {1, n});
  auto out = encode_vector_g(g, P, mc, which, xin);
  g.mark_output("tot", out.tot);
  Bindings b = as_bindings(table);
  b["x"] = Tensor::matrix(1, n, std::vector<double>(x));
  return g.evaluate(b)["tot"];
}

inline Tensor encode_text(const ParamTable& table, const ModelConfig& mc,
                          const std::vector<int>& tokens) {
  Graph g;
  ParamBinder P(g, table, false);
  auto out = encode_text_g(g, P, mc, {tokens});
  g.mark_output("tot", out.tot);
  return g.evaluate(as_bindings(table))["tot"];
}

}  // namespace trimodal::model

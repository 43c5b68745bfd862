#pragma once

// Observation decoders driven by the total embedding z_tot.
//
// Vector modalities use a two-layer perceptron; reconstruction loss is
// 0.5 * ||x - x_hat||^2 / n per record, averaged over the batch.
//
// Captions use a gated recurrent cell whose input at step t is the previous
// token's embedding concatenated with z_tot (BOS starts the sequence).
// Teacher-forced NLL runs exactly text_len steps over the data tokens; EOS
// is part of the output vocabulary but never supervised. Greedy decoding
// takes the argmax each step (ties to the lowest token id) until EOS or a
// length cap.

#include <string>
#include <vector>

#include "trimodal/encoders.hpp"
#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

inline Value decode_vector_g(Graph& g, ParamBinder& P, const std::string& which, Value z_tot) {
  g.set_scope("dec." + which);
  std::string p = "dec." + which;
  auto h = tanh(matmul(z_tot, P(p + ".w1")) + P(p + ".b1"));
  auto out = matmul(h, P(p + ".w2")) + P(p + ".b2");
  g.set_scope("");
  return out;
}

inline Value recon_loss_g(Graph& g, ParamBinder& P, const std::string& which, Value x,
                          Value z_tot) {
  auto xhat = decode_vector_g(g, P, which, z_tot);
  const auto& xs = g.shape(x);
  if (xs != g.shape(xhat))
    throw ShapeError("recon_loss: target shape " + shape_str(xs) + " vs prediction " +
                     shape_str(g.shape(xhat)));
  int batch = xs[0], n = xs[1];
  return scale(sum(square(x - xhat)), 0.5 / (static_cast<double>(batch) * n));
}

// Teacher-forced caption NLL: per-record sum over text_len steps, batch mean.
inline Value caption_nll_g(Graph& g, ParamBinder& P, const ModelConfig& mc,
                           const std::vector<std::vector<int>>& tokens, Value z_tot) {
  int batch = static_cast<int>(tokens.size());
  if (batch == 0) throw ContractError("caption_nll: empty batch");
  for (const auto& seq : tokens) {
    if (static_cast<int>(seq.size()) != mc.text_len)
      throw ContractError("caption_nll: sequence length " + std::to_string(seq.size()) +
                          ", expected " + std::to_string(mc.text_len));
    for (int id : seq)
      if (id < 0 || id >= mc.vocab)
        throw FormatError(FormatError::Kind::InvalidData,
                          "caption_nll: token " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(mc.vocab));
  }
  if (g.shape(z_tot) != std::vector<int>{batch, mc.c})
    throw ShapeError("caption_nll: z_tot shape " + shape_str(g.shape(z_tot)));

  g.set_scope("dec.txt");
  const int hd = mc.dec_text_hidden, vt = mc.vocab_total();
  auto emb = P("dec.txt.emb");
  Value h = g.constant_zeros({batch, hd});
  Value nll;
  for (int t = 0; t < mc.text_len; ++t) {
    std::vector<int> prev(static_cast<std::size_t>(batch)), cur(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      prev[static_cast<std::size_t>(i)] =
          t == 0 ? mc.bos() : tokens[static_cast<std::size_t>(i)][static_cast<std::size_t>(t - 1)];
      cur[static_cast<std::size_t>(i)] = tokens[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    }
    auto xin = concat(matmul(detail::one_hot_const(g, prev, vt, "caption_nll"), emb), z_tot, 1);
    h = detail::gru_cell(g, P, "dec.txt", xin, h, hd);
    auto logits = matmul(h, P("dec.txt.out.w")) + P("dec.txt.out.b");  // B x vt
    auto lse = sum(logsumexp_rows(logits));
    auto tgt = sum(logits * detail::one_hot_const(g, cur, vt, "caption_nll"));
    auto step = lse - tgt;
    nll = t == 0 ? step : nll + step;
  }
  g.set_scope("");
  return scale(nll, 1.0 / batch);
}

// Greedy decoding with a reusable one-step graph; returns data-token ids
// (BOS is implicit, a produced EOS terminates and is dropped).
inline std::vector<int> greedy_decode(const ParamTable& table, const ModelConfig& mc,
                                      const std::vector<double>& z_tot, int max_len) {
  if (static_cast<int>(z_tot.size()) != mc.c)
    throw ContractError("greedy_decode: z_tot dim " + std::to_string(z_tot.size()) +
                        ", expected " + std::to_string(mc.c));
  if (max_len < 0) throw ContractError("greedy_decode: negative max_len");
  const int hd = mc.dec_text_hidden, vt = mc.vocab_total();

  Graph g;
  ParamBinder P(g, table, false);
  auto prev = g.input("prev", {1, vt});
  auto hin = g.input("h", {1, hd});
  auto z = g.constant(Tensor::matrix(1, mc.c, std::vector<double>(z_tot)));
  auto xin = concat(matmul(prev, P("dec.txt.emb")), z, 1);
  auto hout = detail::gru_cell(g, P, "dec.txt", xin, hin, hd);
  g.mark_output("h", hout);
  g.mark_output("logits", matmul(hout, P("dec.txt.out.w")) + P("dec.txt.out.b"));

  Bindings b = as_bindings(table);
  Tensor hcur = Tensor::zeros({1, hd});
  int tok = mc.bos();
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    Tensor oh = Tensor::zeros({1, vt});
    oh.at(0, tok) = 1.0;
    b["prev"] = std::move(oh);
    b["h"] = hcur;
    auto res = g.evaluate(b);
    hcur = res["h"];
    const auto& logits = res["logits"].data;
    int best = 0;
    for (int i = 1; i < vt; ++i)
      if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
    if (best == mc.eos()) break;
    out.push_back(best);
    tok = best;
  }
  return out;
}

}  // namespace trimodal::model

#pragma once

// Bilinear alignment critic and the in-batch contrastive loss.
//
// Pair score (log space): log f(i, j) = z_p_j^T W z_eta_i. The loss treats
// row i's diagonal entry as the positive against all B photo candidates:
//   L = mean_i [ logsumexp_j N[i,j] - N[i,i] ]
// computed entirely in log space; exp(huge) never appears.

#include <cmath>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

// B x B logit matrix, N[i,j] = z_p_j^T W z_eta_i.
inline Value pair_logits_g(Graph& g, ParamBinder& P, Value z_eta, Value z_p) {
  if (g.shape(z_eta) != g.shape(z_p))
    throw ShapeError("pair_logits: query batch " + shape_str(g.shape(z_eta)) +
                     " vs photo batch " + shape_str(g.shape(z_p)));
  auto wq = matmul(z_eta, P("align.w"), false, true);  // rows are (W z_eta_i)^T
  return matmul(wq, z_p, false, true);
}

// Contrastive loss over a precomputed square logit matrix.
inline Value infonce_from_logits_g(Graph& g, Value logits, int batch) {
  if (g.shape(logits) != std::vector<int>{batch, batch})
    throw ShapeError("infonce: logits shape " + shape_str(g.shape(logits)) + ", expected [" +
                     std::to_string(batch) + "," + std::to_string(batch) + "]");
  Tensor eye = Tensor::zeros({batch, batch});
  for (int i = 0; i < batch; ++i) eye.at(i, i) = 1.0;
  auto pos = sum(logits * g.constant(std::move(eye)));
  return mean(logsumexp_rows(logits)) - scale(pos, 1.0 / batch);
}

inline Value infonce_g(Graph& g, ParamBinder& P, Value z_eta, Value z_p, int batch) {
  g.set_scope("align");
  auto loss = infonce_from_logits_g(g, pair_logits_g(g, P, z_eta, z_p), batch);
  g.set_scope("");
  return loss;
}

// Alignment ablation: mean squared distance between query and photo
// embeddings, averaged over records and coordinates.
inline Value align_mse_g(Graph& g, Value z_eta, Value z_p, int batch, int d) {
  if (g.shape(z_eta) != std::vector<int>{batch, d} || g.shape(z_p) != std::vector<int>{batch, d})
    throw ShapeError("align_mse: embeddings " + shape_str(g.shape(z_eta)) + " and " +
                     shape_str(g.shape(z_p)) + ", expected [" + std::to_string(batch) + "," +
                     std::to_string(d) + "]");
  return scale(sum(square(z_eta - z_p)), 1.0 / (static_cast<double>(batch) * d));
}

// Plain scalar critic (log space and linear space).
inline double log_align_score(const ParamTable& t, const std::vector<double>& z_eta,
                              const std::vector<double>& z_p) {
  const Tensor& w = t.at("align.w");
  int d = w.shape[0];
  if (static_cast<int>(z_eta.size()) != d || static_cast<int>(z_p.size()) != d)
    throw ContractError("log_align_score: embedding dims do not match critic");
  double s = 0.0;
  for (int a = 0; a < d; ++a) {
    if (z_p[static_cast<std::size_t>(a)] == 0.0) continue;
    double row = 0.0;
    for (int b = 0; b < d; ++b) row += w.at(a, b) * z_eta[static_cast<std::size_t>(b)];
    s += z_p[static_cast<std::size_t>(a)] * row;
  }
  return s;
}

inline double align_score(const ParamTable& t, const std::vector<double>& z_eta,
                          const std::vector<double>& z_p) {
  return std::exp(log_align_score(t, z_eta, z_p));
}

}  // namespace trimodal::model

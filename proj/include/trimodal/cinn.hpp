#pragma once

// Conditional invertible flow on the modality-specific channel.
//
// Each of `layers` blocks applies, in forward (sampling) order:
//   coupling:  split x into x1 (q1 = q/2) and x2; s,t = nets([x1; alpha]);
//              y2 = x2 * exp(s) + t  with s = tanh(raw) * bound
//   actnorm:   y = x * exp(logscale) + bias   (per channel)
//   switch:    [a; b] -> [b; a]                (fixed rotation, logdet 0)
// The inverse runs blocks and steps in reverse. Conditioning enters only
// through the coupling nets, so both directions share one parameter set.
// With q1 = 0 (one-channel flows) the nets read the condition alone and the
// switch is a no-op.
//
// Two implementations on purpose: graph builders for training and a plain
// loop runtime for data-dependent init, sampling, and cross-checks. Tests
// pin them together element-for-element.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

struct FlowSpec {
  int q = 16;      // transported channel width
  int d = 48;      // conditioning width
  int hidden = 32; // coupling net hidden width
  int layers = 4;

  int q1() const { return q / 2; }
  int q2() const { return q - q1(); }

  static FlowSpec from(const ModelConfig& mc) {
    return {mc.q(), mc.d, mc.flow_hidden, mc.flow_layers};
  }
};

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

// Identity-initialized parameter block for one flow. Matches the naming laid
// down by init_params, which tests rely on for standalone specs.
inline void append_flow_params(ParamTable& t, const std::string& pfx, const FlowSpec& fs) {
  for (int l = 0; l < fs.layers; ++l) {
    std::string p = pfx + "." + std::to_string(l);
    t[p + ".an.logscale"] = Tensor::zeros({fs.q}, true);
    t[p + ".an.bias"] = Tensor::zeros({fs.q}, true);
    int cin = fs.q1() + fs.d;
    for (const char* net : {"s", "t"}) {
      std::string np = p + ".cp." + net;
      t[np + ".w1"] = Tensor::zeros({cin, fs.hidden}, true);
      t[np + ".b1"] = Tensor::zeros({fs.hidden}, true);
      t[np + ".w2"] = Tensor::zeros({fs.hidden, fs.q2()}, true);
      t[np + ".b2"] = Tensor::zeros({fs.q2()}, true);
    }
    t[p + ".cp.bound"] = Tensor({1}, {1.0}, true);
  }
}

// Non-trivial parameters for tests: every net weight drawn, nets no longer
// identity, actnorm displaced from 1/0.
inline void randomize_flow_params(ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                                  Rng& rng, double sd = 0.5) {
  append_flow_params(t, pfx, fs);
  for (int l = 0; l < fs.layers; ++l) {
    std::string p = pfx + "." + std::to_string(l);
    for (auto& v : t[p + ".an.logscale"].data) v = 0.3 * rng.normal();
    for (auto& v : t[p + ".an.bias"].data) v = 0.3 * rng.normal();
    for (const char* net : {"s", "t"}) {
      std::string np = p + ".cp." + net;
      for (const char* w : {".w1", ".b1", ".w2", ".b2"}) {
        Tensor& ten = t[np + w];
        double scale = sd / std::sqrt(static_cast<double>(ten.shape[0]));
        for (auto& v : ten.data) v = scale * rng.normal();
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Graph builders (batched).

struct FlowOut {
  Value z;       // B x q
  Value logdet;  // scalar, summed over the batch
};

namespace detail {

// s (bounded) and t for one coupling, given net input rows.
inline std::pair<Value, Value> coupling_nets_g(ParamBinder& P, const std::string& p,
                                               Value sin) {
  auto mlp = [&](const std::string& np) {
    auto h = tanh(matmul(sin, P(np + ".w1")) + P(np + ".b1"));
    return matmul(h, P(np + ".w2")) + P(np + ".b2");
  };
  auto bound = P(p + ".bound");
  auto s = tanh(mlp(p + ".s")) * bound;
  auto t = mlp(p + ".t");
  return {s, t};
}

}  // namespace detail

inline FlowOut flow_forward_g(Graph& g, ParamBinder& P, const std::string& pfx,
                              const FlowSpec& fs, Value x, Value alpha) {
  int batch = g.shape(x)[0];
  Value ld = g.constant_scalar(0.0);
  for (int l = 0; l < fs.layers; ++l) {
    std::string p = pfx + "." + std::to_string(l);
    g.set_scope(p);
    Value x2 = fs.q1() > 0 ? slice(x, 1, fs.q1(), fs.q2()) : x;
    Value sin = alpha;
    Value x1;
    if (fs.q1() > 0) {
      x1 = slice(x, 1, 0, fs.q1());
      sin = concat(x1, alpha, 1);
    }
    auto [s, t] = detail::coupling_nets_g(P, p + ".cp", sin);
    Value y2 = x2 * exp(s) + t;
    x = fs.q1() > 0 ? concat(x1, y2, 1) : y2;
    ld = ld + sum(s);

    auto ls = P(p + ".an.logscale");
    x = x * exp(ls) + P(p + ".an.bias");
    ld = ld + scale(sum(ls), static_cast<double>(batch));

    if (fs.q1() > 0) x = concat(slice(x, 1, fs.q1(), fs.q2()), slice(x, 1, 0, fs.q1()), 1);
  }
  g.set_scope("");
  return {x, ld};
}

inline FlowOut flow_inverse_g(Graph& g, ParamBinder& P, const std::string& pfx,
                              const FlowSpec& fs, Value y, Value alpha) {
  int batch = g.shape(y)[0];
  Value ld = g.constant_scalar(0.0);
  for (int l = fs.layers - 1; l >= 0; --l) {
    std::string p = pfx + "." + std::to_string(l);
    g.set_scope(p);
    if (fs.q1() > 0) y = concat(slice(y, 1, fs.q2(), fs.q1()), slice(y, 1, 0, fs.q2()), 1);

    auto ls = P(p + ".an.logscale");
    y = (y - P(p + ".an.bias")) * exp(scale(ls, -1.0));
    ld = ld + scale(sum(ls), -static_cast<double>(batch));

    Value y2 = fs.q1() > 0 ? slice(y, 1, fs.q1(), fs.q2()) : y;
    Value sin = alpha;
    Value y1;
    if (fs.q1() > 0) {
      y1 = slice(y, 1, 0, fs.q1());
      sin = concat(y1, alpha, 1);
    }
    auto [s, t] = detail::coupling_nets_g(P, p + ".cp", sin);
    Value x2 = (y2 - t) * exp(scale(s, -1.0));
    y = fs.q1() > 0 ? concat(y1, x2, 1) : x2;
    ld = ld + scale(sum(s), -1.0);
  }
  g.set_scope("");
  return {y, ld};
}

// Batch-mean negative log density of w under the flow-transported standard
// normal: 0.5||eps||^2 + (q/2) log 2pi - logdet(d eps / d w), eps = inverse(w).
inline Value flow_nll_g(Graph& g, ParamBinder& P, const std::string& pfx, const FlowSpec& fs,
                        Value w, Value alpha) {
  int batch = g.shape(w)[0];
  FlowOut inv = flow_inverse_g(g, P, pfx, fs, w, alpha);
  auto nll = scale(sum(square(inv.z)), 0.5 / batch) +
             g.constant_scalar(fs.q * kHalfLog2Pi) + scale(inv.logdet, -1.0 / batch);
  return nll;
}

// ---------------------------------------------------------------------------
// Plain runtime (single record).

namespace flowrt {

struct Result {
  std::vector<double> z;
  double logdet = 0.0;
};

namespace detail {

inline void mlp2(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                 const std::vector<double>& in, std::vector<double>& out) {
  int h = w1.shape[1], outn = w2.shape[1];
  std::vector<double> hid(static_cast<std::size_t>(h));
  for (int j = 0; j < h; ++j) {
    double s = b1.at(j);
    for (int i = 0; i < w1.shape[0]; ++i) s += in[static_cast<std::size_t>(i)] * w1.at(i, j);
    hid[static_cast<std::size_t>(j)] = std::tanh(s);
  }
  out.assign(static_cast<std::size_t>(outn), 0.0);
  for (int j = 0; j < outn; ++j) {
    double s = b2.at(j);
    for (int i = 0; i < h; ++i) s += hid[static_cast<std::size_t>(i)] * w2.at(i, j);
    out[static_cast<std::size_t>(j)] = s;
  }
}

inline void coupling_nets(const ParamTable& t, const std::string& p, const FlowSpec& fs,
                          const double* x1, const std::vector<double>& alpha,
                          std::vector<double>& s, std::vector<double>& tv) {
  std::vector<double> in;
  in.reserve(static_cast<std::size_t>(fs.q1() + fs.d));
  for (int i = 0; i < fs.q1(); ++i) in.push_back(x1[i]);
  in.insert(in.end(), alpha.begin(), alpha.end());
  mlp2(t.at(p + ".s.w1"), t.at(p + ".s.b1"), t.at(p + ".s.w2"), t.at(p + ".s.b2"), in, s);
  double bound = t.at(p + ".bound").data[0];
  for (auto& v : s) v = std::tanh(v) * bound;
  mlp2(t.at(p + ".t.w1"), t.at(p + ".t.b1"), t.at(p + ".t.w2"), t.at(p + ".t.b2"), in, tv);
}

}  // namespace detail

inline Result forward(const ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                      std::vector<double> x, const std::vector<double>& alpha) {
  if (static_cast<int>(x.size()) != fs.q || static_cast<int>(alpha.size()) != fs.d)
    throw ContractError("flow forward: input dims do not match spec");
  Result r;
  std::vector<double> s, tv;
  for (int l = 0; l < fs.layers; ++l) {
    std::string p = pfx + "." + std::to_string(l);
    detail::coupling_nets(t, p + ".cp", fs, x.data(), alpha, s, tv);
    for (int i = 0; i < fs.q2(); ++i) {
      x[static_cast<std::size_t>(fs.q1() + i)] =
          x[static_cast<std::size_t>(fs.q1() + i)] * std::exp(s[static_cast<std::size_t>(i)]) +
          tv[static_cast<std::size_t>(i)];
      r.logdet += s[static_cast<std::size_t>(i)];
    }
    const Tensor& ls = t.at(p + ".an.logscale");
    const Tensor& ab = t.at(p + ".an.bias");
    for (int i = 0; i < fs.q; ++i) {
      x[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] * std::exp(ls.at(i)) + ab.at(i);
      r.logdet += ls.at(i);
    }
    if (fs.q1() > 0) std::rotate(x.begin(), x.begin() + fs.q1(), x.end());
  }
  r.z = std::move(x);
  return r;
}

inline Result inverse(const ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                      std::vector<double> y, const std::vector<double>& alpha) {
  if (static_cast<int>(y.size()) != fs.q || static_cast<int>(alpha.size()) != fs.d)
    throw ContractError("flow inverse: input dims do not match spec");
  Result r;
  std::vector<double> s, tv;
  for (int l = fs.layers - 1; l >= 0; --l) {
    std::string p = pfx + "." + std::to_string(l);
    if (fs.q1() > 0) std::rotate(y.begin(), y.begin() + fs.q2(), y.end());
    const Tensor& ls = t.at(p + ".an.logscale");
    const Tensor& ab = t.at(p + ".an.bias");
    for (int i = 0; i < fs.q; ++i) {
      y[static_cast<std::size_t>(i)] = (y[static_cast<std::size_t>(i)] - ab.at(i)) * std::exp(-ls.at(i));
      r.logdet -= ls.at(i);
    }
    detail::coupling_nets(t, p + ".cp", fs, y.data(), alpha, s, tv);
    for (int i = 0; i < fs.q2(); ++i) {
      y[static_cast<std::size_t>(fs.q1() + i)] =
          (y[static_cast<std::size_t>(fs.q1() + i)] - tv[static_cast<std::size_t>(i)]) *
          std::exp(-s[static_cast<std::size_t>(i)]);
      r.logdet -= s[static_cast<std::size_t>(i)];
    }
  }
  r.z = std::move(y);
  return r;
}

inline double nll(const ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                  const std::vector<double>& w, const std::vector<double>& alpha) {
  Result inv = inverse(t, pfx, fs, w, alpha);
  double sq = 0.0;
  for (double v : inv.z) {
    if (!std::isfinite(v)) throw NumericError(pfx + ": non-finite inverse output");
    sq += v * v;
  }
  return 0.5 * sq + fs.q * kHalfLog2Pi - inv.logdet;
}

// Draws eps ~ N(0, I_q) and transports it for the given condition.
inline std::vector<double> sample(const ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                                  const std::vector<double>& alpha, Rng& rng) {
  std::vector<double> eps(static_cast<std::size_t>(fs.q));
  for (auto& v : eps) v = rng.normal();
  return forward(t, pfx, fs, std::move(eps), alpha).z;
}

}  // namespace flowrt

// Data-dependent actnorm init, measured in the inverse direction: walking
// blocks from last to first, each actnorm is set so the activations it emits
// on this batch have zero mean and unit variance per channel (std clamped
// below by min_std). Mutates the table in place.
inline void actnorm_init(ParamTable& t, const std::string& pfx, const FlowSpec& fs,
                         const std::vector<std::vector<double>>& w_batch,
                         const std::vector<std::vector<double>>& alpha_batch,
                         double min_std = 1e-3) {
  if (w_batch.empty() || w_batch.size() != alpha_batch.size())
    throw ContractError("actnorm_init: batch empty or sizes disagree");
  std::vector<std::vector<double>> y = w_batch;
  std::size_t n = y.size();
  std::vector<double> s, tv;
  for (int l = fs.layers - 1; l >= 0; --l) {
    std::string p = pfx + "." + std::to_string(l);
    if (fs.q1() > 0)
      for (auto& row : y) std::rotate(row.begin(), row.begin() + fs.q2(), row.end());

    Tensor& ls = t.at(p + ".an.logscale");
    Tensor& ab = t.at(p + ".an.bias");
    for (int i = 0; i < fs.q; ++i) {
      double mu = 0.0;
      for (const auto& row : y) mu += row[static_cast<std::size_t>(i)];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (const auto& row : y) {
        double dv = row[static_cast<std::size_t>(i)] - mu;
        var += dv * dv;
      }
      double sd = std::sqrt(var / static_cast<double>(n));
      if (sd < min_std) sd = min_std;
      ab.at(i) = mu;
      ls.at(i) = std::log(sd);
    }
    for (auto& row : y)
      for (int i = 0; i < fs.q; ++i)
        row[static_cast<std::size_t>(i)] = (row[static_cast<std::size_t>(i)] - ab.at(i)) * std::exp(-ls.at(i));

    for (std::size_t r = 0; r < n; ++r) {
      flowrt::detail::coupling_nets(t, p + ".cp", fs, y[r].data(), alpha_batch[r], s, tv);
      for (int i = 0; i < fs.q2(); ++i)
        y[r][static_cast<std::size_t>(fs.q1() + i)] =
            (y[r][static_cast<std::size_t>(fs.q1() + i)] - tv[static_cast<std::size_t>(i)]) *
            std::exp(-s[static_cast<std::size_t>(i)]);
    }
  }
}

}  // namespace trimodal::model

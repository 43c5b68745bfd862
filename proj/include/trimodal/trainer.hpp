#pragma once

// Joint training: total objective assembly, Adam with global-norm clipping,
// deterministic epoch shuffling, and checkpoint persistence.
//
// The total loss is w_rec * (sketch + photo + caption reconstruction)
//                 + w_flow * (three per-modality flow NLLs)
//                 + w_nce * (contrastive or mean-squared alignment).
// Each step samples which query modalities feed the attention pooling, so a
// single model serves sketch-only, text-only, and combined retrieval.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "trimodal/align.hpp"
#include "trimodal/cinn.hpp"
#include "trimodal/decoders.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/errors.hpp"
#include "trimodal/fusion.hpp"
#include "trimodal/io.hpp"
#include "trimodal/params.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/synthdata.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

// =========================================================================
// Configuration
// =========================================================================

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  int batch = 16;
  int steps = 2000;
  std::uint64_t seed = 1;
  double w_rec = 1.0;
  double w_flow = 1.0;
  double w_nce = 1.0;
  double clip_norm = 5.0;            // global gradient norm cap
  std::string align_mode = "nce";    // "nce" | "mse"
  std::string query_policy = "mix";  // "mix" (uniform over s/t/st) | "s" | "t" | "st"

  void validate() const {
    model.validate();
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    auto wt = [](double w, const char* name) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw ConfigError(std::string(name) + " must be finite and >= 0");
    };
    wt(w_rec, "w_rec");
    wt(w_flow, "w_flow");
    wt(w_nce, "w_nce");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (align_mode != "nce" && align_mode != "mse")
      throw ConfigError("align_mode must be 'nce' or 'mse', got '" + align_mode + "'");
    if (query_policy != "mix" && query_policy != "s" && query_policy != "t" &&
        query_policy != "st")
      throw ConfigError("query_policy must be one of mix/s/t/st, got '" + query_policy + "'");
  }

  bool operator==(const TrainConfig&) const = default;
};

// =========================================================================
// Objective graph
// =========================================================================

struct LossTerms {
  Value tot, rec, flow_s, flow_t, flow_p, nce;
};

// Builds the full objective for one batch. `mode` ("s"/"t"/"st") picks which
// modality-agnostic vectors the query pooling sees; the photo side is always
// the alignment target.
inline LossTerms total_loss_g(Graph& g, ParamBinder& P, const TrainConfig& tc,
                              Value xs, Value xp,
                              const std::vector<std::vector<int>>& tokens,
                              const std::string& mode) {
  const ModelConfig& mc = tc.model;
  int batch = static_cast<int>(tokens.size());
  if (batch == 0) throw ContractError("total_loss: empty batch");
  if (g.shape(xs) != std::vector<int>{batch, mc.n_s} ||
      g.shape(xp) != std::vector<int>{batch, mc.n_p})
    throw ContractError("total_loss: modality batches misaligned (sketch " +
                        shape_str(g.shape(xs)) + ", photo " + shape_str(g.shape(xp)) +
                        ", text rows " + std::to_string(batch) + ")");
  if (mode != "s" && mode != "t" && mode != "st")
    throw ContractError("total_loss: mode must be s/t/st, got '" + mode + "'");

  auto zs = encode_vector_g(g, P, mc, "skc", xs);
  auto zp = encode_vector_g(g, P, mc, "pho", xp);
  auto zt = encode_text_g(g, P, mc, tokens);

  LossTerms t;
  t.rec = recon_loss_g(g, P, "skc", xs, zs.tot) + recon_loss_g(g, P, "pho", xp, zp.tot) +
          caption_nll_g(g, P, mc, tokens, zt.tot);

  FlowSpec fs = FlowSpec::from(mc);
  t.flow_s = flow_nll_g(g, P, "flow.S", fs, zs.beta, zs.alpha);
  t.flow_t = flow_nll_g(g, P, "flow.T", fs, zt.beta, zt.alpha);
  t.flow_p = flow_nll_g(g, P, "flow.P", fs, zp.beta, zp.alpha);

  std::vector<Value> query;
  if (mode == "s" || mode == "st") query.push_back(zs.alpha);
  if (mode == "t" || mode == "st") query.push_back(zt.alpha);
  auto eta = pool_set_g(g, P, mc, query);
  t.nce = tc.align_mode == "nce" ? infonce_g(g, P, eta, zp.alpha, batch)
                                 : align_mse_g(g, eta, zp.alpha, batch, mc.d);

  t.tot = scale(t.rec, tc.w_rec) + scale(t.flow_s + t.flow_t + t.flow_p, tc.w_flow) +
          scale(t.nce, tc.w_nce);
  return t;
}

// =========================================================================
// Optimizer
// =========================================================================

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::int64_t t = 0;
};

// Scales all gradients by clip/norm when the global norm exceeds clip.
// Returns the pre-clip norm.
inline double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, gt] : grads)
    for (double v : gt.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& [name, gt] : grads)
      for (double& v : gt.data) v *= s;
  }
  return norm;
}

// Bias-corrected Adam over the named parameters. Parameters without a
// gradient entry are left untouched (and consume no state), so a stage that
// trains a subset of the model updates exactly that subset.
inline void adam_step(ParamTable& params, const std::map<std::string, Tensor>& grads,
                      AdamState& st, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  st.t += 1;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& gt = git->second;
    if (gt.shape != p.shape)
      throw ContractError("adam_step: gradient shape mismatch for '" + name + "'");
    Tensor& m = st.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = st.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      double gi = gt.data[i];
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
      double mhat = m.data[i] / c1;
      double vhat = v.data[i] / c2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// =========================================================================
// Training loop
// =========================================================================

struct StepMetrics {
  int step = 0;  // 1-based
  double l_tot = 0, l_rec = 0, l_flow_s = 0, l_flow_t = 0, l_flow_p = 0, l_nce = 0;
};

inline void write_metrics_line(std::ostream& os, const StepMetrics& m) {
  os << m.step << '\t' << m.l_tot << '\t' << m.l_rec << '\t' << m.l_flow_s << '\t' << m.l_flow_t
     << '\t' << m.l_flow_p << '\t' << m.l_nce << '\n';
}

struct TrainResult {
  TrainConfig config;
  ParamTable params;
  int step = 0;
  bool actnorm_ready = false;
  std::vector<StepMetrics> metrics;
};

namespace detail {

// Trainer RNG stream kept distinct from the parameter-init stream.
inline constexpr std::uint64_t kTrainStream = 0x9E3779B97F4A7C15ULL;

inline void check_dataset_matches(const synth::TripletDataset& ds, const ModelConfig& mc) {
  const synth::GenConfig& gc = ds.cfg;
  auto want = [](int got, int need, const char* name) {
    if (got != need)
      throw ConfigError(std::string("dataset ") + name + " is " + std::to_string(got) +
                        " but the model expects " + std::to_string(need));
  };
  want(gc.n_s, mc.n_s, "sketch dim");
  want(gc.n_p, mc.n_p, "photo dim");
  want(gc.text_len, mc.text_len, "text length");
  want(gc.vocab, mc.vocab, "vocabulary");
}

// Replaces freshly initialized parameters with `init` after checking that the
// table carries exactly the names and shapes the configured model expects.
inline void apply_init(ParamTable& params, const ParamTable* init) {
  if (!init) return;
  if (init->size() != params.size())
    throw ConfigError("initial parameter table does not match the model configuration");
  for (const auto& [k, v] : params) {
    auto it = init->find(k);
    if (it == init->end() || it->second.shape != v.shape)
      throw ConfigError("initial parameter table does not match the model configuration ('" +
                        k + "')");
  }
  params = *init;
}

// Next batch of record indices; reshuffles at epoch boundaries and drops the
// remainder, so every step sees a full batch.
inline std::vector<int> next_batch(std::vector<int>& order, std::size_t& pos, int n, int batch,
                                   Rng& rng) {
  if (order.empty() || pos + static_cast<std::size_t>(batch) > order.size()) {
    order.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    pos = 0;
  }
  std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos) + batch);
  pos += static_cast<std::size_t>(batch);
  return idx;
}

struct BatchData {
  Tensor xs, xp;
  std::vector<std::vector<int>> tokens;
};

inline BatchData gather_batch(const synth::TripletDataset& ds, const std::vector<int>& idx,
                              const ModelConfig& mc) {
  int b = static_cast<int>(idx.size());
  BatchData out;
  out.xs = Tensor::zeros({b, mc.n_s});
  out.xp = Tensor::zeros({b, mc.n_p});
  out.tokens.reserve(idx.size());
  for (int r = 0; r < b; ++r) {
    auto srow = ds.sketch_row(idx[static_cast<std::size_t>(r)]);
    auto prow = ds.photo_row(idx[static_cast<std::size_t>(r)]);
    for (int j = 0; j < mc.n_s; ++j) out.xs.at(r, j) = srow[static_cast<std::size_t>(j)];
    for (int j = 0; j < mc.n_p; ++j) out.xp.at(r, j) = prow[static_cast<std::size_t>(j)];
    out.tokens.push_back(ds.tokens(idx[static_cast<std::size_t>(r)]));
  }
  return out;
}

// Encodes one batch and hands each modality's (specific, agnostic) rows to
// the data-dependent actnorm initializer.
inline void init_actnorm_from_batch(ParamTable& params, const ModelConfig& mc,
                                    const BatchData& bd) {
  Graph g;
  ParamBinder P(g, params, false);
  auto xs = g.input("xs", {static_cast<int>(bd.tokens.size()), mc.n_s});
  auto xp = g.input("xp", {static_cast<int>(bd.tokens.size()), mc.n_p});
  auto zs = encode_vector_g(g, P, mc, "skc", xs);
  auto zp = encode_vector_g(g, P, mc, "pho", xp);
  auto zt = encode_text_g(g, P, mc, bd.tokens);
  g.mark_output("sa", zs.alpha);
  g.mark_output("sb", zs.beta);
  g.mark_output("ta", zt.alpha);
  g.mark_output("tb", zt.beta);
  g.mark_output("pa", zp.alpha);
  g.mark_output("pb", zp.beta);
  Bindings b = as_bindings(params);
  b["xs"] = bd.xs;
  b["xp"] = bd.xp;
  auto res = g.evaluate(b);

  auto rows = [](const Tensor& t) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(t.shape[0]));
    for (int r = 0; r < t.shape[0]; ++r) {
      out[static_cast<std::size_t>(r)].assign(t.data.begin() + static_cast<std::ptrdiff_t>(r) * t.shape[1],
                                              t.data.begin() + static_cast<std::ptrdiff_t>(r + 1) * t.shape[1]);
    }
    return out;
  };
  FlowSpec fs = FlowSpec::from(mc);
  actnorm_init(params, "flow.S", fs, rows(res["sb"]), rows(res["sa"]));
  actnorm_init(params, "flow.T", fs, rows(res["tb"]), rows(res["ta"]));
  actnorm_init(params, "flow.P", fs, rows(res["pb"]), rows(res["pa"]));
}

inline void check_term_finite(double v, const char* name, int step) {
  if (!std::isfinite(v))
    throw NumericError("training step " + std::to_string(step) + ": " + name +
                       " is not finite");
}

}  // namespace detail

// Trains from scratch, or from `init` when given (shapes/names must match the
// configured model). `init_actnorm` says whether `init` already carries
// data-initialized actnorm parameters; when true the step-1 actnorm
// initialization is skipped so the warm start resumes instead of resetting
// the flow scales. Metrics go to `metrics_os` when non-null, one line per
// step: step, L_tot, L_rec, L_flowS, L_flowT, L_flowP, L_nce, tab-separated.
inline TrainResult train(const synth::TripletDataset& ds, const TrainConfig& tc,
                         std::ostream* metrics_os = nullptr,
                         const ParamTable* init = nullptr, bool init_actnorm = false) {
  tc.validate();
  detail::check_dataset_matches(ds, tc.model);
  if (tc.batch > ds.cfg.records)
    throw ConfigError("batch " + std::to_string(tc.batch) + " exceeds dataset size " +
                      std::to_string(ds.cfg.records));

  TrainResult r;
  r.config = tc;
  r.params = init_params(tc.model, tc.seed);
  detail::apply_init(r.params, init);
  r.actnorm_ready = init != nullptr && init_actnorm;

  Rng rng(tc.seed ^ detail::kTrainStream);
  AdamState adam;
  std::vector<int> order;
  std::size_t pos = 0;
  const bool flows_active = tc.model.flow_layers > 0;

  for (int step = 1; step <= tc.steps; ++step) {
    auto idx = detail::next_batch(order, pos, ds.cfg.records, tc.batch, rng);
    auto bd = detail::gather_batch(ds, idx, tc.model);

    std::string mode = tc.query_policy;
    if (mode == "mix") {
      const char* modes[3] = {"s", "t", "st"};
      mode = modes[rng.below(3)];
    }

    if (step == 1 && flows_active && !r.actnorm_ready) {
      detail::init_actnorm_from_batch(r.params, tc.model, bd);
      r.actnorm_ready = true;
    }

    Graph g;
    ParamBinder P(g, r.params, true);
    auto xs = g.input("xs", {tc.batch, tc.model.n_s});
    auto xp = g.input("xp", {tc.batch, tc.model.n_p});
    auto terms = total_loss_g(g, P, tc, xs, xp, bd.tokens, mode);
    g.mark_output("rec", terms.rec);
    g.mark_output("flow_s", terms.flow_s);
    g.mark_output("flow_t", terms.flow_t);
    g.mark_output("flow_p", terms.flow_p);
    g.mark_output("nce", terms.nce);

    Bindings b = as_bindings(r.params);
    b["xs"] = bd.xs;
    b["xp"] = bd.xp;
    Graph::GradientResult res;
    try {
      res = g.gradient(terms.tot, b);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }

    StepMetrics sm;
    sm.step = step;
    sm.l_tot = res.value;
    sm.l_rec = res.outputs.at("rec").data[0];
    sm.l_flow_s = res.outputs.at("flow_s").data[0];
    sm.l_flow_t = res.outputs.at("flow_t").data[0];
    sm.l_flow_p = res.outputs.at("flow_p").data[0];
    sm.l_nce = res.outputs.at("nce").data[0];
    detail::check_term_finite(sm.l_tot, "L_tot", step);
    detail::check_term_finite(sm.l_rec, "L_rec", step);
    detail::check_term_finite(sm.l_flow_s, "L_flowS", step);
    detail::check_term_finite(sm.l_flow_t, "L_flowT", step);
    detail::check_term_finite(sm.l_flow_p, "L_flowP", step);
    detail::check_term_finite(sm.l_nce, "L_nce", step);

    clip_global_norm(res.grads, tc.clip_norm);
    adam_step(r.params, res.grads, adam, tc.lr);

    r.metrics.push_back(sm);
    if (metrics_os) write_metrics_line(*metrics_os, sm);
    r.step = step;
  }
  return r;
}

// Captioning pretrain: photo encoder feeding the text decoder, nothing else.
// Useful as an initialization for the joint stage, or from `init` as a
// caption-only tuning pass after it. Metrics reuse the training format with
// the caption NLL in both L_tot and L_rec.
inline TrainResult pretrain_caption(const synth::TripletDataset& ds, const TrainConfig& tc,
                                    std::ostream* metrics_os = nullptr,
                                    const ParamTable* init = nullptr, bool init_actnorm = false) {
  tc.validate();
  detail::check_dataset_matches(ds, tc.model);
  if (tc.batch > ds.cfg.records)
    throw ConfigError("batch " + std::to_string(tc.batch) + " exceeds dataset size " +
                      std::to_string(ds.cfg.records));

  TrainResult r;
  r.config = tc;
  r.params = init_params(tc.model, tc.seed);
  detail::apply_init(r.params, init);
  r.actnorm_ready = init != nullptr && init_actnorm;
  Rng rng(tc.seed ^ detail::kTrainStream);
  AdamState adam;
  std::vector<int> order;
  std::size_t pos = 0;

  for (int step = 1; step <= tc.steps; ++step) {
    auto idx = detail::next_batch(order, pos, ds.cfg.records, tc.batch, rng);
    auto bd = detail::gather_batch(ds, idx, tc.model);

    Graph g;
    ParamBinder P(g, r.params, true);
    auto xp = g.input("xp", {tc.batch, tc.model.n_p});
    auto zp = encode_vector_g(g, P, tc.model, "pho", xp);
    auto nll = caption_nll_g(g, P, tc.model, bd.tokens, zp.tot);

    Bindings b = as_bindings(r.params);
    b["xp"] = bd.xp;
    Graph::GradientResult res;
    try {
      res = g.gradient(nll, b);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }
    detail::check_term_finite(res.value, "L_caption", step);

    clip_global_norm(res.grads, tc.clip_norm);
    adam_step(r.params, res.grads, adam, tc.lr);

    StepMetrics sm;
    sm.step = step;
    sm.l_tot = res.value;
    sm.l_rec = res.value;
    r.metrics.push_back(sm);
    if (metrics_os) write_metrics_line(*metrics_os, sm);
    r.step = step;
  }
  return r;
}

// =========================================================================
// Checkpoints
// =========================================================================

inline constexpr char kCkptMagic[] = "STCK";
inline constexpr std::uint32_t kCkptVersion = 1;

struct Checkpoint {
  TrainConfig config;
  int step = 0;
  bool actnorm_ready = false;
  ParamTable params;
};

namespace detail {

inline void write_train_config(std::ostream& os, const TrainConfig& tc) {
  const ModelConfig& m = tc.model;
  for (int v : {m.n_s, m.n_p, m.text_len, m.vocab, m.c, m.d, m.embed, m.enc_hidden,
                m.text_hidden, m.dec_hidden, m.dec_text_hidden, m.flow_layers, m.flow_hidden,
                m.heads})
    io::write_u32(os, static_cast<std::uint32_t>(v));
  io::write_f64(os, tc.lr);
  io::write_u32(os, static_cast<std::uint32_t>(tc.batch));
  io::write_u32(os, static_cast<std::uint32_t>(tc.steps));
  io::write_u64(os, tc.seed);
  io::write_f64(os, tc.w_rec);
  io::write_f64(os, tc.w_flow);
  io::write_f64(os, tc.w_nce);
  io::write_f64(os, tc.clip_norm);
  io::write_string(os, tc.align_mode);
  io::write_string(os, tc.query_policy);
}

inline TrainConfig read_train_config(std::istream& is) {
  TrainConfig tc;
  ModelConfig& m = tc.model;
  int* fields[] = {&m.n_s, &m.n_p, &m.text_len, &m.vocab, &m.c, &m.d, &m.embed, &m.enc_hidden,
                   &m.text_hidden, &m.dec_hidden, &m.dec_text_hidden, &m.flow_layers,
                   &m.flow_hidden, &m.heads};
  for (int* f : fields) *f = static_cast<int>(io::read_u32(is, "checkpoint model config"));
  tc.lr = io::read_f64(is, "checkpoint lr");
  tc.batch = static_cast<int>(io::read_u32(is, "checkpoint batch"));
  tc.steps = static_cast<int>(io::read_u32(is, "checkpoint steps"));
  tc.seed = io::read_u64(is, "checkpoint seed");
  tc.w_rec = io::read_f64(is, "checkpoint w_rec");
  tc.w_flow = io::read_f64(is, "checkpoint w_flow");
  tc.w_nce = io::read_f64(is, "checkpoint w_nce");
  tc.clip_norm = io::read_f64(is, "checkpoint clip_norm");
  tc.align_mode = io::read_string(is, "checkpoint align_mode");
  tc.query_policy = io::read_string(is, "checkpoint query_policy");
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::InvalidData,
                      std::string("checkpoint carries an invalid configuration: ") + e.what());
  }
  return tc;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  io::write_tag(os, kCkptMagic);
  io::write_u32(os, kCkptVersion);

  std::ostringstream conf;
  detail::write_train_config(conf, ck.config);
  std::string conf_s = conf.str();
  io::write_section_header(os, "CONF", conf_s.size());
  io::write_bytes(os, conf_s.data(), conf_s.size());

  io::write_section_header(os, "STAT", 5);
  io::write_u32(os, static_cast<std::uint32_t>(ck.step));
  io::write_u8(os, ck.actnorm_ready ? 1 : 0);

  std::ostringstream parm;
  io::write_u64(parm, ck.params.size());
  for (const auto& [name, t] : ck.params) {
    io::write_string(parm, name);
    io::write_u32(parm, static_cast<std::uint32_t>(t.shape.size()));
    for (int dim : t.shape) io::write_u32(parm, static_cast<std::uint32_t>(dim));
    io::write_f64_vec(parm, t.data);
  }
  std::string parm_s = parm.str();
  io::write_section_header(os, "PARM", parm_s.size());
  io::write_bytes(os, parm_s.data(), parm_s.size());
}

inline Checkpoint load_checkpoint(std::istream& is) {
  io::expect_magic(is, kCkptMagic, "checkpoint");
  io::expect_version(is, kCkptVersion, "checkpoint");

  Checkpoint ck;
  std::uint64_t conf_len = io::open_section(is, "CONF");
  auto before = is.tellg();
  ck.config = detail::read_train_config(is);
  if (is.tellg() - before != static_cast<std::streamoff>(conf_len))
    throw FormatError(FormatError::Kind::BadSection, "CONF section length disagrees with payload",
                      "CONF");

  io::expect_section(is, "STAT", 5);
  ck.step = static_cast<int>(io::read_u32(is, "checkpoint step"));
  ck.actnorm_ready = io::read_u8(is, "checkpoint actnorm flag") != 0;

  std::uint64_t parm_len = io::open_section(is, "PARM");
  before = is.tellg();
  std::uint64_t count = io::read_u64(is, "parameter count");
  if (count > (1u << 20))
    throw FormatError(FormatError::Kind::InvalidData,
                      "parameter count " + std::to_string(count) + " exceeds cap");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = io::read_string(is, "parameter name");
    if (name.empty())
      throw FormatError(FormatError::Kind::InvalidData, "empty parameter name");
    std::uint32_t ndim = io::read_u32(is, "parameter rank");
    if (ndim == 0 || ndim > 8)
      throw FormatError(FormatError::Kind::InvalidData,
                        "parameter '" + name + "' has rank " + std::to_string(ndim));
    std::vector<int> shape(ndim);
    std::int64_t numel = 1;
    for (auto& dim : shape) {
      dim = static_cast<int>(io::read_u32(is, "parameter dim"));
      if (dim < 1 || dim > (1 << 24))
        throw FormatError(FormatError::Kind::InvalidData,
                          "parameter '" + name + "' has dim " + std::to_string(dim));
      numel *= dim;
    }
    if (numel > (1 << 26))
      throw FormatError(FormatError::Kind::InvalidData, "parameter '" + name + "' too large");
    Tensor t(shape, io::read_f64_vec(is, static_cast<std::size_t>(numel), "parameter data"),
             true);
    if (!ck.params.emplace(std::move(name), std::move(t)).second)
      throw FormatError(FormatError::Kind::InvalidData, "duplicate parameter name");
  }
  if (is.tellg() - before != static_cast<std::streamoff>(parm_len))
    throw FormatError(FormatError::Kind::BadSection, "PARM section length disagrees with payload",
                      "PARM");
  io::expect_eof(is, "checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatError::Kind::Io, "cannot open '" + path + "' for writing");
  save_checkpoint(os, ck);
  os.flush();
  if (!os) throw FormatError(FormatError::Kind::Io, "write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatError::Kind::Io, "cannot open '" + path + "'");
  return load_checkpoint(is);
}

inline Checkpoint to_checkpoint(const TrainResult& r) {
  Checkpoint ck;
  ck.config = r.config;
  ck.step = r.step;
  ck.actnorm_ready = r.actnorm_ready;
  ck.params = r.params;
  return ck;
}

}  // namespace trimodal::model

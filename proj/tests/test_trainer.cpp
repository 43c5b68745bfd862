#include "trimodal/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

using namespace trimodal;
using namespace trimodal::model;
using namespace std::string_literals;

namespace {

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.n_s = 4;
  mc.n_p = 4;
  mc.text_len = 3;
  mc.vocab = 5;
  mc.c = 6;
  mc.d = 4;
  mc.embed = 3;
  mc.enc_hidden = 5;
  mc.text_hidden = 4;
  mc.dec_hidden = 5;
  mc.dec_text_hidden = 4;
  mc.flow_layers = 2;
  mc.flow_hidden = 4;
  mc.heads = 2;
  return mc;
}

synth::GenConfig tiny_data(const ModelConfig& mc, int records) {
  synth::GenConfig gc;
  gc.k = 2;
  gc.m_s = 1;
  gc.m_t = 1;
  gc.m_p = 1;
  gc.n_s = mc.n_s;
  gc.n_p = mc.n_p;
  gc.text_len = mc.text_len;
  gc.vocab = mc.vocab;
  gc.records = records;
  gc.seed = 3;
  return gc;
}

TrainConfig tiny_train(int steps) {
  TrainConfig tc;
  tc.model = tiny_model();
  tc.lr = 1e-3;
  tc.batch = 4;
  tc.steps = steps;
  tc.seed = 11;
  return tc;
}

bool tables_equal(const ParamTable& a, const ParamTable& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second.shape != v.shape || it->second.data != v.data) return false;
  }
  return true;
}

// Evaluates all six loss terms of one batch under fixed parameters.
StepMetrics eval_terms(const ParamTable& table, const TrainConfig& tc, const Tensor& xs,
                       const Tensor& xp, const std::vector<std::vector<int>>& tokens,
                       const std::string& mode) {
  Graph g;
  ParamBinder P(g, table, false);
  auto vxs = g.input("xs", {xs.shape[0], xs.shape[1]});
  auto vxp = g.input("xp", {xp.shape[0], xp.shape[1]});
  auto t = total_loss_g(g, P, tc, vxs, vxp, tokens, mode);
  g.mark_output("tot", t.tot);
  g.mark_output("rec", t.rec);
  g.mark_output("fs", t.flow_s);
  g.mark_output("ft", t.flow_t);
  g.mark_output("fp", t.flow_p);
  g.mark_output("nce", t.nce);
  Bindings b = as_bindings(table);
  b["xs"] = xs;
  b["xp"] = xp;
  auto res = g.evaluate(b);
  StepMetrics m;
  m.l_tot = res["tot"].data[0];
  m.l_rec = res["rec"].data[0];
  m.l_flow_s = res["fs"].data[0];
  m.l_flow_t = res["ft"].data[0];
  m.l_flow_p = res["fp"].data[0];
  m.l_nce = res["nce"].data[0];
  return m;
}

struct Batch {
  Tensor xs, xp;
  std::vector<std::vector<int>> tokens;
};

Batch first_rows(const synth::TripletDataset& ds, int n) {
  Batch b;
  b.xs = Tensor::zeros({n, ds.cfg.n_s});
  b.xp = Tensor::zeros({n, ds.cfg.n_p});
  for (int r = 0; r < n; ++r) {
    auto s = ds.sketch_row(r);
    auto p = ds.photo_row(r);
    for (int j = 0; j < ds.cfg.n_s; ++j) b.xs.at(r, j) = s[static_cast<std::size_t>(j)];
    for (int j = 0; j < ds.cfg.n_p; ++j) b.xp.at(r, j) = p[static_cast<std::size_t>(j)];
    b.tokens.push_back(ds.tokens(r));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Optimizer pieces
// ---------------------------------------------------------------------------

TEST(Adam, ConstantGradientStepsByRoughlyLr) {
  // With a constant gradient, the bias-corrected update is lr * g/|g| to
  // within eps, independent of the gradient's magnitude. Without bias
  // correction the first step would be ~3x larger.
  ParamTable p;
  p.emplace("w", Tensor::scalar(1.0, true));
  std::map<std::string, Tensor> g;
  g.emplace("w", Tensor::scalar(0.5));
  AdamState st;
  adam_step(p, g, st, 0.1);
  EXPECT_NEAR(p.at("w").data[0], 0.9, 1e-7);
  EXPECT_EQ(st.t, 1);
  adam_step(p, g, st, 0.1);
  EXPECT_NEAR(p.at("w").data[0], 0.8, 1e-6);
  EXPECT_EQ(st.t, 2);
}

TEST(Adam, MatchesHandRolledUpdate) {
  ParamTable p;
  p.emplace("w", Tensor::scalar(2.0, true));
  AdamState st;
  double m = 0.0, v = 0.0, ref = 2.0;
  const double grads[3] = {0.3, -1.1, 0.05};
  for (int t = 1; t <= 3; ++t) {
    std::map<std::string, Tensor> g;
    g.emplace("w", Tensor::scalar(grads[t - 1]));
    adam_step(p, g, st, 0.01);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    ref -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    ASSERT_DOUBLE_EQ(p.at("w").data[0], ref);
  }
}

TEST(Adam, ParamsWithoutGradientsStayPut) {
  ParamTable p;
  p.emplace("a", Tensor::scalar(1.5, true));
  p.emplace("b", Tensor::scalar(-2.5, true));
  std::map<std::string, Tensor> g;
  g.emplace("a", Tensor::scalar(1.0));
  AdamState st;
  adam_step(p, g, st, 0.1);
  EXPECT_NE(p.at("a").data[0], 1.5);
  EXPECT_EQ(p.at("b").data[0], -2.5);
  EXPECT_EQ(st.m.count("b"), 0u);
}

TEST(Adam, RejectsShapeMismatch) {
  ParamTable p;
  p.emplace("a", Tensor::matrix(2, 2, {1, 2, 3, 4}, true));
  std::map<std::string, Tensor> g;
  g.emplace("a", Tensor::scalar(1.0));
  AdamState st;
  EXPECT_THROW(adam_step(p, g, st, 0.1), ContractError);
}

TEST(Clip, ScalesExactlyWhenOverAndNotAtAllWhenUnder) {
  std::map<std::string, Tensor> g;
  g.emplace("a", Tensor::matrix(1, 2, {6, 0}));
  g.emplace("b", Tensor::matrix(1, 2, {0, 8}));
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 5.0), 10.0);
  EXPECT_DOUBLE_EQ(g.at("a").data[0], 3.0);
  EXPECT_DOUBLE_EQ(g.at("b").data[1], 4.0);

  std::map<std::string, Tensor> h;
  h.emplace("a", Tensor::matrix(1, 2, {6, 0}));
  h.emplace("b", Tensor::matrix(1, 2, {0, 8}));
  EXPECT_DOUBLE_EQ(clip_global_norm(h, 20.0), 10.0);
  EXPECT_DOUBLE_EQ(h.at("a").data[0], 6.0);
  EXPECT_DOUBLE_EQ(h.at("b").data[1], 8.0);
}

// ---------------------------------------------------------------------------
// Objective structure
// ---------------------------------------------------------------------------

TEST(TotalLoss, TermsAddUpUnderArbitraryWeights) {
  TrainConfig tc = tiny_train(1);
  tc.w_rec = 0.5;
  tc.w_flow = 2.0;
  tc.w_nce = 1.5;
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto table = init_params(tc.model, 5);
  auto b = first_rows(ds, 4);
  auto m = eval_terms(table, tc, b.xs, b.xp, b.tokens, "st");
  double rebuilt = tc.w_rec * m.l_rec +
                   tc.w_flow * ((m.l_flow_s + m.l_flow_t) + m.l_flow_p) + tc.w_nce * m.l_nce;
  EXPECT_NEAR(m.l_tot, rebuilt, 1e-12 * std::max(1.0, std::abs(m.l_tot)));
}

TEST(TotalLoss, AllZeroWeightsGiveExactZero) {
  TrainConfig tc = tiny_train(1);
  tc.w_rec = tc.w_flow = tc.w_nce = 0.0;
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto table = init_params(tc.model, 5);
  auto b = first_rows(ds, 4);
  auto m = eval_terms(table, tc, b.xs, b.xp, b.tokens, "s");
  EXPECT_EQ(m.l_tot, 0.0);
  EXPECT_NE(m.l_rec, 0.0);
}

TEST(TotalLoss, TermsMatchModulesInvokedIndependently) {
  // The assembled objective must equal the underlying module losses computed
  // one by one on the same encodings.
  TrainConfig tc = tiny_train(1);
  const ModelConfig& mc = tc.model;
  auto ds = synth::generate(tiny_data(mc, 8));
  auto table = init_params(mc, 5);
  auto bt = first_rows(ds, 2);
  auto m = eval_terms(table, tc, bt.xs, bt.xp, bt.tokens, "st");

  Graph g;
  ParamBinder P(g, table, false);
  auto xs = g.input("xs", {2, mc.n_s});
  auto xp = g.input("xp", {2, mc.n_p});
  auto zs = encode_vector_g(g, P, mc, "skc", xs);
  auto zp = encode_vector_g(g, P, mc, "pho", xp);
  auto zt = encode_text_g(g, P, mc, bt.tokens);
  FlowSpec fs = FlowSpec::from(mc);
  g.mark_output("rec", recon_loss_g(g, P, "skc", xs, zs.tot) +
                           recon_loss_g(g, P, "pho", xp, zp.tot) +
                           caption_nll_g(g, P, mc, bt.tokens, zt.tot));
  g.mark_output("fs", flow_nll_g(g, P, "flow.S", fs, zs.beta, zs.alpha));
  g.mark_output("ft", flow_nll_g(g, P, "flow.T", fs, zt.beta, zt.alpha));
  g.mark_output("fp", flow_nll_g(g, P, "flow.P", fs, zp.beta, zp.alpha));
  auto eta = pool_set_g(g, P, mc, {zs.alpha, zt.alpha});
  g.mark_output("nce", infonce_g(g, P, eta, zp.alpha, 2));
  Bindings b = as_bindings(table);
  b["xs"] = bt.xs;
  b["xp"] = bt.xp;
  auto res = g.evaluate(b);

  EXPECT_NEAR(m.l_rec, res["rec"].data[0], 1e-12);
  EXPECT_NEAR(m.l_flow_s, res["fs"].data[0], 1e-12);
  EXPECT_NEAR(m.l_flow_t, res["ft"].data[0], 1e-12);
  EXPECT_NEAR(m.l_flow_p, res["fp"].data[0], 1e-12);
  EXPECT_NEAR(m.l_nce, res["nce"].data[0], 1e-12);
}

TEST(TotalLoss, IdentityFlowHasClosedFormNll) {
  // With zero coupling blocks each flow is the identity with zero log-det, so
  // its NLL is the standard-normal energy of the modality-specific part.
  TrainConfig tc = tiny_train(1);
  tc.model.flow_layers = 0;
  const ModelConfig& mc = tc.model;
  auto ds = synth::generate(tiny_data(mc, 8));
  auto table = init_params(mc, 5);
  auto bt = first_rows(ds, 3);

  Graph g;
  ParamBinder P(g, table, false);
  auto xs = g.input("xs", {3, mc.n_s});
  auto zs = encode_vector_g(g, P, mc, "skc", xs);
  g.mark_output("beta", zs.beta);
  Bindings b = as_bindings(table);
  b["xs"] = bt.xs;
  auto beta = g.evaluate(b)["beta"];

  double sq = 0.0;
  for (double v : beta.data) sq += v * v;
  int q = mc.c - mc.d;
  double expected = 0.5 * sq / 3.0 + q * 0.9189385332046727;

  auto m = eval_terms(table, tc, bt.xs, bt.xp, bt.tokens, "s");
  EXPECT_NEAR(m.l_flow_s, expected, 1e-12 * std::max(1.0, std::abs(expected)));
}

TEST(TotalLoss, FlowGradientsStayInsideTheirModality) {
  // The sketch flow's loss must not touch the text or photo flow weights.
  TrainConfig tc = tiny_train(1);
  const ModelConfig& mc = tc.model;
  auto ds = synth::generate(tiny_data(mc, 8));
  auto table = init_params(mc, 5);
  auto bt = first_rows(ds, 2);

  Graph g;
  ParamBinder P(g, table, true);
  auto xs = g.input("xs", {2, mc.n_s});
  auto xp = g.input("xp", {2, mc.n_p});
  auto t = total_loss_g(g, P, tc, xs, xp, bt.tokens, "st");
  Bindings b = as_bindings(table);
  b["xs"] = bt.xs;
  b["xp"] = bt.xp;
  auto res = g.gradient(t.flow_s, b);

  int checked = 0, nonzero_own = 0;
  for (const auto& [name, grad] : res.grads) {
    if (name.rfind("flow.T.", 0) == 0 || name.rfind("flow.P.", 0) == 0) {
      ++checked;
      for (double v : grad.data) ASSERT_EQ(v, 0.0) << name;
    }
    if (name.rfind("flow.S.", 0) == 0)
      for (double v : grad.data)
        if (v != 0.0) ++nonzero_own;
  }
  EXPECT_GT(checked, 0);
  EXPECT_GT(nonzero_own, 0);
}

TEST(TotalLoss, ValidatesModeAndBatch) {
  TrainConfig tc = tiny_train(1);
  const ModelConfig& mc = tc.model;
  auto table = init_params(mc, 5);
  Graph g;
  ParamBinder P(g, table, false);
  auto xs = g.input("xs", {2, mc.n_s});
  auto xp = g.input("xp", {2, mc.n_p});
  std::vector<std::vector<int>> toks(2, std::vector<int>(static_cast<std::size_t>(mc.text_len), 1));
  EXPECT_THROW(total_loss_g(g, P, tc, xs, xp, toks, "ts"), ContractError);
  EXPECT_THROW(total_loss_g(g, P, tc, xs, xp, {}, "s"), ContractError);
  std::vector<std::vector<int>> three(3, std::vector<int>(static_cast<std::size_t>(mc.text_len), 1));
  EXPECT_THROW(total_loss_g(g, P, tc, xs, xp, three, "s"), ContractError);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(Train, ZeroStepsReturnsInitializationUntouched) {
  TrainConfig tc = tiny_train(0);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto r = train(ds, tc);
  EXPECT_TRUE(tables_equal(r.params, init_params(tc.model, tc.seed)));
  EXPECT_EQ(r.step, 0);
  EXPECT_FALSE(r.actnorm_ready);
  EXPECT_TRUE(r.metrics.empty());
}

TEST(Train, DeterministicAcrossRunsAndSensitiveToSeed) {
  TrainConfig tc = tiny_train(3);
  auto ds = synth::generate(tiny_data(tc.model, 12));
  auto a = train(ds, tc);
  auto b = train(ds, tc);
  EXPECT_TRUE(tables_equal(a.params, b.params));
  ASSERT_EQ(a.metrics.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(a.metrics[i].l_tot, b.metrics[i].l_tot);

  tc.seed = 12;
  auto c = train(ds, tc);
  EXPECT_FALSE(tables_equal(a.params, c.params));
}

TEST(Train, ActnormInitializesFromFirstBatchOnlyWhenFlowsExist) {
  TrainConfig tc = tiny_train(1);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  EXPECT_TRUE(train(ds, tc).actnorm_ready);

  tc.model.flow_layers = 0;
  EXPECT_FALSE(train(ds, tc).actnorm_ready);
}

TEST(Train, MetricsStreamHasOneLinePerStep) {
  TrainConfig tc = tiny_train(2);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  std::ostringstream os;
  auto r = train(ds, tc, &os);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    std::istringstream ls(line);
    int step;
    double f[6];
    ls >> step >> f[0] >> f[1] >> f[2] >> f[3] >> f[4] >> f[5];
    ASSERT_FALSE(ls.fail()) << line;
    EXPECT_EQ(step, lines);
  }
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(r.metrics.size(), 2u);
  EXPECT_EQ(r.metrics[0].step, 1);
}

TEST(Train, FixedPolicyAndMseModeRun) {
  TrainConfig tc = tiny_train(2);
  tc.query_policy = "t";
  tc.align_mode = "mse";
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto r = train(ds, tc);
  EXPECT_EQ(r.step, 2);
  for (const auto& m : r.metrics) EXPECT_TRUE(std::isfinite(m.l_nce));
}

TEST(Train, AcceptsMatchingInitTableAndRunsFromIt) {
  TrainConfig tc = tiny_train(2);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto warm = train(ds, tc).params;

  TrainConfig tc0 = tiny_train(0);
  auto r = train(ds, tc0, nullptr, &warm);
  EXPECT_TRUE(tables_equal(r.params, warm));
}

TEST(Train, RejectsMismatchedInitTable) {
  TrainConfig tc = tiny_train(1);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto table = init_params(tc.model, tc.seed);

  ParamTable missing = table;
  missing.erase("align.w");
  EXPECT_THROW(train(ds, tc, nullptr, &missing), ConfigError);

  ParamTable reshaped = table;
  reshaped.at("align.w") = Tensor::matrix(1, 1, {0.0}, true);
  EXPECT_THROW(train(ds, tc, nullptr, &reshaped), ConfigError);

  ParamTable extra = table;
  extra.emplace("stray", Tensor::scalar(0.0, true));
  EXPECT_THROW(train(ds, tc, nullptr, &extra), ConfigError);
}

TEST(Train, RejectsBadConfigsAndMismatchedData) {
  auto ds = synth::generate(tiny_data(tiny_model(), 8));

  TrainConfig tc = tiny_train(1);
  tc.query_policy = "both";
  EXPECT_THROW(train(ds, tc), ConfigError);

  tc = tiny_train(1);
  tc.align_mode = "cosine";
  EXPECT_THROW(train(ds, tc), ConfigError);

  tc = tiny_train(1);
  tc.lr = 0.0;
  EXPECT_THROW(train(ds, tc), ConfigError);

  tc = tiny_train(1);
  tc.batch = 9;  // dataset has 8 records
  EXPECT_THROW(train(ds, tc), ConfigError);

  tc = tiny_train(1);
  tc.model.n_s = 6;  // dataset sketches are 4-dim
  tc.model.n_p = 6;
  EXPECT_THROW(train(ds, tc), ConfigError);
}

TEST(Train, AbortsWithStepAndTermWhenLossBlowsUp) {
  TrainConfig tc = tiny_train(3);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto table = init_params(tc.model, tc.seed);
  // A colossal decoder bias overflows the squared error to infinity.
  for (double& v : table.at("dec.skc.b2").data) v = 1e200;
  try {
    train(ds, tc, nullptr, &table);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Pretrain, CaptionLossDropsOnAMemorizableSet) {
  TrainConfig tc = tiny_train(150);
  tc.lr = 1e-2;
  tc.batch = 4;
  auto ds = synth::generate(tiny_data(tc.model, 4));
  auto r = pretrain_caption(ds, tc);
  ASSERT_EQ(r.metrics.size(), 150u);
  EXPECT_LT(r.metrics.back().l_tot, 0.5 * r.metrics.front().l_tot);
  EXPECT_FALSE(r.actnorm_ready);
  EXPECT_EQ(r.metrics.back().l_flow_s, 0.0);
  EXPECT_EQ(r.metrics.back().l_nce, 0.0);
}

TEST(Pretrain, OnlyCaptionPathParametersMove) {
  TrainConfig tc = tiny_train(2);
  auto ds = synth::generate(tiny_data(tc.model, 8));
  auto r = pretrain_caption(ds, tc);
  auto fresh = init_params(tc.model, tc.seed);
  bool moved_dec = false;
  for (const auto& [name, t] : r.params) {
    bool on_path = name.rfind("enc.vec.", 0) == 0 || name.rfind("enc.pho.", 0) == 0 ||
                   name.rfind("dec.txt.", 0) == 0;
    if (!on_path) {
      EXPECT_EQ(t.data, fresh.at(name).data) << name << " should be untouched";
    } else if (t.data != fresh.at(name).data) {
      moved_dec = true;
    }
  }
  EXPECT_TRUE(moved_dec);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

Checkpoint sample_ckpt() {
  TrainConfig tc = tiny_train(2);
  tc.w_flow = 0.25;
  tc.align_mode = "mse";
  tc.query_policy = "st";
  auto ds = synth::generate(tiny_data(tc.model, 8));
  return to_checkpoint(train(ds, tc));
}

TEST(Checkpoint, RoundTripsBitExact) {
  Checkpoint ck = sample_ckpt();
  std::ostringstream os;
  save_checkpoint(os, ck);
  std::istringstream is(os.str());
  Checkpoint back = load_checkpoint(is);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.step, 2);
  EXPECT_TRUE(back.actnorm_ready);
  EXPECT_TRUE(tables_equal(back.params, ck.params));
}

TEST(Checkpoint, SavedBytesAreDeterministic) {
  Checkpoint ck = sample_ckpt();
  std::ostringstream a, b;
  save_checkpoint(a, ck);
  save_checkpoint(b, ck);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Checkpoint, CorruptionIsDiagnosedPrecisely) {
  Checkpoint ck = sample_ckpt();
  std::ostringstream os;
  save_checkpoint(os, ck);
  std::string good = os.str();

  auto kind_of = [](const std::string& bytes) {
    std::istringstream is(bytes);
    try {
      load_checkpoint(is);
      return std::string("ok");
    } catch (const FormatError& e) {
      switch (e.kind) {
        case FormatError::Kind::BadMagic: return std::string("magic");
        case FormatError::Kind::BadVersion: return std::string("version");
        case FormatError::Kind::Truncated: return std::string("truncated");
        case FormatError::Kind::BadSection: return std::string("section");
        case FormatError::Kind::InvalidData: return std::string("data");
        case FormatError::Kind::Io: return std::string("io");
      }
      return std::string("unknown");
    }
  };

  EXPECT_EQ(kind_of(good), "ok");

  std::string bad = good;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), "magic");

  bad = good;
  bad[4] = static_cast<char>(99);
  EXPECT_EQ(kind_of(bad), "version");

  EXPECT_EQ(kind_of(good.substr(0, good.size() / 2)), "truncated");

  EXPECT_EQ(kind_of(good + "\0"s), "section");

  // Blow up the recorded parameter count.
  bad = good;
  auto parm = bad.find("PARM");
  ASSERT_NE(parm, std::string::npos);
  for (int i = 0; i < 8; ++i) bad[parm + 12 + static_cast<std::size_t>(i)] = '\xFF';
  EXPECT_EQ(kind_of(bad), "data");

  // Zero out the leading model dimension in the stored config.
  bad = good;
  auto conf = bad.find("CONF");
  ASSERT_NE(conf, std::string::npos);
  for (int i = 0; i < 4; ++i) bad[conf + 12 + static_cast<std::size_t>(i)] = '\0';
  EXPECT_EQ(kind_of(bad), "data");
}

TEST(Checkpoint, FileOverloadsWork) {
  Checkpoint ck = sample_ckpt();
  std::string path = testing::TempDir() + "trimodal_ckpt_test.bin";
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(tables_equal(back.params, ck.params));
  EXPECT_THROW(load_checkpoint(path + ".missing"), FormatError);
  std::remove(path.c_str());
}

}  // namespace

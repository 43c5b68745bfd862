// Command-line front end: data generation, training, retrieval, captioning,
// evaluation, and checkpoint inspection over one config file.
//
// Exit codes: 0 success, 1 usage or config problem, 2 malformed data or
// checkpoint file, 3 numeric failure (including a failed gradient check).

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trimodal/evalmetrics.hpp"
#include "trimodal/infer.hpp"
#include "trimodal/runconfig.hpp"
#include "trimodal/synthdata.hpp"
#include "trimodal/trainer.hpp"

namespace tri = trimodal;
namespace tmm = trimodal::model;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config, data, out, ckpt, metrics, init, mode = "st", source = "pho";
  int steps = -1;             // >= 0 overrides the config
  long long seed = -1;        // >= 0 overrides the config
  int k = 1;
  int record = 0;
  int query = -1;             // >= 0 prints that query's full ranking
  std::uint64_t caption_seed = 1;
};

tmm::RunConfig config_with_overrides(const Options& opt) {
  tmm::RunConfig rc =
      opt.config.empty() ? tmm::RunConfig{} : tmm::load_run_config(opt.config);
  if (opt.steps >= 0) rc.train.steps = opt.steps;
  if (opt.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(opt.seed);
  rc.sync_model_dims();
  rc.validate();
  return rc;
}

void shape_line(std::ostream& os, const std::string& name, const std::vector<int>& shape) {
  os << "param " << name << " [";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]\n";
}

int cmd_gen_data(const Options& opt) {
  tmm::RunConfig rc = config_with_overrides(opt);
  auto ds = tri::synth::generate(rc.gen);
  tri::synth::save(ds, opt.out);
  std::cout << "records " << ds.cfg.records << "\n";
  std::cout << "seed " << ds.cfg.seed << "\n";
  std::cout << "wrote " << opt.out << "\n";
  return kExitOk;
}

int run_training(const Options& opt, bool caption_only) {
  tmm::RunConfig rc = config_with_overrides(opt);
  auto ds = tri::synth::load(opt.data);

  std::string metrics_path = opt.metrics.empty() ? opt.out + ".metrics.tsv" : opt.metrics;
  std::ofstream mos(metrics_path);
  if (!mos)
    throw tri::ConfigError("cannot open metrics file '" + metrics_path + "' for writing");

  tmm::ParamTable init_table;
  const tmm::ParamTable* init = nullptr;
  bool init_actnorm = false;
  if (!opt.init.empty()) {
    tmm::Checkpoint init_ck = tmm::load_checkpoint(opt.init);
    init_table = std::move(init_ck.params);
    init = &init_table;
    init_actnorm = init_ck.actnorm_ready;
  }

  tmm::TrainResult result;
  if (caption_only) {
    result = tmm::pretrain_caption(ds, rc.train, &mos, init, init_actnorm);
  } else {
    result = tmm::train(ds, rc.train, &mos, init, init_actnorm);
  }
  mos.flush();
  if (!mos) throw tri::ConfigError("write to metrics file '" + metrics_path + "' failed");

  tmm::save_checkpoint(opt.out, tmm::to_checkpoint(result));
  std::cout << "trained " << result.step << " steps\n";
  if (!result.metrics.empty())
    std::cout << "final L_tot " << result.metrics.back().l_tot << "\n";
  std::cout << "wrote " << opt.out << "\n";
  std::cout << "metrics " << metrics_path << "\n";
  return kExitOk;
}

int cmd_retrieve(const Options& opt) {
  tmm::Checkpoint ck = tmm::load_checkpoint(opt.ckpt);
  auto ds = tri::synth::load(opt.data);
  const tmm::ModelConfig& mc = ck.config.model;

  int n = ds.cfg.records;
  std::vector<std::vector<double>> sketches, gallery;
  std::vector<std::vector<int>> texts;
  for (int i = 0; i < n; ++i) {
    gallery.push_back(ds.photo_row(i));
    if (opt.mode != "t") sketches.push_back(ds.sketch_row(i));
    if (opt.mode != "s") texts.push_back(ds.tokens(i));
  }

  if (opt.query >= 0) {
    if (opt.query >= n)
      throw tri::ConfigError("query index " + std::to_string(opt.query) + " out of range");
    auto res = tmm::retrieve(ck.params, mc, gallery, opt.mode,
                             opt.mode == "t" ? std::vector<double>{} : ds.sketch_row(opt.query),
                             opt.mode == "s" ? std::vector<int>{} : ds.tokens(opt.query));
    std::cout << "query " << opt.query << " ranking";
    for (int idx : res.ranking) std::cout << ' ' << idx;
    std::cout << "\n";
  }

  auto ranks = tmm::true_ranks(ck.params, mc, opt.mode, sketches, texts, gallery);
  std::cout << std::fixed << std::setprecision(6);
  std::cout << "acc@1 " << tmm::acc_at_q(ranks, 1) << "\n";
  std::cout << "acc@10 " << tmm::acc_at_q(ranks, 10) << "\n";
  return kExitOk;
}

int cmd_caption(const Options& opt) {
  tmm::Checkpoint ck = tmm::load_checkpoint(opt.ckpt);
  auto ds = tri::synth::load(opt.data);
  const tmm::ModelConfig& mc = ck.config.model;
  if (opt.record < 0 || opt.record >= ds.cfg.records)
    throw tri::ConfigError("record index " + std::to_string(opt.record) + " out of range");

  auto row = opt.source == "skc" ? ds.sketch_row(opt.record) : ds.photo_row(opt.record);
  auto res = tmm::caption(ck.params, mc, opt.source, row, opt.k, opt.caption_seed);
  for (std::size_t i = 0; i < res.candidates.size(); ++i) {
    std::cout << "candidate " << res.seeds[i] << ":";
    for (int t : res.candidates[i]) std::cout << ' ' << t;
    std::cout << "\n";
  }
  auto ref = ds.tokens(opt.record);
  std::cout << std::fixed << std::setprecision(6);
  for (int nn = 1; nn <= 4; ++nn) {
    double best = tmm::oracle_max(
        res.candidates, ref,
        [nn](const std::vector<int>& c, const std::vector<int>& r) {
          return tmm::bleu_n(c, r, nn);
        });
    std::cout << "bleu" << nn << " " << best << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Options& opt) {
  tmm::Checkpoint ck = tmm::load_checkpoint(opt.ckpt);
  tmm::RunConfig rc = config_with_overrides(opt);

  // Held-out set: same generator (same seed, hence same mixing matrices),
  // records drawn beyond the training range.
  tri::synth::GenConfig gc = rc.gen;
  gc.records = rc.gen.records + rc.eval.gallery;
  auto ds = tri::synth::slice_records(tri::synth::generate(gc), rc.gen.records, rc.eval.gallery);
  const tmm::ModelConfig& mc = ck.config.model;

  int n = ds.cfg.records;
  std::vector<std::vector<double>> sketches, gallery;
  std::vector<std::vector<int>> texts;
  for (int i = 0; i < n; ++i) {
    gallery.push_back(ds.photo_row(i));
    if (opt.mode != "t") sketches.push_back(ds.sketch_row(i));
    if (opt.mode != "s") texts.push_back(ds.tokens(i));
  }
  auto ranks = tmm::true_ranks(ck.params, mc, opt.mode, sketches, texts, gallery);

  tmm::EvalReport rep;
  rep.mode = opt.mode;
  rep.gallery_size = n;
  rep.retrieval_queries = n;
  for (int q : {1, 5, 10})
    if (q <= n) rep.acc_at[q] = tmm::acc_at_q(ranks, q);

  if (rc.eval.caption_records > 0) {
    rep.caption_records = rc.eval.caption_records;
    rep.caption_samples = rc.eval.caption_k;
    tri::Rng seeds(rc.eval.seed);
    for (int nn = 1; nn <= 4; ++nn) rep.bleu[nn] = 0.0;
    for (int i = 0; i < rc.eval.caption_records; ++i) {
      auto res =
          tmm::caption(ck.params, mc, "pho", ds.photo_row(i), rc.eval.caption_k, seeds.next_u64());
      auto ref = ds.tokens(i);
      for (int nn = 1; nn <= 4; ++nn) {
        rep.bleu[nn] += tmm::oracle_max(
            res.candidates, ref,
            [nn](const std::vector<int>& c, const std::vector<int>& r) {
              return tmm::bleu_n(c, r, nn);
            });
      }
    }
    for (int nn = 1; nn <= 4; ++nn) rep.bleu[nn] /= rc.eval.caption_records;
  }

  if (opt.out.empty()) {
    rep.write(std::cout);
  } else {
    std::ofstream os(opt.out);
    if (!os) throw tri::ConfigError("cannot open report file '" + opt.out + "' for writing");
    rep.write(os);
    os.flush();
    if (!os) throw tri::ConfigError("write to report file '" + opt.out + "' failed");
    std::cout << "wrote " << opt.out << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const Options& opt) {
  // Small-width model so central differences stay sharp; every parameter of
  // the full objective is checked.
  tmm::ModelConfig mc;
  mc.n_s = 6;
  mc.n_p = 5;
  mc.text_len = 3;
  mc.vocab = 6;
  mc.c = 8;
  mc.d = 6;
  mc.embed = 3;
  mc.enc_hidden = 5;
  mc.text_hidden = 4;
  mc.dec_hidden = 5;
  mc.dec_text_hidden = 4;
  mc.flow_layers = 2;
  mc.flow_hidden = 4;
  mc.heads = 2;

  tmm::TrainConfig tc;
  tc.model = mc;
  std::uint64_t seed = opt.seed >= 0 ? static_cast<std::uint64_t>(opt.seed) : 21;
  auto table = tmm::init_params(mc, seed);

  const int batch = 2;
  tri::Rng rng(seed ^ 0x5DEECE66DULL);
  tri::Tensor xs = tri::Tensor::zeros({batch, mc.n_s});
  tri::Tensor xp = tri::Tensor::zeros({batch, mc.n_p});
  for (auto& v : xs.data) v = rng.normal();
  for (auto& v : xp.data) v = rng.normal();
  std::vector<std::vector<int>> tokens(batch);
  for (auto& row : tokens) {
    row.resize(static_cast<std::size_t>(mc.text_len));
    for (auto& t : row) t = rng.below(mc.vocab);
  }

  tri::Graph g;
  tmm::ParamBinder P(g, table, true);
  auto vxs = g.input("xs", {batch, mc.n_s});
  auto vxp = g.input("xp", {batch, mc.n_p});
  auto terms = tmm::total_loss_g(g, P, tc, vxs, vxp, tokens, "st");
  tri::Bindings b = tmm::as_bindings(table);
  b["xs"] = xs;
  b["xp"] = xp;

  auto rep = tri::gradcheck(g, terms.tot, b, 1e-6, 1e-5);
  rep.print(std::cout);
  return rep.pass ? kExitOk : kExitNumeric;
}

int cmd_inspect(const Options& opt) {
  tmm::Checkpoint ck = tmm::load_checkpoint(opt.ckpt);
  const tmm::ModelConfig& mc = ck.config.model;
  std::cout << "step " << ck.step << "\n";
  std::cout << "actnorm_ready " << (ck.actnorm_ready ? 1 : 0) << "\n";
  std::cout << "align_mode " << ck.config.align_mode << "\n";
  std::cout << "query_policy " << ck.config.query_policy << "\n";
  std::cout << "model n_s=" << mc.n_s << " n_p=" << mc.n_p << " text_len=" << mc.text_len
            << " vocab=" << mc.vocab << " c=" << mc.c << " d=" << mc.d
            << " flow_layers=" << mc.flow_layers << " heads=" << mc.heads << "\n";
  std::cout << "params " << ck.params.size() << "\n";
  for (const auto& [name, t] : ck.params) shape_line(std::cout, name, t.shape);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-modal sketch/text/photo embedding pipeline"};
  app.require_subcommand(1);
  Options opt;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic triplet dataset");
  gen->add_option("--config", opt.config, "JSON run configuration")->required();
  gen->add_option("--out", opt.out, "output dataset path")->required();

  auto* train = app.add_subcommand("train", "train the joint model");
  train->add_option("--data", opt.data, "dataset path")->required();
  train->add_option("--config", opt.config, "JSON run configuration")->required();
  train->add_option("--out", opt.out, "output checkpoint path")->required();
  train->add_option("--metrics", opt.metrics, "metrics log path (default <out>.metrics.tsv)");
  train->add_option("--init", opt.init, "checkpoint whose parameters seed training");
  train->add_option("--steps", opt.steps, "override config step count");
  train->add_option("--seed", opt.seed, "override config training seed");

  auto* pre = app.add_subcommand("pretrain-caption", "train only the photo-to-text captioner");
  pre->add_option("--data", opt.data, "dataset path")->required();
  pre->add_option("--config", opt.config, "JSON run configuration")->required();
  pre->add_option("--out", opt.out, "output checkpoint path")->required();
  pre->add_option("--metrics", opt.metrics, "metrics log path (default <out>.metrics.tsv)");
  pre->add_option("--init", opt.init, "checkpoint whose parameters seed training");
  pre->add_option("--steps", opt.steps, "override config step count");
  pre->add_option("--seed", opt.seed, "override config training seed");

  auto* retr = app.add_subcommand("retrieve", "rank gallery photos for every query record");
  retr->add_option("--ckpt", opt.ckpt, "trained checkpoint")->required();
  retr->add_option("--data", opt.data, "dataset providing queries and gallery")->required();
  retr->add_option("--mode", opt.mode, "query modalities: s, t, or st")
      ->check(CLI::IsMember({"s", "t", "st"}));
  retr->add_option("--query", opt.query, "also print this record's full ranking");

  auto* cap = app.add_subcommand("caption", "sample captions for one record");
  cap->add_option("--ckpt", opt.ckpt, "trained checkpoint")->required();
  cap->add_option("--data", opt.data, "dataset providing the record")->required();
  cap->add_option("--k", opt.k, "number of candidates")->required();
  cap->add_option("--record", opt.record, "record index (default 0)");
  cap->add_option("--source", opt.source, "input modality: skc or pho")
      ->check(CLI::IsMember({"skc", "pho"}));
  cap->add_option("--seed", opt.caption_seed, "sampling seed");

  auto* ev = app.add_subcommand("eval", "retrieval and caption metrics on a held-out set");
  ev->add_option("--ckpt", opt.ckpt, "trained checkpoint")->required();
  ev->add_option("--config", opt.config, "JSON run configuration")->required();
  ev->add_option("--mode", opt.mode, "query modalities: s, t, or st")
      ->check(CLI::IsMember({"s", "t", "st"}));
  ev->add_option("--out", opt.out, "report path (default: stdout)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  gc->add_option("--seed", opt.seed, "parameter/data seed");

  auto* ins = app.add_subcommand("inspect-ckpt", "dump checkpoint header and parameter shapes");
  ins->add_option("--ckpt", opt.ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(opt);
    if (train->parsed()) return run_training(opt, false);
    if (pre->parsed()) return run_training(opt, true);
    if (retr->parsed()) return cmd_retrieve(opt);
    if (cap->parsed()) return cmd_caption(opt);
    if (ev->parsed()) return cmd_eval(opt);
    if (gc->parsed()) return cmd_gradcheck(opt);
    if (ins->parsed()) return cmd_inspect(opt);
  } catch (const tri::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tri::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

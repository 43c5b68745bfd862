#pragma once

// Model hyperparameters, the named parameter table, and the binder that
// exposes table entries as graph inputs.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

struct ModelConfig {
  int n_s = 32;          // sketch observation dim
  int n_p = 32;          // photo observation dim
  int text_len = 12;     // tokens per record
  int vocab = 64;        // data tokens; BOS/EOS appended after these
  int c = 64;            // total embedding dim
  int d = 48;            // modality-agnostic dim (c - d is modality-specific)
  int embed = 16;        // token embedding width
  int enc_hidden = 64;   // vector encoder hidden width
  int text_hidden = 32;  // recurrent text encoder width per direction
  int dec_hidden = 64;   // vector decoder hidden width
  int dec_text_hidden = 32;  // text decoder cell width
  int flow_layers = 4;   // coupling/actnorm/switch blocks per flow
  int flow_hidden = 32;  // coupling net hidden width
  int heads = 4;         // fusion attention heads

  int q() const { return c - d; }
  int q1() const { return q() / 2; }          // pass-through half of the flow channel
  int q2() const { return q() - q1(); }       // transformed half
  int vocab_total() const { return vocab + 2; }
  int bos() const { return vocab; }
  int eos() const { return vocab + 1; }

  void validate() const {
    auto pos = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
    };
    pos(n_s, "n_s");
    pos(n_p, "n_p");
    pos(text_len, "text_len");
    pos(vocab, "vocab");
    pos(c, "c");
    pos(d, "d");
    pos(embed, "embed");
    pos(enc_hidden, "enc_hidden");
    pos(text_hidden, "text_hidden");
    pos(dec_hidden, "dec_hidden");
    pos(dec_text_hidden, "dec_text_hidden");
    pos(flow_hidden, "flow_hidden");
    pos(heads, "heads");
    if (flow_layers < 0) throw ConfigError("flow_layers must be >= 0");
    if (d >= c) throw ConfigError("d must be < c (need a modality-specific remainder)");
    if (d % heads != 0)
      throw ConfigError("heads must divide d, got d=" + std::to_string(d) +
                        " heads=" + std::to_string(heads));
  }

  bool operator==(const ModelConfig&) const = default;
};

// Sketch and photo run through one shared perceptron when their observation
// dims agree; otherwise each modality owns its weights.
inline std::string vec_encoder_prefix(const ModelConfig& mc, const std::string& which) {
  if (which != "skc" && which != "pho")
    throw ContractError("vector encoder selector must be 'skc' or 'pho', got '" + which + "'");
  return mc.n_s == mc.n_p ? "enc.vec" : "enc." + which;
}

// Sorted name -> tensor map; iteration order is the canonical parameter order.
using ParamTable = std::map<std::string, Tensor>;

inline std::int64_t param_count(const ParamTable& t) {
  std::int64_t n = 0;
  for (const auto& [k, v] : t) n += v.numel();
  return n;
}

namespace detail {

class Init {
 public:
  Init(ParamTable& t, Rng& rng) : t_(t), rng_(rng) {}

  // fan-in scaled normal, rows = input dim of x @ W
  void matrix(const std::string& name, int rows, int cols, double sd_override = -1.0) {
    double sd = sd_override >= 0.0 ? sd_override : 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (auto& v : t.data) v = sd * rng_.normal();
    t_[name] = std::move(t);
  }
  void zeros_matrix(const std::string& name, int rows, int cols) {
    t_[name] = Tensor::zeros({rows, cols}, true);
  }
  void zeros_vec(const std::string& name, int n) { t_[name] = Tensor::zeros({n}, true); }
  void const_vec(const std::string& name, int n, double v) {
    Tensor t = Tensor::zeros({n}, true);
    for (auto& x : t.data) x = v;
    t_[name] = std::move(t);
  }
  void scalar(const std::string& name, double v) {
    t_[name] = Tensor({1}, {v}, true);
  }

 private:
  ParamTable& t_;
  Rng& rng_;
};

}  // namespace detail

// Builds every parameter in a fixed draw order, so a seed pins the full
// initial state regardless of table iteration.
inline ParamTable init_params(const ModelConfig& mc, std::uint64_t seed) {
  mc.validate();
  ParamTable table;
  Rng rng(seed);
  detail::Init init(table, rng);
  const int h = mc.text_hidden, e = mc.embed, dh = mc.d / mc.heads;

  // vector encoders (sketch, photo)
  if (mc.n_s == mc.n_p) {
    init.matrix("enc.vec.w1", mc.n_s, mc.enc_hidden);
    init.zeros_vec("enc.vec.b1", mc.enc_hidden);
    init.matrix("enc.vec.w2", mc.enc_hidden, mc.c);
    init.zeros_vec("enc.vec.b2", mc.c);
  } else {
    init.matrix("enc.skc.w1", mc.n_s, mc.enc_hidden);
    init.zeros_vec("enc.skc.b1", mc.enc_hidden);
    init.matrix("enc.skc.w2", mc.enc_hidden, mc.c);
    init.zeros_vec("enc.skc.b2", mc.c);
    init.matrix("enc.pho.w1", mc.n_p, mc.enc_hidden);
    init.zeros_vec("enc.pho.b1", mc.enc_hidden);
    init.matrix("enc.pho.w2", mc.enc_hidden, mc.c);
    init.zeros_vec("enc.pho.b2", mc.c);
  }

  // bidirectional recurrent text encoder; gates fused as [r|u|n]
  init.matrix("enc.txt.emb", mc.vocab, e, 1.0 / std::sqrt(static_cast<double>(e)));
  for (const char* dir : {"f", "b"}) {
    std::string p = std::string("enc.txt.") + dir;
    init.matrix(p + ".wx", e, 3 * h);
    init.matrix(p + ".wh", h, 3 * h);
    init.zeros_vec(p + ".b", 3 * h);
  }
  init.matrix("enc.txt.proj.w", 2 * h, mc.c);
  init.zeros_vec("enc.txt.proj.b", mc.c);

  // per-modality conditional flows on the modality-specific channel
  for (const char* m : {"S", "T", "P"}) {
    for (int l = 0; l < mc.flow_layers; ++l) {
      std::string p = "flow." + std::string(m) + "." + std::to_string(l);
      init.zeros_vec(p + ".an.logscale", mc.q());
      init.zeros_vec(p + ".an.bias", mc.q());
      int cin = mc.q1() + mc.d;
      for (const char* net : {"s", "t"}) {
        std::string np = p + ".cp." + net;
        init.matrix(np + ".w1", cin, mc.flow_hidden);
        init.zeros_vec(np + ".b1", mc.flow_hidden);
        init.zeros_matrix(np + ".w2", mc.flow_hidden, mc.q2());  // identity start
        init.zeros_vec(np + ".b2", mc.q2());
      }
      init.scalar(p + ".cp.bound", 1.0);
    }
  }

  // attention fusion of the available query modalities
  init.matrix("mab.seed", 1, mc.d, 1.0 / std::sqrt(static_cast<double>(mc.d)));
  for (int j = 0; j < mc.heads; ++j) {
    std::string p = "mab.h" + std::to_string(j);
    init.matrix(p + ".wq", mc.d, dh);
    init.matrix(p + ".wk", mc.d, dh);
    init.matrix(p + ".wv", mc.d, dh);
  }
  init.matrix("mab.wo", mc.d, mc.d);
  for (const char* ff : {"rff1", "rff2"}) {
    std::string p = std::string("mab.") + ff;
    init.matrix(p + ".w1", mc.d, mc.d);
    init.zeros_vec(p + ".b1", mc.d);
    init.matrix(p + ".w2", mc.d, mc.d);
    init.zeros_vec(p + ".b2", mc.d);
  }
  init.const_vec("mab.ln1.g", mc.d, 1.0);
  init.zeros_vec("mab.ln1.b", mc.d);
  init.const_vec("mab.ln2.g", mc.d, 1.0);
  init.zeros_vec("mab.ln2.b", mc.d);

  // bilinear alignment critic
  init.matrix("align.w", mc.d, mc.d, 1.0 / static_cast<double>(mc.d));

  // vector decoders
  init.matrix("dec.skc.w1", mc.c, mc.dec_hidden);
  init.zeros_vec("dec.skc.b1", mc.dec_hidden);
  init.matrix("dec.skc.w2", mc.dec_hidden, mc.n_s);
  init.zeros_vec("dec.skc.b2", mc.n_s);
  init.matrix("dec.pho.w1", mc.c, mc.dec_hidden);
  init.zeros_vec("dec.pho.b1", mc.dec_hidden);
  init.matrix("dec.pho.w2", mc.dec_hidden, mc.n_p);
  init.zeros_vec("dec.pho.b2", mc.n_p);

  // recurrent caption decoder over vocab + BOS/EOS
  const int hd = mc.dec_text_hidden;
  init.matrix("dec.txt.emb", mc.vocab_total(), e, 1.0 / std::sqrt(static_cast<double>(e)));
  init.matrix("dec.txt.wx", e + mc.c, 3 * hd);
  init.matrix("dec.txt.wh", hd, 3 * hd);
  init.zeros_vec("dec.txt.b", 3 * hd);
  init.matrix("dec.txt.out.w", hd, mc.vocab_total());
  init.zeros_vec("dec.txt.out.b", mc.vocab_total());

  return table;
}

// Lazily declares table entries as graph inputs; one node per name.
class ParamBinder {
 public:
  ParamBinder(Graph& g, const ParamTable& table, bool trainable = true)
      : g_(g), table_(table), trainable_(trainable) {}

  Value operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    auto pit = table_.find(name);
    if (pit == table_.end()) throw ContractError("parameter '" + name + "' not in table");
    Value v = g_.input(name, pit->second.shape, trainable_);
    cache_.emplace(name, v);
    return v;
  }

  const ParamTable& table() const { return table_; }

 private:
  Graph& g_;
  const ParamTable& table_;
  bool trainable_;
  std::map<std::string, Value> cache_;
};

// Bindings view of a table (copies tensors; tables are small).
inline Bindings as_bindings(const ParamTable& t) {
  Bindings b;
  for (const auto& [k, v] : t) b[k] = v;
  return b;
}

}  // namespace trimodal::model

#pragma once

// JSON run configuration: one file drives data generation, training, and
// evaluation. Parsing is strict in both directions: unknown keys are errors,
// and each value must already have the right JSON type (no silent float to
// int truncation). The observation dims live in the "gen" section only; the
// model inherits them, so data and model cannot drift apart in one file.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "trimodal/errors.hpp"
#include "trimodal/params.hpp"
#include "trimodal/synthdata.hpp"
#include "trimodal/trainer.hpp"

namespace trimodal::model {

struct EvalConfig {
  int gallery = 200;             // held-out records used as gallery and queries
  std::uint64_t seed = 1234;     // generation seed of the held-out set
  int caption_k = 100;           // draws per captioned record
  int caption_records = 5;       // records captioned for BLEU (0 = skip)

  void validate() const {
    if (gallery < 1) throw ConfigError("eval.gallery must be >= 1");
    if (caption_k < 1) throw ConfigError("eval.caption_k must be >= 1");
    if (caption_records < 0) throw ConfigError("eval.caption_records must be >= 0");
    if (caption_records > gallery)
      throw ConfigError("eval.caption_records exceeds eval.gallery");
  }

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  synth::GenConfig gen;
  TrainConfig train;
  EvalConfig eval;

  // The model always observes what the generator emits.
  void sync_model_dims() {
    train.model.n_s = gen.n_s;
    train.model.n_p = gen.n_p;
    train.model.text_len = gen.text_len;
    train.model.vocab = gen.vocab;
  }

  void validate() const {
    gen.validate();
    train.validate();
    eval.validate();
  }
};

namespace cfgdetail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where,
                           const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" +
                        (where.empty() ? it.key() : where + "." + it.key()) + "'");
}

inline void get_int(const json& j, const std::string& where, const char* key, int& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError("config key '" + where + "." + key + "' must be an integer");
  out = v.get<int>();
}

inline void get_u64(const json& j, const std::string& where, const char* key,
                    std::uint64_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError("config key '" + where + "." + key + "' must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

inline void get_double(const json& j, const std::string& where, const char* key, double& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number())
    throw ConfigError("config key '" + where + "." + key + "' must be a number");
  out = v.get<double>();
}

inline void get_string(const json& j, const std::string& where, const char* key,
                       std::string& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string())
    throw ConfigError("config key '" + where + "." + key + "' must be a string");
  out = v.get<std::string>();
}

}  // namespace cfgdetail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using namespace cfgdetail;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j, "", {"gen", "model", "train", "eval"});

  RunConfig rc;
  if (j.contains("gen")) {
    const json& g = j.at("gen");
    if (!g.is_object()) throw ConfigError("config section 'gen' must be an object");
    reject_unknown(g, "gen",
                   {"k", "m_s", "m_t", "m_p", "n_s", "n_p", "text_len", "vocab", "records",
                    "seed"});
    get_int(g, "gen", "k", rc.gen.k);
    get_int(g, "gen", "m_s", rc.gen.m_s);
    get_int(g, "gen", "m_t", rc.gen.m_t);
    get_int(g, "gen", "m_p", rc.gen.m_p);
    get_int(g, "gen", "n_s", rc.gen.n_s);
    get_int(g, "gen", "n_p", rc.gen.n_p);
    get_int(g, "gen", "text_len", rc.gen.text_len);
    get_int(g, "gen", "vocab", rc.gen.vocab);
    get_int(g, "gen", "records", rc.gen.records);
    get_u64(g, "gen", "seed", rc.gen.seed);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("config section 'model' must be an object");
    reject_unknown(m, "model",
                   {"c", "d", "embed", "enc_hidden", "text_hidden", "dec_hidden",
                    "dec_text_hidden", "flow_layers", "flow_hidden", "heads"});
    ModelConfig& mc = rc.train.model;
    get_int(m, "model", "c", mc.c);
    get_int(m, "model", "d", mc.d);
    get_int(m, "model", "embed", mc.embed);
    get_int(m, "model", "enc_hidden", mc.enc_hidden);
    get_int(m, "model", "text_hidden", mc.text_hidden);
    get_int(m, "model", "dec_hidden", mc.dec_hidden);
    get_int(m, "model", "dec_text_hidden", mc.dec_text_hidden);
    get_int(m, "model", "flow_layers", mc.flow_layers);
    get_int(m, "model", "flow_hidden", mc.flow_hidden);
    get_int(m, "model", "heads", mc.heads);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (!t.is_object()) throw ConfigError("config section 'train' must be an object");
    reject_unknown(t, "train",
                   {"lr", "batch", "steps", "seed", "w_rec", "w_flow", "w_nce", "clip_norm",
                    "align_mode", "query_policy"});
    get_double(t, "train", "lr", rc.train.lr);
    get_int(t, "train", "batch", rc.train.batch);
    get_int(t, "train", "steps", rc.train.steps);
    get_u64(t, "train", "seed", rc.train.seed);
    get_double(t, "train", "w_rec", rc.train.w_rec);
    get_double(t, "train", "w_flow", rc.train.w_flow);
    get_double(t, "train", "w_nce", rc.train.w_nce);
    get_double(t, "train", "clip_norm", rc.train.clip_norm);
    get_string(t, "train", "align_mode", rc.train.align_mode);
    get_string(t, "train", "query_policy", rc.train.query_policy);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (!e.is_object()) throw ConfigError("config section 'eval' must be an object");
    reject_unknown(e, "eval", {"gallery", "seed", "caption_k", "caption_records"});
    get_int(e, "eval", "gallery", rc.eval.gallery);
    get_u64(e, "eval", "seed", rc.eval.seed);
    get_int(e, "eval", "caption_k", rc.eval.caption_k);
    get_int(e, "eval", "caption_records", rc.eval.caption_records);
  }

  rc.sync_model_dims();
  rc.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace trimodal::model

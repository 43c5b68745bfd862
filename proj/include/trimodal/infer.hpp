#pragma once

// Inference on a trained parameter table: cross-modal retrieval against a
// photo gallery and caption sampling through the text flow.
//
// Retrieval scores stay in log space; the critic's exp is monotone so the
// ranking is identical and overflow never enters. Ranking ties break toward
// the lower gallery index. Captioning keeps only the query's shared slice and
// draws the text-specific slice from the flow prior, so the caption depends
// on the input purely through z_alpha.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "trimodal/align.hpp"
#include "trimodal/cinn.hpp"
#include "trimodal/decoders.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/errors.hpp"
#include "trimodal/fusion.hpp"
#include "trimodal/params.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::model {

// =========================================================================
// Bounded parallelism
// =========================================================================

// Worker cap from TRIMODAL_THREADS; unset or 0 means auto (hardware count).
inline int thread_budget() {
  const char* env = std::getenv("TRIMODAL_THREADS");
  if (env && *env) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (!end || *end != '\0' || v < 0 || v > 4096)
      throw ConfigError("TRIMODAL_THREADS must be an integer in [0, 4096], got '" +
                        std::string(env) + "'");
    if (v > 0) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across at most thread_budget() workers. The
// callable must be safe to run concurrently on disjoint indices.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = std::min(n, thread_budget());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// =========================================================================
// Batched encoding drivers
// =========================================================================

struct EncodedRows {
  std::vector<std::vector<double>> tot, alpha, beta;
};

namespace detail {

inline EncodedRows split_rows(const Tensor& tot, int d) {
  EncodedRows out;
  int n = tot.shape[0], c = tot.shape[1];
  out.tot.resize(static_cast<std::size_t>(n));
  out.alpha.resize(static_cast<std::size_t>(n));
  out.beta.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    auto row = tot.data.begin() + static_cast<std::ptrdiff_t>(r) * c;
    out.tot[static_cast<std::size_t>(r)].assign(row, row + c);
    out.alpha[static_cast<std::size_t>(r)].assign(row, row + d);
    out.beta[static_cast<std::size_t>(r)].assign(row + d, row + c);
  }
  return out;
}

}  // namespace detail

// Encodes a batch of sketch ("skc") or photo ("pho") observation rows.
inline EncodedRows encode_vectors(const ParamTable& table, const ModelConfig& mc,
                                  const std::string& which,
                                  const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ContractError("encode_vectors: empty batch");
  int n_obs = which == "skc" ? mc.n_s : mc.n_p;
  int n = static_cast<int>(rows.size());
  Tensor x = Tensor::zeros({n, n_obs});
  for (int r = 0; r < n; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != n_obs)
      throw ContractError("encode_vectors: row " + std::to_string(r) + " has " +
                          std::to_string(rows[static_cast<std::size_t>(r)].size()) +
                          " values, expected " + std::to_string(n_obs));
    for (int j = 0; j < n_obs; ++j)
      x.at(r, j) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
  }
  Graph g;
  ParamBinder P(g, table, false);
  auto xin = g.input("x", {n, n_obs});
  g.mark_output("tot", encode_vector_g(g, P, mc, which, xin).tot);
  Bindings b = as_bindings(table);
  b["x"] = std::move(x);
  return detail::split_rows(g.evaluate(b)["tot"], mc.d);
}

inline EncodedRows encode_texts(const ParamTable& table, const ModelConfig& mc,
                                const std::vector<std::vector<int>>& tokens) {
  if (tokens.empty()) throw ContractError("encode_texts: empty batch");
  Graph g;
  ParamBinder P(g, table, false);
  g.mark_output("tot", encode_text_g(g, P, mc, tokens).tot);
  Bindings b = as_bindings(table);
  return detail::split_rows(g.evaluate(b)["tot"], mc.d);
}

// =========================================================================
// Retrieval
// =========================================================================

struct RetrievalResult {
  std::vector<int> ranking;     // gallery indices, best match first
  std::vector<double> scores;   // log critic value per ranked item, non-increasing
  std::string mode;             // "s" | "t" | "st"
};

// Pools one batch of queries into joint query embeddings. `mode` selects the
// modalities; the corresponding argument must carry one entry per query.
inline std::vector<std::vector<double>> query_etas(
    const ParamTable& table, const ModelConfig& mc, const std::string& mode,
    const std::vector<std::vector<double>>& sketches,
    const std::vector<std::vector<int>>& texts) {
  if (mode != "s" && mode != "t" && mode != "st")
    throw ContractError("query mode must be s/t/st, got '" + mode + "'");
  bool use_s = mode != "t", use_t = mode != "s";
  std::size_t n = use_s ? sketches.size() : texts.size();
  if (n == 0) throw ContractError("query_etas: empty query batch");
  if (use_s && sketches.size() != n) throw ContractError("query_etas: sketch batch size");
  if (use_t && texts.size() != n)
    throw ContractError("query_etas: mode '" + mode + "' needs " + std::to_string(n) +
                        " text queries, got " + std::to_string(texts.size()));

  Graph g;
  ParamBinder P(g, table, false);
  Bindings b = as_bindings(table);
  std::vector<Value> elems;
  if (use_s) {
    int nb = static_cast<int>(n);
    Tensor xs = Tensor::zeros({nb, mc.n_s});
    for (int r = 0; r < nb; ++r) {
      if (static_cast<int>(sketches[static_cast<std::size_t>(r)].size()) != mc.n_s)
        throw ContractError("query_etas: sketch row dim");
      for (int j = 0; j < mc.n_s; ++j)
        xs.at(r, j) = sketches[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
    }
    auto xin = g.input("xs", {nb, mc.n_s});
    b["xs"] = std::move(xs);
    elems.push_back(encode_vector_g(g, P, mc, "skc", xin).alpha);
  }
  if (use_t) elems.push_back(encode_text_g(g, P, mc, texts).alpha);
  g.mark_output("eta", pool_set_g(g, P, mc, elems));
  Tensor eta = g.evaluate(b)["eta"];
  std::vector<std::vector<double>> out(n);
  for (std::size_t r = 0; r < n; ++r)
    out[r].assign(eta.data.begin() + static_cast<std::ptrdiff_t>(r) * mc.d,
                  eta.data.begin() + static_cast<std::ptrdiff_t>(r + 1) * mc.d);
  return out;
}

// Ranks precomputed gallery embeddings against one pooled query. This is the
// scoring seam: anything producing a z_eta (including a synthetic one) ranks
// through the identical path.
inline RetrievalResult rank_gallery(const ParamTable& table,
                                    const std::vector<std::vector<double>>& gallery_alpha,
                                    const std::vector<double>& z_eta, const std::string& mode) {
  int n = static_cast<int>(gallery_alpha.size());
  if (n == 0) throw ContractError("rank_gallery: empty gallery");
  std::vector<double> raw(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    raw[static_cast<std::size_t>(i)] =
        log_align_score(table, z_eta, gallery_alpha[static_cast<std::size_t>(i)]);
  });
  RetrievalResult r;
  r.mode = mode;
  r.ranking.resize(static_cast<std::size_t>(n));
  std::iota(r.ranking.begin(), r.ranking.end(), 0);
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](int a, int bdx) {
    return raw[static_cast<std::size_t>(a)] > raw[static_cast<std::size_t>(bdx)];
  });
  r.scores.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    r.scores[static_cast<std::size_t>(i)] = raw[static_cast<std::size_t>(r.ranking[static_cast<std::size_t>(i)])];
  return r;
}

// One-query convenience: encodes the gallery and the query, then ranks.
inline RetrievalResult retrieve(const ParamTable& table, const ModelConfig& mc,
                                const std::vector<std::vector<double>>& gallery_photos,
                                const std::string& mode, const std::vector<double>& sketch,
                                const std::vector<int>& text) {
  if (gallery_photos.empty()) throw ContractError("retrieve: empty gallery");
  auto gal = encode_vectors(table, mc, "pho", gallery_photos);
  std::vector<std::vector<double>> s;
  std::vector<std::vector<int>> t;
  if (mode != "t") s.push_back(sketch);
  if (mode != "s") t.push_back(text);
  auto eta = query_etas(table, mc, mode, s, t);
  return rank_gallery(table, gal.alpha, eta[0], mode);
}

// Rank of each query's paired gallery item (1-based): queries and gallery are
// index-aligned, so query i's true match is gallery item i.
inline std::vector<int> true_ranks(const ParamTable& table, const ModelConfig& mc,
                                   const std::string& mode,
                                   const std::vector<std::vector<double>>& sketches,
                                   const std::vector<std::vector<int>>& texts,
                                   const std::vector<std::vector<double>>& gallery_photos) {
  if (gallery_photos.empty()) throw ContractError("true_ranks: empty gallery");
  auto gal = encode_vectors(table, mc, "pho", gallery_photos);
  auto etas = query_etas(table, mc, mode, sketches, texts);
  if (etas.size() != gallery_photos.size())
    throw ContractError("true_ranks: query and gallery counts differ");
  int n = static_cast<int>(etas.size());
  std::vector<int> ranks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto res = rank_gallery(table, gal.alpha, etas[static_cast<std::size_t>(i)], mode);
    auto it = std::find(res.ranking.begin(), res.ranking.end(), i);
    ranks[static_cast<std::size_t>(i)] = static_cast<int>(it - res.ranking.begin()) + 1;
  }
  return ranks;
}

// =========================================================================
// Caption sampling
// =========================================================================

struct CaptionResult {
  std::vector<std::vector<int>> candidates;  // token sequences, EOS stripped
  std::vector<std::uint64_t> seeds;          // per-candidate draw seed
  std::string source;                        // "skc" | "pho"
};

// One candidate from one recorded seed: eps ~ N(0, I) from that seed runs
// through the text flow conditioned on alpha, and the decoder reads
// [alpha; flowed eps] greedily.
inline std::vector<int> caption_from_seed(const ParamTable& table, const ModelConfig& mc,
                                          const std::vector<double>& alpha,
                                          std::uint64_t seed, int max_len) {
  if (static_cast<int>(alpha.size()) != mc.d)
    throw ContractError("caption: alpha dim " + std::to_string(alpha.size()) + ", expected " +
                        std::to_string(mc.d));
  FlowSpec fs = FlowSpec::from(mc);
  Rng draw(seed);
  std::vector<double> eps(static_cast<std::size_t>(fs.q));
  for (auto& v : eps) v = draw.normal();
  auto beta = flowrt::forward(table, "flow.T", fs, std::move(eps), alpha).z;
  std::vector<double> z_tot = alpha;
  z_tot.insert(z_tot.end(), beta.begin(), beta.end());
  return greedy_decode(table, mc, z_tot, max_len);
}

// k caption candidates for one shared-slice embedding. Each candidate's seed
// is recorded so it can be reproduced in isolation.
inline CaptionResult caption_from_alpha(const ParamTable& table, const ModelConfig& mc,
                                        const std::vector<double>& alpha, int k,
                                        std::uint64_t seed, int max_len) {
  if (k < 1) throw ContractError("caption: k must be >= 1, got " + std::to_string(k));
  if (max_len < 1) throw ContractError("caption: max_len must be >= 1");
  Rng master(seed);
  CaptionResult out;
  out.candidates.reserve(static_cast<std::size_t>(k));
  out.seeds.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    std::uint64_t sub = master.next_u64();
    out.seeds.push_back(sub);
    out.candidates.push_back(caption_from_seed(table, mc, alpha, sub, max_len));
  }
  return out;
}

// Captions a raw sketch or photo row. Only the shared slice of its encoding
// is kept; the modality-specific slice is redrawn from the flow prior.
inline CaptionResult caption(const ParamTable& table, const ModelConfig& mc,
                             const std::string& which, const std::vector<double>& row, int k,
                             std::uint64_t seed, int max_len = 0) {
  if (which != "skc" && which != "pho")
    throw ContractError("caption: source must be 'skc' or 'pho', got '" + which + "'");
  if (max_len == 0) max_len = mc.text_len;
  auto enc = encode_vectors(table, mc, which, {row});
  CaptionResult out = caption_from_alpha(table, mc, enc.alpha[0], k, seed, max_len);
  out.source = which;
  return out;
}

}  // namespace trimodal::model

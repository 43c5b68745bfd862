#pragma once

// Synthetic aligned triplets (sketch vector, token sequence, photo vector).
//
// A shared latent s plus per-modality nuisance u drive all three views:
//   sketch = tanh(A_S [s;u_S])     photo = tanh(A_P [s;u_P])
//   text_j = bucket((B_T [s;u_T])_j)  over `vocab` equal bins on [-3,3]
// Mixing matrices are drawn first, then records sequentially, so a longer
// run with the same seed extends a shorter one record-for-record. Records
// are stored as f32 exactly as they appear on disk.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"
#include "trimodal/io.hpp"
#include "trimodal/rng.hpp"

namespace trimodal::synth {

struct GenConfig {
  int k = 8;          // shared latent dim
  int m_s = 4;        // sketch nuisance dim
  int m_t = 4;        // text nuisance dim
  int m_p = 4;        // photo nuisance dim
  int n_s = 32;       // sketch observation dim
  int n_p = 32;       // photo observation dim
  int text_len = 12;  // tokens per record
  int vocab = 64;     // data token count (model adds BOS/EOS on top)
  int records = 2000;
  std::uint64_t seed = 7;

  // Nuisance dims may be zero (noise-free views); everything else >= 1.
  void validate() const {
    auto pos = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
    };
    auto nonneg = [](int v, const char* name) {
      if (v < 0) throw ConfigError(std::string(name) + " must be >= 0, got " + std::to_string(v));
    };
    pos(k, "k");
    nonneg(m_s, "m_s");
    nonneg(m_t, "m_t");
    nonneg(m_p, "m_p");
    pos(n_s, "n_s");
    pos(n_p, "n_p");
    pos(text_len, "text_len");
    pos(vocab, "vocab");
    pos(records, "records");
  }

  bool operator==(const GenConfig&) const = default;
};

// Bin index of one projection coordinate: clamp to [-3,3], split into
// `vocab` equal bins, right edge folded into the last bin.
inline int bucket_token(double y, int vocab) {
  if (y < -3.0) y = -3.0;
  if (y > 3.0) y = 3.0;
  int b = static_cast<int>(std::floor((y + 3.0) / 6.0 * vocab));
  if (b >= vocab) b = vocab - 1;
  if (b < 0) b = 0;
  return b;
}

struct TripletDataset {
  GenConfig cfg;
  std::vector<float> sketch;         // records x n_s
  std::vector<float> photo;          // records x n_p
  std::vector<std::uint32_t> text;   // records x text_len
  std::vector<float> gen_s, gen_p, gen_t;  // A_S, A_P, B_T row-major

  std::vector<double> sketch_row(int i) const { return row(sketch, i, cfg.n_s); }
  std::vector<double> photo_row(int i) const { return row(photo, i, cfg.n_p); }
  std::vector<int> tokens(int i) const {
    std::vector<int> out(static_cast<std::size_t>(cfg.text_len));
    for (int j = 0; j < cfg.text_len; ++j)
      out[static_cast<std::size_t>(j)] =
          static_cast<int>(text[static_cast<std::size_t>(i) * cfg.text_len + j]);
    return out;
  }

 private:
  static std::vector<double> row(const std::vector<float>& v, int i, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(i) * n + j];
    return out;
  }
};

namespace detail {

inline std::vector<double> draw_matrix(Rng& rng, int rows, int cols) {
  double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = sd * rng.normal();
  return m;
}

inline void apply(const std::vector<double>& m, int rows, int cols,
                  const std::vector<double>& x, std::vector<double>& y) {
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += m[static_cast<std::size_t>(i) * cols + j] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = s;
  }
}

inline std::vector<float> to_f32(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace detail

inline TripletDataset generate(const GenConfig& cfg) {
  cfg.validate();
  TripletDataset ds;
  ds.cfg = cfg;
  Rng rng(cfg.seed);

  auto a_s = detail::draw_matrix(rng, cfg.n_s, cfg.k + cfg.m_s);
  auto a_p = detail::draw_matrix(rng, cfg.n_p, cfg.k + cfg.m_p);
  auto b_t = detail::draw_matrix(rng, cfg.text_len, cfg.k + cfg.m_t);
  ds.gen_s = detail::to_f32(a_s);
  ds.gen_p = detail::to_f32(a_p);
  ds.gen_t = detail::to_f32(b_t);

  ds.sketch.reserve(static_cast<std::size_t>(cfg.records) * cfg.n_s);
  ds.photo.reserve(static_cast<std::size_t>(cfg.records) * cfg.n_p);
  ds.text.reserve(static_cast<std::size_t>(cfg.records) * cfg.text_len);

  std::vector<double> shared(static_cast<std::size_t>(cfg.k));
  std::vector<double> in_s(static_cast<std::size_t>(cfg.k + cfg.m_s));
  std::vector<double> in_t(static_cast<std::size_t>(cfg.k + cfg.m_t));
  std::vector<double> in_p(static_cast<std::size_t>(cfg.k + cfg.m_p));
  std::vector<double> out_s(static_cast<std::size_t>(cfg.n_s));
  std::vector<double> out_t(static_cast<std::size_t>(cfg.text_len));
  std::vector<double> out_p(static_cast<std::size_t>(cfg.n_p));

  for (int r = 0; r < cfg.records; ++r) {
    for (auto& v : shared) v = rng.normal();
    std::copy(shared.begin(), shared.end(), in_s.begin());
    for (int j = 0; j < cfg.m_s; ++j) in_s[static_cast<std::size_t>(cfg.k + j)] = rng.normal();
    std::copy(shared.begin(), shared.end(), in_t.begin());
    for (int j = 0; j < cfg.m_t; ++j) in_t[static_cast<std::size_t>(cfg.k + j)] = rng.normal();
    std::copy(shared.begin(), shared.end(), in_p.begin());
    for (int j = 0; j < cfg.m_p; ++j) in_p[static_cast<std::size_t>(cfg.k + j)] = rng.normal();

    detail::apply(a_s, cfg.n_s, cfg.k + cfg.m_s, in_s, out_s);
    for (double v : out_s) ds.sketch.push_back(static_cast<float>(std::tanh(v)));

    detail::apply(b_t, cfg.text_len, cfg.k + cfg.m_t, in_t, out_t);
    for (double v : out_t) ds.text.push_back(static_cast<std::uint32_t>(bucket_token(v, cfg.vocab)));

    detail::apply(a_p, cfg.n_p, cfg.k + cfg.m_p, in_p, out_p);
    for (double v : out_p) ds.photo.push_back(static_cast<float>(std::tanh(v)));
  }
  return ds;
}

// Copies records [from, from + count) into a standalone dataset that keeps the
// same mixing matrices. Generating records + extra and slicing off the tail
// yields a held-out set from the same world as the training records.
inline TripletDataset slice_records(const TripletDataset& ds, int from, int count) {
  if (from < 0 || count < 1 || from + count > ds.cfg.records)
    throw ContractError("slice_records: range [" + std::to_string(from) + ", " +
                        std::to_string(from + count) + ") outside " +
                        std::to_string(ds.cfg.records) + " records");
  TripletDataset out;
  out.cfg = ds.cfg;
  out.cfg.records = count;
  out.gen_s = ds.gen_s;
  out.gen_p = ds.gen_p;
  out.gen_t = ds.gen_t;
  auto take = [&](const auto& src, auto& dst, int width) {
    dst.assign(src.begin() + static_cast<std::ptrdiff_t>(from) * width,
               src.begin() + static_cast<std::ptrdiff_t>(from + count) * width);
  };
  take(ds.sketch, out.sketch, ds.cfg.n_s);
  take(ds.photo, out.photo, ds.cfg.n_p);
  take(ds.text, out.text, ds.cfg.text_len);
  return out;
}

// ---------------------------------------------------------------------------
// File format: "TRI1", version, config, then SKCH / PHOT / TEXT / GENM
// sections, each a 4-char tag + u64 payload size.

inline constexpr char kDatasetMagic[] = "TRI1";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save(const TripletDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatError::Kind::Io, "cannot open '" + path + "' for writing");
  io::write_tag(os, kDatasetMagic);
  io::write_u32(os, kDatasetVersion);
  const GenConfig& c = ds.cfg;
  for (int v : {c.k, c.m_s, c.m_t, c.m_p, c.n_s, c.n_p, c.text_len, c.vocab, c.records})
    io::write_u32(os, static_cast<std::uint32_t>(v));
  io::write_u64(os, c.seed);

  io::write_section_header(os, "SKCH", ds.sketch.size() * 4);
  io::write_f32_vec(os, ds.sketch);
  io::write_section_header(os, "PHOT", ds.photo.size() * 4);
  io::write_f32_vec(os, ds.photo);
  io::write_section_header(os, "TEXT", ds.text.size() * 4);
  io::write_u32_vec(os, ds.text);

  std::uint64_t genm_bytes = 8 * 3 + (ds.gen_s.size() + ds.gen_p.size() + ds.gen_t.size()) * 4;
  io::write_section_header(os, "GENM", genm_bytes);
  auto put = [&](const std::vector<float>& m, int rows, int cols) {
    io::write_u32(os, static_cast<std::uint32_t>(rows));
    io::write_u32(os, static_cast<std::uint32_t>(cols));
    io::write_f32_vec(os, m);
  };
  put(ds.gen_s, c.n_s, c.k + c.m_s);
  put(ds.gen_p, c.n_p, c.k + c.m_p);
  put(ds.gen_t, c.text_len, c.k + c.m_t);
  os.flush();
  if (!os) throw FormatError(FormatError::Kind::Io, "write to '" + path + "' failed");
}

inline TripletDataset load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatError::Kind::Io, "cannot open '" + path + "'");
  io::expect_magic(is, kDatasetMagic, "dataset");
  io::expect_version(is, kDatasetVersion, "dataset");
  TripletDataset ds;
  GenConfig& c = ds.cfg;
  int* fields[] = {&c.k, &c.m_s, &c.m_t, &c.m_p, &c.n_s, &c.n_p, &c.text_len, &c.vocab, &c.records};
  for (int* f : fields) *f = static_cast<int>(io::read_u32(is, "dataset config"));
  c.seed = io::read_u64(is, "dataset config");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::InvalidData,
                      std::string("dataset config invalid: ") + e.what());
  }

  std::size_t ns = static_cast<std::size_t>(c.records) * c.n_s;
  std::size_t np = static_cast<std::size_t>(c.records) * c.n_p;
  std::size_t nt = static_cast<std::size_t>(c.records) * c.text_len;
  io::expect_section(is, "SKCH", ns * 4);
  ds.sketch = io::read_f32_vec(is, ns, "SKCH");
  io::expect_section(is, "PHOT", np * 4);
  ds.photo = io::read_f32_vec(is, np, "PHOT");
  io::expect_section(is, "TEXT", nt * 4);
  ds.text = io::read_u32_vec(is, nt, "TEXT");
  for (std::uint32_t t : ds.text)
    if (t >= static_cast<std::uint32_t>(c.vocab))
      throw FormatError(FormatError::Kind::InvalidData,
                        "TEXT token " + std::to_string(t) + " outside vocab " +
                            std::to_string(c.vocab),
                        "TEXT");

  std::size_t gs = static_cast<std::size_t>(c.n_s) * (c.k + c.m_s);
  std::size_t gp = static_cast<std::size_t>(c.n_p) * (c.k + c.m_p);
  std::size_t gt = static_cast<std::size_t>(c.text_len) * (c.k + c.m_t);
  io::expect_section(is, "GENM", 8 * 3 + (gs + gp + gt) * 4);
  auto get = [&](std::size_t count, int rows, int cols) {
    auto r = io::read_u32(is, "GENM dims");
    auto cc = io::read_u32(is, "GENM dims");
    if (r != static_cast<std::uint32_t>(rows) || cc != static_cast<std::uint32_t>(cols))
      throw FormatError(FormatError::Kind::InvalidData,
                        "GENM matrix " + std::to_string(r) + "x" + std::to_string(cc) +
                            " does not match config " + std::to_string(rows) + "x" +
                            std::to_string(cols),
                        "GENM");
    return io::read_f32_vec(is, count, "GENM");
  };
  ds.gen_s = get(gs, c.n_s, c.k + c.m_s);
  ds.gen_p = get(gp, c.n_p, c.k + c.m_p);
  ds.gen_t = get(gt, c.text_len, c.k + c.m_t);
  io::expect_eof(is, "dataset");
  return ds;
}

}  // namespace trimodal::synth

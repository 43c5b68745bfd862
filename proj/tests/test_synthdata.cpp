#include "trimodal/synthdata.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace trimodal;
using namespace trimodal::synth;

namespace {

namespace fs = std::filesystem;

struct TempFile {
  fs::path path;
  explicit TempFile(const char* stem) {
    path = fs::temp_directory_path() / (std::string(stem) + "-" + std::to_string(::getpid()) + ".bin");
  }
  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

GenConfig small() {
  GenConfig c;
  c.k = 4;
  c.m_s = 2;
  c.m_t = 2;
  c.m_p = 2;
  c.n_s = 6;
  c.n_p = 6;
  c.text_len = 5;
  c.vocab = 16;
  c.records = 20;
  c.seed = 99;
  return c;
}

TEST(Bucketing, EdgesAndMidpoints) {
  EXPECT_EQ(bucket_token(-10.0, 64), 0);
  EXPECT_EQ(bucket_token(-3.0, 64), 0);
  EXPECT_EQ(bucket_token(0.0, 64), 32);
  EXPECT_EQ(bucket_token(2.999, 64), 63);
  EXPECT_EQ(bucket_token(3.0, 64), 63);
  EXPECT_EQ(bucket_token(10.0, 64), 63);
  // bin width 6/16 = 0.375; -3 + 0.375 is the first boundary
  EXPECT_EQ(bucket_token(-2.63, 16), 0);
  EXPECT_EQ(bucket_token(-2.62, 16), 1);
}

TEST(Generate, SameSeedSameBytes) {
  auto a = generate(small());
  auto b = generate(small());
  EXPECT_EQ(a.sketch, b.sketch);
  EXPECT_EQ(a.photo, b.photo);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.gen_s, b.gen_s);
}

TEST(Generate, LongerRunExtendsShorterOne) {
  GenConfig c = small();
  auto a = generate(c);
  c.records = 7;
  auto b = generate(c);
  for (std::size_t i = 0; i < b.sketch.size(); ++i) EXPECT_EQ(a.sketch[i], b.sketch[i]);
  for (std::size_t i = 0; i < b.photo.size(); ++i) EXPECT_EQ(a.photo[i], b.photo[i]);
  for (std::size_t i = 0; i < b.text.size(); ++i) EXPECT_EQ(a.text[i], b.text[i]);
}

TEST(Generate, SeedChangesOutput) {
  auto a = generate(small());
  GenConfig c = small();
  c.seed = 100;
  auto b = generate(c);
  EXPECT_NE(a.sketch, b.sketch);
}

TEST(Generate, RangesRespected) {
  auto ds = generate(small());
  for (float v : ds.sketch) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  for (float v : ds.photo) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  for (std::uint32_t t : ds.text) EXPECT_LT(t, static_cast<std::uint32_t>(ds.cfg.vocab));
}

TEST(Generate, NoiseFreeViewsAllowed) {
  GenConfig c = small();
  c.m_s = 0;
  c.m_t = 0;
  c.m_p = 0;
  auto ds = generate(c);
  EXPECT_EQ(static_cast<int>(ds.sketch.size()), c.records * c.n_s);
}

TEST(Generate, InvalidDimsRejected) {
  GenConfig c = small();
  c.k = 0;
  EXPECT_THROW(generate(c), ConfigError);
  c = small();
  c.m_s = -1;
  EXPECT_THROW(generate(c), ConfigError);
  c = small();
  c.records = 0;
  EXPECT_THROW(generate(c), ConfigError);
}

// The shared factor must couple matched sketch/photo pairs much more than
// mismatched ones. Pearson correlation of coordinate sums over records.
TEST(Generate, SharedFactorCouplesMatchedPairs) {
  GenConfig c;
  c.records = 500;
  c.seed = 11;
  auto ds = generate(c);
  auto sums = [&](const std::vector<float>& v, int n, int offset) {
    std::vector<double> out(static_cast<std::size_t>(c.records));
    for (int i = 0; i < c.records; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += v[static_cast<std::size_t>((i + offset) % c.records) * n + j];
      out[static_cast<std::size_t>(i)] = s;
    }
    return out;
  };
  auto pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
  };
  auto s_sum = sums(ds.sketch, c.n_s, 0);
  auto p_sum = sums(ds.photo, c.n_p, 0);
  auto p_rolled = sums(ds.photo, c.n_p, 1);
  double matched = std::abs(pearson(s_sum, p_sum));
  double mismatched = std::abs(pearson(s_sum, p_rolled));
  EXPECT_GT(matched, 0.2);
  EXPECT_LT(mismatched, 0.15);
  EXPECT_GT(matched, mismatched + 0.1);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  TempFile f("trimodal-ds-roundtrip");
  auto ds = generate(small());
  save(ds, f.path.string());
  auto back = load(f.path.string());
  EXPECT_EQ(ds.cfg, back.cfg);
  EXPECT_EQ(ds.sketch, back.sketch);
  EXPECT_EQ(ds.photo, back.photo);
  EXPECT_EQ(ds.text, back.text);
  EXPECT_EQ(ds.gen_s, back.gen_s);
  EXPECT_EQ(ds.gen_p, back.gen_p);
  EXPECT_EQ(ds.gen_t, back.gen_t);
}

TEST(DatasetFile, SaveIsDeterministic) {
  TempFile f1("trimodal-ds-det1"), f2("trimodal-ds-det2");
  save(generate(small()), f1.path.string());
  save(generate(small()), f2.path.string());
  std::ifstream a(f1.path, std::ios::binary), b(f2.path, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  EXPECT_EQ(sa, sb);
}

void corrupt_byte(const fs::path& p, std::streamoff off, char value) {
  std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(off);
  f.write(&value, 1);
}

TEST(DatasetFile, BadMagicDetected) {
  TempFile f("trimodal-ds-magic");
  save(generate(small()), f.path.string());
  corrupt_byte(f.path, 0, 'X');
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::BadMagic);
  }
}

TEST(DatasetFile, BadVersionDetected) {
  TempFile f("trimodal-ds-version");
  save(generate(small()), f.path.string());
  corrupt_byte(f.path, 4, 9);
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::BadVersion);
  }
}

TEST(DatasetFile, TruncationDetected) {
  TempFile f("trimodal-ds-trunc");
  save(generate(small()), f.path.string());
  auto size = fs::file_size(f.path);
  fs::resize_file(f.path, size - 10);
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::Truncated);
  }
}

TEST(DatasetFile, WrongSectionTagDetected) {
  TempFile f("trimodal-ds-section");
  save(generate(small()), f.path.string());
  // first section tag starts after magic+version+9*u32+u64 = 4+4+36+8 = 52
  corrupt_byte(f.path, 52, 'Z');
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::BadSection);
  }
}

TEST(DatasetFile, TrailingBytesDetected) {
  TempFile f("trimodal-ds-trailing");
  save(generate(small()), f.path.string());
  std::ofstream app(f.path, std::ios::binary | std::ios::app);
  app.write("junk", 4);
  app.close();
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::BadSection);
  }
}

TEST(DatasetFile, OutOfVocabTokenDetected) {
  TempFile f("trimodal-ds-vocab");
  auto ds = generate(small());
  ds.text[0] = 999;
  save(ds, f.path.string());
  try {
    load(f.path.string());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind, FormatError::Kind::InvalidData);
  }
}

}  // namespace

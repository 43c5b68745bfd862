// End-to-end checks of the command-line binary: exit codes, output contracts,
// and byte-level reproducibility. Each test shells out to the real
// executable, whose path arrives via a compile definition.

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace {

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(TRIMODAL_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

const char* kConfig = R"({
  "gen": {"k": 2, "m_s": 1, "m_t": 1, "m_p": 1, "n_s": 4, "n_p": 4,
          "text_len": 3, "vocab": 5, "records": 16, "seed": 3},
  "model": {"c": 6, "d": 4, "embed": 3, "enc_hidden": 5, "text_hidden": 4,
            "dec_hidden": 5, "dec_text_hidden": 4, "flow_layers": 2,
            "flow_hidden": 4, "heads": 2},
  "train": {"lr": 0.001, "batch": 4, "steps": 4, "seed": 11},
  "eval": {"gallery": 6, "seed": 77, "caption_k": 2, "caption_records": 1}
})";

// Shared workspace: the fixture generates one dataset and one checkpoint that
// read-only tests reuse.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = testing::TempDir() + "trimodal_cli";
    std::string mk = "mkdir -p " + dir;
    ASSERT_EQ(system(mk.c_str()), 0);
    spit(cfg(), kConfig);
    auto g = run_cli("gen-data --config " + cfg() + " --out " + data());
    ASSERT_EQ(g.code, 0) << g.out;
    auto t = run_cli("train --data " + data() + " --config " + cfg() + " --out " + ckpt());
    ASSERT_EQ(t.code, 0) << t.out;
  }
  static std::string cfg() { return dir + "/run.json"; }
  static std::string data() { return dir + "/data.bin"; }
  static std::string ckpt() { return dir + "/model.ckpt"; }
  static std::string dir;
};
std::string Cli::dir;

TEST_F(Cli, GenDataPrintsCountsAndIsByteReproducible) {
  auto a = run_cli("gen-data --config " + cfg() + " --out " + dir + "/a.bin");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("records 16"), std::string::npos);
  EXPECT_NE(a.out.find("seed 3"), std::string::npos);
  auto b = run_cli("gen-data --config " + cfg() + " --out " + dir + "/b.bin");
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir + "/a.bin"), slurp(dir + "/b.bin"));
  EXPECT_FALSE(slurp(dir + "/a.bin").empty());
}

TEST_F(Cli, UsageAndConfigProblemsExitOne) {
  EXPECT_EQ(run_cli("gen-data --config " + cfg()).code, 1);       // missing --out
  EXPECT_EQ(run_cli("no-such-command").code, 1);
  EXPECT_EQ(run_cli("").code, 1);                                 // no subcommand

  spit(dir + "/bad_records.json", R"({"gen": {"records": 0}})");
  EXPECT_EQ(run_cli("gen-data --config " + dir + "/bad_records.json --out " + dir + "/x.bin").code,
            1);

  spit(dir + "/unknown_key.json", R"({"gen": {"recordz": 5}})");
  auto r = run_cli("gen-data --config " + dir + "/unknown_key.json --out " + dir + "/x.bin");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("recordz"), std::string::npos);

  spit(dir + "/not_json.json", "steps: 5");
  EXPECT_EQ(run_cli("gen-data --config " + dir + "/not_json.json --out " + dir + "/x.bin").code,
            1);

  EXPECT_EQ(run_cli("gen-data --config " + dir + "/absent.json --out " + dir + "/x.bin").code, 1);
}

TEST_F(Cli, TrainIsSeedReproducibleAndStepsOverrideWorks) {
  std::string c1 = dir + "/c1.ckpt", c2 = dir + "/c2.ckpt";
  auto a = run_cli("train --data " + data() + " --config " + cfg() + " --out " + c1);
  ASSERT_EQ(a.code, 0) << a.out;
  auto b = run_cli("train --data " + data() + " --config " + cfg() + " --out " + c2);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(c1), slurp(c2));

  std::string c0 = dir + "/c0.ckpt";
  auto z = run_cli("train --data " + data() + " --config " + cfg() + " --out " + c0 +
                   " --steps 0");
  ASSERT_EQ(z.code, 0) << z.out;
  EXPECT_NE(z.out.find("trained 0 steps"), std::string::npos);
  auto ins = run_cli("inspect-ckpt --ckpt " + c0);
  ASSERT_EQ(ins.code, 0);
  EXPECT_NE(ins.out.find("step 0"), std::string::npos);
  EXPECT_NE(ins.out.find("actnorm_ready 0"), std::string::npos);
}

TEST_F(Cli, TrainWritesParseableMetrics) {
  std::string m = dir + "/m.tsv";
  auto r = run_cli("train --data " + data() + " --config " + cfg() + " --out " + dir +
                   "/mm.ckpt --metrics " + m + " --steps 3");
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream is(m);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    std::istringstream ls(line);
    int step;
    double v[6];
    ls >> step >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5];
    EXPECT_FALSE(ls.fail()) << line;
    EXPECT_EQ(step, lines);
  }
  EXPECT_EQ(lines, 3);
}

TEST_F(Cli, PretrainCaptionProducesACheckpoint) {
  auto r = run_cli("pretrain-caption --data " + data() + " --config " + cfg() + " --out " + dir +
                   "/pre.ckpt --steps 2");
  ASSERT_EQ(r.code, 0) << r.out;
  auto ins = run_cli("inspect-ckpt --ckpt " + dir + "/pre.ckpt");
  EXPECT_NE(ins.out.find("step 2"), std::string::npos);

  auto warm = run_cli("train --data " + data() + " --config " + cfg() + " --out " + dir +
                      "/warm.ckpt --steps 1 --init " + dir + "/pre.ckpt");
  EXPECT_EQ(warm.code, 0) << warm.out;
}

TEST_F(Cli, RetrievePrintsAccuraciesAndOptionalRanking) {
  auto r = run_cli("retrieve --ckpt " + ckpt() + " --data " + data() + " --mode st");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("acc@1 "), std::string::npos);
  EXPECT_NE(r.out.find("acc@10 "), std::string::npos);
  EXPECT_EQ(r.out.find("ranking"), std::string::npos);

  auto q = run_cli("retrieve --ckpt " + ckpt() + " --data " + data() + " --mode s --query 2");
  ASSERT_EQ(q.code, 0) << q.out;
  EXPECT_NE(q.out.find("query 2 ranking"), std::string::npos);

  EXPECT_EQ(run_cli("retrieve --ckpt " + ckpt() + " --data " + data() + " --mode x").code, 1);
  EXPECT_EQ(
      run_cli("retrieve --ckpt " + ckpt() + " --data " + data() + " --mode s --query 99").code,
      1);
}

TEST_F(Cli, CaptionIsDeterministicForAFixedSeed) {
  std::string args = "caption --ckpt " + ckpt() + " --data " + data() + " --k 2 --seed 7";
  auto a = run_cli(args);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("candidate "), std::string::npos);
  EXPECT_NE(a.out.find("bleu4 "), std::string::npos);
  auto b = run_cli(args);
  EXPECT_EQ(a.out, b.out);
  auto c = run_cli("caption --ckpt " + ckpt() + " --data " + data() + " --k 2 --seed 8");
  EXPECT_EQ(c.code, 0);
  EXPECT_NE(c.out, a.out);  // different seeds list different draw ids
}

TEST_F(Cli, EvalWritesAReport) {
  std::string rep = dir + "/report.txt";
  auto r = run_cli("eval --ckpt " + ckpt() + " --config " + cfg() + " --mode st --out " + rep);
  ASSERT_EQ(r.code, 0) << r.out;
  std::string text = slurp(rep);
  EXPECT_NE(text.find("retrieval.mode\tst"), std::string::npos);
  EXPECT_NE(text.find("retrieval.acc@1\t"), std::string::npos);
  EXPECT_NE(text.find("caption.bleu4\t"), std::string::npos);

  auto s = run_cli("eval --ckpt " + ckpt() + " --config " + cfg() + " --mode st");
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("retrieval.acc@1\t"), std::string::npos);
}

TEST_F(Cli, CorruptFilesExitTwo) {
  std::string bad = dir + "/bad.ckpt";
  spit(bad, "XXXX not a checkpoint");
  EXPECT_EQ(run_cli("inspect-ckpt --ckpt " + bad).code, 2);
  EXPECT_EQ(run_cli("retrieve --ckpt " + bad + " --data " + data() + " --mode s").code, 2);

  std::string good = slurp(ckpt());
  spit(dir + "/trunc.ckpt", good.substr(0, good.size() / 2));
  EXPECT_EQ(run_cli("inspect-ckpt --ckpt " + dir + "/trunc.ckpt").code, 2);

  spit(dir + "/bad.bin", "TRIX");
  EXPECT_EQ(run_cli("retrieve --ckpt " + ckpt() + " --data " + dir + "/bad.bin --mode s").code,
            2);
}

TEST_F(Cli, GradcheckPassesOnAFreshModel) {
  auto r = run_cli("gradcheck");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos);
}

TEST_F(Cli, InspectListsEveryParameter) {
  auto r = run_cli("inspect-ckpt --ckpt " + ckpt());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("align_mode nce"), std::string::npos);
  EXPECT_NE(r.out.find("param align.w [4x4]"), std::string::npos);
  EXPECT_NE(r.out.find("param mab.seed [1x4]"), std::string::npos);

  // The announced count matches the number of listed entries.
  auto pos = r.out.find("params ");
  ASSERT_NE(pos, std::string::npos);
  int announced = std::stoi(r.out.substr(pos + 7));
  int listed = 0;
  for (std::size_t at = r.out.find("param ", pos + 7); at != std::string::npos;
       at = r.out.find("param ", at + 6))
    ++listed;
  EXPECT_EQ(listed, announced);
  EXPECT_GT(listed, 50);
}

}  // namespace

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mlcc/checkpoint.hpp"
#include "mlcc/config.hpp"
#include "mlcc/cost.hpp"
#include "mlcc/data.hpp"

using namespace mlcc;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

const std::string& work_dir() {
  static const std::string dir = [] {
    std::string d = "/tmp/mlcc_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run_cli(const std::string& args) {
  static int call = 0;
  const std::string tag = work_dir() + "/run" + std::to_string(call++);
  const std::string cmd = std::string(MLCC_BIN) + " " + args + " > " + tag +
                          ".out 2> " + tag + ".err";
  const int rc = std::system(cmd.c_str());
  RunResult result;
  result.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = slurp(tag + ".out");
  result.err = slurp(tag + ".err");
  return result;
}

std::string write_config(const std::string& name, const std::string& body) {
  const std::string path = work_dir() + "/" + name + ".ini";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(out));
  out << body;
  return path;
}

std::string base_config(const std::string& out_dir) {
  return
      "[model]\n"
      "kind = mlcc\n"
      "[schema]\n"
      "buckets = 32\n"
      "embedding_dim = 4\n"
      "channels = 1\n"
      "[plc]\n"
      "heads = 2\n"
      "widths = 4,3,2\n"
      "act = relu\n"
      "include_original = true\n"
      "[lc]\n"
      "enabled = true\n"
      "refined_dim = 3\n"
      "[readout]\n"
      "hidden = 8\n"
      "act = relu\n"
      "bias = true\n"
      "[train]\n"
      "lr = 0.005\n"
      "batch = 64\n"
      "epochs = 1\n"
      "optimizer = adaptive\n"
      "seed = 7\n"
      "eval_every = 10\n"
      "[data]\n"
      "source = synthetic\n"
      "n_fields = 5\n"
      "vocab = 20\n"
      "latent_dim = 3\n"
      "pairs = 0:1\n"
      "triples = 2:3:4\n"
      "pair_weight = 0.8\n"
      "triple_weight = 1.2\n"
      "noise = 0.1\n"
      "rows = 2000\n"
      "seed = 7\n"
      "[output]\n"
      "dir = " +
      out_dir + "\n";
}

}  // namespace

TEST_CASE("train writes a trace and a checkpoint") {
  const std::string out_dir = work_dir() + "/train_happy";
  const std::string cfg = write_config("happy", base_config(out_dir));
  const RunResult r = run_cli("train --config " + cfg);
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote " + out_dir + "/trace.csv") != std::string::npos);

  const std::string trace = slurp(out_dir + "/trace.csv");
  CHECK(trace.rfind("step,split,auc,logloss\n", 0) == 0);
  CHECK(trace.find(",test,") != std::string::npos);

  const std::string ckpt = slurp(out_dir + "/model.ckpt");
  REQUIRE(ckpt.size() > 8);
  CHECK(ckpt.substr(0, 4) == "MLCC");

  // The written checkpoint loads and matches the run configuration.
  const Model loaded = load_checkpoint(out_dir + "/model.ckpt");
  CHECK(loaded.cfg.kind == ModelKind::Mlcc);
  CHECK(loaded.cfg.schema.n_fields() == 5);
}

TEST_CASE("reruns with the same config are byte-identical") {
  const std::string dir = work_dir() + "/det";
  const std::string cfg = write_config("det", base_config(dir));
  CHECK(run_cli("train --config " + cfg).code == 0);
  const std::string trace_a = slurp(dir + "/trace.csv");
  const std::string ckpt_a = slurp(dir + "/model.ckpt");
  REQUIRE(!trace_a.empty());
  REQUIRE(!ckpt_a.empty());
  CHECK(run_cli("train --config " + cfg).code == 0);
  CHECK(trace_a == slurp(dir + "/trace.csv"));
  CHECK(ckpt_a == slurp(dir + "/model.ckpt"));
}

TEST_CASE("the seed flag changes the run") {
  const std::string dir_a = work_dir() + "/seed_a";
  const std::string dir_b = work_dir() + "/seed_b";
  const std::string cfg = write_config("seed", base_config("unused"));
  CHECK(run_cli("train --config " + cfg + " --out " + dir_a).code == 0);
  CHECK(run_cli("train --config " + cfg + " --seed 8 --out " + dir_b).code ==
        0);
  const std::string trace_a = slurp(dir_a + "/trace.csv");
  REQUIRE(!trace_a.empty());
  CHECK(trace_a != slurp(dir_b + "/trace.csv"));
}

TEST_CASE("invalid configs exit 2 and name the field") {
  std::string body = base_config("unused");
  const std::size_t pos = body.find("widths = 4,3,2");
  REQUIRE(pos != std::string::npos);
  body.replace(pos, 14, "widths = 5,3,2");
  const std::string cfg = write_config("badwidth", body);
  const RunResult r = run_cli("train --config " + cfg);
  CHECK(r.code == 2);
  CHECK(r.err.find("plc.widths") != std::string::npos);
}

TEST_CASE("count output matches the library exactly") {
  const std::string cfg_path = write_config("count", base_config("unused"));
  const RunResult table = run_cli("count --config " + cfg_path);
  CHECK(table.code == 0);
  CHECK(table.out.find("total") != std::string::npos);

  const RunResult csv = run_cli("count --csv --config " + cfg_path);
  CHECK(csv.code == 0);
  CHECK(csv.out == cost_csv(cost_report(load_config(cfg_path), 1)));

  const RunResult verified = run_cli("count --verify --config " + cfg_path);
  CHECK(verified.code == 0);
  CHECK(verified.out.find("verified") != std::string::npos);
}

TEST_CASE("doubling channels doubles the gc row end to end") {
  std::string one = base_config("unused");
  one.replace(one.find("kind = mlcc"), 11, "kind = mc_mlcc");
  std::string two = one;
  two.replace(two.find("channels = 1"), 12, "channels = 2");
  const std::string cfg1 = write_config("mc1", one);
  const std::string cfg2 = write_config("mc2", two);
  const RunResult r1 = run_cli("count --csv --config " + cfg1);
  const RunResult r2 = run_cli("count --csv --config " + cfg2);
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  const auto gc_params = [](const std::string& csv) {
    const std::size_t at = csv.find("\ngc,");
    REQUIRE(at != std::string::npos);
    return std::stoull(csv.substr(at + 4));
  };
  CHECK(gc_params(r2.out) == 2 * gc_params(r1.out));
}

TEST_CASE("sweep prints monotone csv rows") {
  const std::string cfg = write_config("sweep", base_config("unused"));
  const RunResult r = run_cli("sweep --config " + cfg + " --axis H --values 1,2,4");
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "axis,value,params,flops");
  std::vector<unsigned long long> params;
  while (std::getline(lines, line)) {
    REQUIRE(line.rfind("H,", 0) == 0);
    const std::size_t comma = line.find(',', 2);
    params.push_back(std::stoull(line.substr(comma + 1)));
  }
  REQUIRE(params.size() == 3);
  CHECK(params[0] < params[1]);
  CHECK(params[1] < params[2]);

  CHECK(run_cli("sweep --config " + cfg + " --axis Q --values 1,2").code == 2);
  CHECK(run_cli("sweep --config " + cfg + " --axis H").code == 2);
}

TEST_CASE("gradcheck command passes") {
  const RunResult r = run_cli("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("gradcheck passed") != std::string::npos);
  CHECK(r.out.find("mc_mlcc_s4") != std::string::npos);
}

TEST_CASE("gen-data writes a reproducible csv") {
  std::string body = base_config("unused");
  body.replace(body.find("rows = 2000"), 11, "rows = 120");
  const std::string cfg = write_config("gen", body);
  const std::string dir_a = work_dir() + "/gen_a";
  const std::string dir_b = work_dir() + "/gen_b";
  const RunResult r = run_cli("gen-data --config " + cfg + " --out " + dir_a);
  CHECK(r.code == 0);
  CHECK(r.out.find("120 rows") != std::string::npos);
  const std::string csv = slurp(dir_a + "/synthetic.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 121);
  CHECK(csv.rfind("label,f0,f1,f2,f3,f4\n", 0) == 0);

  CHECK(run_cli("gen-data --config " + cfg + " --out " + dir_b).code == 0);
  CHECK(csv == slurp(dir_b + "/synthetic.csv"));

  // The emitted file is loadable against the same schema with no skips.
  LoadStats stats;
  const Dataset ds =
      load_csv(dir_a + "/synthetic.csv", load_config(cfg).schema, &stats);
  CHECK(ds.n_rows() == 120);
  CHECK(stats.skipped() == 0);
}

TEST_CASE("io failures exit 4") {
  CHECK(run_cli("count --config /nope/missing.ini").code == 4);
}

TEST_CASE("missing pieces exit 2") {
  CHECK(run_cli("count").code == 2);
  CHECK(run_cli("definitely-not-a-command").code == 2);
}

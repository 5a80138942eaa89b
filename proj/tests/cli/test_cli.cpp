#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = RSBM_TEST_TMP;

int run(const std::string& args) {
  const std::string cmd = std::string(RSBM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

fs::path dir(const std::string& name) {
  const fs::path d = kTmp / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// small dataset and a quickly trained run shared by several cases
const fs::path& small_run() {
  static const fs::path d = [] {
    const fs::path d = dir("shared");
    REQUIRE(run("generate --n 200 --seed 3 --out " + q(d / "data.csv")) == 0);
    REQUIRE(run("train --data " + q(d / "data.csv") +
                " --epochs 2 --prior-epochs 2 --hidden 16,16 --batch 32 --prior-batch 32 --out-dir " +
                q(d / "run")) == 0);
    return d;
  }();
  return d;
}

int count_rows(const fs::path& csv, const std::string& needle = "") {
  int n = 0;
  const auto ls = lines(csv);
  for (size_t i = 1; i < ls.size(); ++i) n += needle.empty() || ls[i].find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate writes the requested rows reproducibly") {
  const fs::path d = dir("generate");
  CHECK(run("generate --n 2000 --shapes star,figure8 --seed 7 --out " + q(d / "a.csv")) == 0);
  CHECK(run("generate --n 2000 --shapes star,figure8 --seed 7 --out " + q(d / "b.csv")) == 0);
  CHECK(lines(d / "a.csv").size() == 2001);
  CHECK(slurp(d / "a.csv") == slurp(d / "b.csv"));
  CHECK(run("generate --n 2000 --seed 8 --out " + q(d / "c.csv")) == 0);
  CHECK(slurp(d / "a.csv") != slurp(d / "c.csv"));
}

TEST_CASE("usage errors") {
  const fs::path d = dir("usage");
  CHECK(run("generate --n 0 --out " + q(d / "x.csv")) != 0);
  CHECK_FALSE(fs::exists(d / "x.csv"));
  CHECK(run("") != 0);
  CHECK(run("train --data " + q(d / "missing.csv")) != 0);
  CHECK(run("generate --shapes hexagon --out " + q(d / "y.csv")) != 0);
}

TEST_CASE("train with zero epochs writes an initial checkpoint") {
  const fs::path d = dir("train0");
  REQUIRE(run("generate --n 50 --out " + q(d / "data.csv")) == 0);
  CHECK(run("train --data " + q(d / "data.csv") + " --epochs 0 --prior-epochs 0 --out-dir " + q(d / "run")) == 0);
  CHECK(fs::exists(d / "run" / "velocity.ckpt"));
  CHECK(fs::exists(d / "run" / "prior.ckpt"));
  CHECK(lines(d / "run" / "loss.csv").size() == 1);
  const auto meta = read_json(d / "run" / "run.json");
  CHECK(meta["epsilon"] == 0.5);
  CHECK(meta["target"] == "v");
  CHECK(meta["prior"] == "learned");
}

TEST_CASE("train writes one loss row per epoch") {
  const fs::path& d = small_run();
  CHECK(lines(d / "run" / "loss.csv").size() == 3);
  CHECK(lines(d / "run" / "prior_loss.csv").size() == 3);
}

TEST_CASE("sample reports nfe and is reproducible") {
  const fs::path& d = small_run();
  const fs::path o = dir("sample");
  const std::string base = "sample --run " + q(d / "run") + " --data " + q(d / "data.csv") + " --n-eval 40";
  CHECK(run(base + " --k 3 --solver heun --metrics " + q(o / "m3.json") + " --predictions " + q(o / "p3.csv")) == 0);
  CHECK(read_json(o / "m3.json")["nfe"] == 5);
  CHECK(read_json(o / "m3.json")["n"] == 40);
  CHECK(lines(o / "p3.csv").size() == 41);
  CHECK(run(base + " --k 10 --metrics " + q(o / "m10.json") + " --predictions " + q(o / "p10.csv")) == 0);
  CHECK(read_json(o / "m10.json")["nfe"] == 19);
  CHECK(run(base + " --k 5 --solver euler --metrics " + q(o / "me.json") + " --predictions " + q(o / "pe.csv")) == 0);
  CHECK(read_json(o / "me.json")["nfe"] == 5);
  CHECK(run(base + " --k 3 --metrics " + q(o / "again.json") + " --predictions " + q(o / "again.csv")) == 0);
  CHECK(slurp(o / "m3.json") == slurp(o / "again.json"));
  CHECK(slurp(o / "p3.csv") == slurp(o / "again.csv"));
}

TEST_CASE("sample refuses flags that contradict the checkpoint") {
  const fs::path& d = small_run();
  const fs::path o = dir("mismatch");
  const std::string base = "sample --run " + q(d / "run") + " --data " + q(d / "data.csv") + " --n-eval 5 --metrics " +
                           q(o / "m.json") + " --predictions " + q(o / "p.csv");
  CHECK(run(base + " --epsilon 0.5 --target v") == 0);
  CHECK(run(base + " --epsilon 1.0") != 0);
  CHECK(run(base + " --target x0") != 0);
}

TEST_CASE("config file fills in flags; command line wins") {
  const fs::path& d = small_run();
  const fs::path o = dir("config");
  std::ofstream(o / "cfg.toml") << "[train]\nepochs = 1\nprior-epochs = 0\nprior = \"gaussian\"\nepsilon = 1.0\n"
                                << "hidden = \"8\"\n";
  CHECK(run("--config " + q(o / "cfg.toml") + " train --data " + q(d / "data.csv") + " --out-dir " + q(o / "a")) == 0);
  auto meta = read_json(o / "a" / "run.json");
  CHECK(meta["prior"] == "gaussian");
  CHECK(meta["epsilon"] == 1.0);
  CHECK(meta["epochs"] == 1);
  CHECK(run("--config " + q(o / "cfg.toml") + " train --data " + q(d / "data.csv") + " --epsilon 0.3 --out-dir " +
            q(o / "b")) == 0);
  meta = read_json(o / "b" / "run.json");
  CHECK(meta["epsilon"] == 0.3);
  CHECK(meta["prior"] == "gaussian");
}

TEST_CASE("ablation sweeps have the expected shape") {
  const fs::path& d = small_run();
  const fs::path o = dir("ablate");
  const std::string base = "ablate --data " + q(d / "data.csv") +
                           " --epochs 1 --prior-epochs 1 --hidden 8 --batch 64 --prior-batch 64 --seeds 2";
  CHECK(run(base + " --sweep epsilon --out " + q(o / "eps.csv")) == 0);
  CHECK(lines(o / "eps.csv").front() == "sweep,config,seed,solver,k,nfe,mse,cos_sim,fde");
  CHECK(count_rows(o / "eps.csv") == 5 * 4 * 2);

  CHECK(run(base + " --sweep target --out " + q(o / "target.csv")) == 0);
  CHECK(count_rows(o / "target.csv") == 3 * 2);

  CHECK(run(base + " --sweep solver --out " + q(o / "solver.csv")) == 0);
  CHECK(count_rows(o / "solver.csv", ",heun,3,5,") == 2);
  CHECK(count_rows(o / "solver.csv", ",euler,5,5,") == 2);

  CHECK(run(base + " --sweep prior --out " + q(o / "prior.csv")) == 0);
  CHECK(count_rows(o / "prior.csv") == 6 * 2);

  CHECK(run(base + " --sweep bogus --out " + q(o / "x.csv")) != 0);
}

TEST_CASE("ablation output does not depend on the worker count") {
  const fs::path& d = small_run();
  const fs::path o = dir("ablate_jobs");
  const std::string base = "ablate --sweep target --data " + q(d / "data.csv") +
                           " --epochs 1 --prior-epochs 1 --hidden 8 --batch 64 --prior-batch 64 --seeds 2";
  CHECK(run(base + " --jobs 1 --out " + q(o / "one.csv")) == 0);
  CHECK(run(base + " --jobs 3 --out " + q(o / "three.csv")) == 0);
  CHECK(slurp(o / "one.csv") == slurp(o / "three.csv"));
}

TEST_CASE("verify passes by default and catches an injected kernel defect") {
  const fs::path o = dir("verify");
  CHECK(run("verify --json " + q(o / "report.json")) == 0);
  const auto report = read_json(o / "report.json");
  REQUIRE(report.is_array());
  CHECK(report.size() > 5);
  for (const auto& c : report) {
    CHECK(c.contains("check"));
    CHECK(c["pass"] == true);
  }
  CHECK(run("verify --perturb-kernel 1e-3 --json " + q(o / "bad.json")) != 0);
  bool invariance_failed = false;
  for (const auto& c : read_json(o / "bad.json")) {
    if (c["check"].get<std::string>().rfind("invariance", 0) == 0 && c["pass"] == false) invariance_failed = true;
  }
  CHECK(invariance_failed);
}

}  // TEST_SUITE

#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("merr_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

RunResult run_cli(const std::string& args, const TempDir& tmp) {
  const std::string out_file = tmp.file("stdout.txt");
  const std::string cmd = std::string(MERR_CLI_PATH) + " " + args + " > " +
                          out_file + " 2> " + tmp.file("stderr.txt");
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  return r;
}

// Small-grid config shared by the pipeline tests.
const char* kSmallConfig = R"({
  "mesh": {"q4_grid": [4, 8], "q8_grid": [8, 16]},
  "dataset": {"count": 6, "n_test": 2},
  "model": {"h1": 16, "h2": 16},
  "train": {"max_epochs": 2, "epoch_subsample": 4, "batch_size": 2},
  "eval": {"mc_passes": 40},
  "seed": 5
})";

}  // namespace

TEST_CASE("mesh subcommand prints the production grid counts") {
  TempDir tmp;
  const auto r = run_cli("mesh --order q4 --grid 20x40", tmp);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("nodes=861 elements=800") != std::string::npos);

  const auto r8 = run_cli("mesh --order q8 --grid 40x80", tmp);
  CHECK(r8.out.find("nodes=9841 elements=3200") != std::string::npos);
}

TEST_CASE("mesh export writes a deterministic file") {
  TempDir tmp;
  const auto r1 = run_cli(
      "mesh export --order q4 --grid 4x8 --out-file " + tmp.file("m1.txt"), tmp);
  CHECK(r1.exit_code == 0);
  const auto r2 = run_cli(
      "mesh export --order q4 --grid 4x8 --out-file " + tmp.file("m2.txt"), tmp);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(tmp.file("m1.txt")) == slurp(tmp.file("m2.txt")));
  CHECK(slurp(tmp.file("m1.txt")).substr(0, 8) == "q4 45 32");
}

TEST_CASE("bad usage and bad config exit with code 2") {
  TempDir tmp;
  CHECK(run_cli("mesh --order q9 --grid 2x2", tmp).exit_code == 2);
  CHECK(run_cli("mesh --order q4 --grid nonsense", tmp).exit_code == 2);
  CHECK(run_cli("--no-such-flag mesh", tmp).exit_code == 2);
  CHECK(run_cli("bogus-subcommand", tmp).exit_code == 2);

  std::ofstream(tmp.file("bad.json")) << R"({"not_a_key": 1})";
  CHECK(run_cli("--config " + tmp.file("bad.json") + " mesh --order q4 --grid 2x2",
                tmp).exit_code == 2);

  CHECK(run_cli("--preset nope mesh --order q4 --grid 2x2", tmp).exit_code == 2);
}

TEST_CASE("missing input files exit with code 1") {
  TempDir tmp;
  const auto r = run_cli("--out " + tmp.file("o") + " split --input " +
                         tmp.file("missing.merr"), tmp);
  CHECK(r.exit_code == 1);
}

TEST_CASE("gradcheck gate") {
  TempDir tmp;
  const auto r = run_cli("gradcheck --preset small", tmp);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("worst_rel=") != std::string::npos);
}

TEST_CASE("full pipeline at toy scale") {
  TempDir tmp;
  std::ofstream(tmp.file("cfg.json")) << kSmallConfig;
  const std::string base =
      "--config " + tmp.file("cfg.json") + " --threads 1 --out " + tmp.file("out");

  auto gen = run_cli(base + " generate", tmp);
  REQUIRE(gen.exit_code == 0);
  CHECK(gen.out.find("samples=6") != std::string::npos);
  CHECK(fs::exists(tmp.file("out/dataset.merr")));
  CHECK(fs::exists(tmp.file("out/dataset.merr.meta.json")));

  REQUIRE(run_cli(base + " split", tmp).exit_code == 0);
  CHECK(fs::exists(tmp.file("out/train.merr")));
  CHECK(fs::exists(tmp.file("out/test.merr")));

  REQUIRE(run_cli(base + " train", tmp).exit_code == 0);
  CHECK(fs::exists(tmp.file("out/model.ckpt")));
  CHECK(fs::exists(tmp.file("out/history.csv")));
  {
    std::ifstream is(tmp.file("out/history.csv"));
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "epoch,lr,l_error_train,l_error_test,l_u_raw,l_super_raw,beta1,"
          "beta2,objective");
  }

  REQUIRE(run_cli(base + " evaluate --sample 0", tmp).exit_code == 0);
  for (const char* f : {"hist_error.csv", "hist_super.csv", "maps.csv",
                        "nodal_error.csv", "nodal_super.csv", "map_mean_x.svg"}) {
    CHECK(fs::exists(tmp.file(std::string("out/") + f)));
  }

  REQUIRE(run_cli(base + " uncertainty --sample 1 --passes 40", tmp).exit_code == 0);
  CHECK(fs::exists(tmp.file("out/uncertainty_error.csv")));

  REQUIRE(run_cli(base + " superresolve --sample 0", tmp).exit_code == 0);
  CHECK(fs::exists(tmp.file("out/superres.csv")));

  auto abl = run_cli(base + " ablate", tmp);
  REQUIRE(abl.exit_code == 0);
  CHECK(fs::exists(tmp.file("out/ablation.csv")));
  CHECK(fs::exists(tmp.file("out/history_case3.csv")));
}

TEST_CASE("regeneration is byte-identical across runs and out dirs") {
  TempDir tmp;
  std::ofstream(tmp.file("cfg.json")) << kSmallConfig;
  for (const char* dir : {"a", "b"}) {
    const std::string base = "--config " + tmp.file("cfg.json") +
                             " --threads 1 --out " + tmp.file(dir);
    REQUIRE(run_cli(base + " generate", tmp).exit_code == 0);
    REQUIRE(run_cli(base + " split", tmp).exit_code == 0);
  }
  CHECK(slurp(tmp.file("a/dataset.merr")) == slurp(tmp.file("b/dataset.merr")));
  CHECK(slurp(tmp.file("a/train.merr")) == slurp(tmp.file("b/train.merr")));
  CHECK(slurp(tmp.file("a/test.merr")) == slurp(tmp.file("b/test.merr")));
}

TEST_CASE("environment variable overrides the output directory") {
  TempDir tmp;
  std::ofstream(tmp.file("cfg.json")) << kSmallConfig;
  const std::string cmd = "MERR_OUT_DIR=" + tmp.file("envout") + " " +
                          std::string(MERR_CLI_PATH) + " --config " +
                          tmp.file("cfg.json") +
                          " --threads 1 generate > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(tmp.file("envout/dataset.merr")));
}

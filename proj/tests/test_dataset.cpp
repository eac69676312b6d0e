#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "merr/dataset.hpp"
#include "merr/mesh.hpp"

using namespace merr;
namespace fs = std::filesystem;

namespace {

dataset::GenConfig small_config() {
  dataset::GenConfig cfg;
  cfg.q4_nr = 4;
  cfg.q4_nc = 8;
  cfg.q8_nr = 8;
  cfg.q8_nc = 16;
  cfg.count = 3;
  cfg.master_seed = 99;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("merr_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("generate_sample is deterministic and self-consistent") {
  const auto cfg = small_config();
  dataset::GenerationContext ctx(cfg);
  dataset::WorkerSolvers solvers(ctx);

  auto s1 = dataset::generate_sample(ctx, solvers, 1);
  auto s2 = dataset::generate_sample(ctx, solvers, 1);
  CHECK((s1.u_r - s2.u_r).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((s1.u_h_q8 - s2.u_h_q8).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(s1.load == s2.load);

  // Error field recomputes exactly from its parts.
  CHECK((s1.e - (s1.u_h_q4 - s1.u_r)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(s1.u_r.size() == 2 * (cfg.q4_nr + 1) * (cfg.q4_nc + 1));
  CHECK(s1.u_r.allFinite());
  CHECK(s1.u_h_q8.allFinite());

  auto s3 = dataset::generate_sample(ctx, solvers, 2);
  CHECK((s3.u_r - s1.u_r).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("using the reduced mesh for both roles gives zero error") {
  const auto q4 = mesh::build_mesh(mesh::ElementOrder::q4, 4, 8);
  const auto identity_map = mesh::build_coincidence_map(q4, q4);

  auto spec = grf::make_material_spec(q4, q4);
  const auto factor = grf::build_correlation_factor(spec);
  rng::Stream stream(7, rng::Domain::sample, 0);
  const auto real = grf::sample_realization(factor, spec, stream);

  fem::PlateSolver solver(q4, 0.28, 0.005);
  const auto u_r = solver.solve(real.e_q4, real.load);
  const auto u_h = solver.solve(real.e_q4, real.load);
  const auto restricted = mesh::restrict_field(u_h, identity_map);
  CHECK((restricted - u_r).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("binary round-trip is bit-exact and generation resumes") {
  TempDir tmp;
  const auto cfg = small_config();

  SUBCASE("round trip") {
    const auto ds = dataset::generate_dataset(cfg, tmp.file("a.merr"), 2);
    REQUIRE(ds.size() == 3);
    dataset::write_binary(ds, tmp.file("b.merr"));
    const auto back = dataset::read_binary(tmp.file("b.merr"));
    REQUIRE(back.size() == ds.size());
    for (int i = 0; i < ds.size(); ++i) {
      const auto& a = ds.samples[static_cast<std::size_t>(i)];
      const auto& b = back.samples[static_cast<std::size_t>(i)];
      CHECK((a.u_r - b.u_r).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((a.u_h_q8 - b.u_h_q8).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((a.u_h_q4 - b.u_h_q4).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((a.e - b.e).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK(a.load == b.load);
      CHECK(a.std_used == b.std_used);
      CHECK(a.index == b.index);
    }
    CHECK(back.meta.config_hash == dataset::config_hash(cfg));
  }

  SUBCASE("resume extends an existing prefix to the same bytes") {
    auto cfg2 = cfg;
    cfg2.count = 2;
    dataset::generate_dataset(cfg2, tmp.file("resume.merr"), 1);
    auto cfg4 = cfg;
    cfg4.count = 4;
    dataset::generate_dataset(cfg4, tmp.file("resume.merr"), 1);
    dataset::generate_dataset(cfg4, tmp.file("fresh.merr"), 2);
    CHECK(slurp(tmp.file("resume.merr")) == slurp(tmp.file("fresh.merr")));
  }

  SUBCASE("mismatched config is rejected on resume") {
    dataset::generate_dataset(cfg, tmp.file("c.merr"), 1);
    auto other = cfg;
    other.master_seed = 123;
    CHECK_THROWS_AS(dataset::DatasetWriter(other, tmp.file("c.merr")),
                    std::runtime_error);
  }

  SUBCASE("regenerating one sample in isolation matches the batch run") {
    const auto ds = dataset::generate_dataset(cfg, tmp.file("d.merr"), 2);
    dataset::GenerationContext ctx(cfg);
    dataset::WorkerSolvers solvers(ctx);
    const auto lone = dataset::generate_sample(ctx, solvers, 2);
    CHECK((lone.u_r - ds.samples[2].u_r).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((lone.e - ds.samples[2].e).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(lone.load == ds.samples[2].load);
  }

  SUBCASE("threaded and serial generation agree") {
    const auto a = dataset::generate_dataset(cfg, tmp.file("t1.merr"), 1);
    const auto b = dataset::generate_dataset(cfg, tmp.file("t2.merr"), 3);
    CHECK(slurp(tmp.file("t1.merr")) == slurp(tmp.file("t2.merr")));
  }
}

TEST_CASE("split is disjoint, exhaustive, and seed-deterministic") {
  TempDir tmp;
  auto cfg = small_config();
  cfg.count = 10;
  const auto ds = dataset::generate_dataset(cfg, tmp.file("s.merr"), 2);

  auto [train, test] = dataset::split(ds, 3, 5);
  CHECK(train.size() == 7);
  CHECK(test.size() == 3);

  std::vector<bool> seen(10, false);
  for (const auto& s : train.samples) {
    CHECK(!seen[s.index]);
    seen[s.index] = true;
  }
  for (const auto& s : test.samples) {
    CHECK(!seen[s.index]);
    seen[s.index] = true;
  }
  for (bool b : seen) CHECK(b);

  auto [train2, test2] = dataset::split(ds, 3, 5);
  for (int i = 0; i < test.size(); ++i) {
    CHECK(test.samples[static_cast<std::size_t>(i)].index ==
          test2.samples[static_cast<std::size_t>(i)].index);
  }
  auto [train3, test3] = dataset::split(ds, 3, 6);
  bool any_diff = test3.size() != test.size();
  for (int i = 0; !any_diff && i < test.size(); ++i) {
    any_diff = test.samples[static_cast<std::size_t>(i)].index !=
               test3.samples[static_cast<std::size_t>(i)].index;
  }
  CHECK(any_diff);

  SUBCASE("minimal split") {
    auto two = ds;
    two.samples.resize(2);
    auto [tr, te] = dataset::split(two, 1, 1);
    CHECK(tr.size() == 1);
    CHECK(te.size() == 1);
    CHECK(tr.samples[0].index != te.samples[0].index);
  }

  SUBCASE("out-of-range n_test") {
    CHECK_THROWS_AS(dataset::split(ds, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(dataset::split(ds, -1, 1), std::invalid_argument);
  }
}

TEST_CASE("csv export carries the documented header") {
  TempDir tmp;
  const auto cfg = small_config();
  const auto ds = dataset::generate_dataset(cfg, tmp.file("e.merr"), 2);
  const auto q4 = mesh::build_mesh(mesh::ElementOrder::q4, cfg.q4_nr, cfg.q4_nc);
  dataset::write_csv(ds, q4, tmp.file("e.csv"));

  std::ifstream is(tmp.file("e.csv"));
  std::string header;
  std::getline(is, header);
  CHECK(header == "sample,node,x,y,u_r_x,u_r_y,u_h_x,u_h_y,e_x,e_y");
  int lines = 0;
  std::string line;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == ds.size() * q4.node_count());
}

TEST_CASE("meta json is deterministic and carries the hash") {
  const auto cfg = small_config();
  const auto a = dataset::meta_json(cfg, 3);
  const auto b = dataset::meta_json(cfg, 3);
  CHECK(a == b);
  CHECK(a.find("config_hash") != std::string::npos);
  CHECK(a.find("sample_count") != std::string::npos);
}

#include <doctest.h>

#include "merr/config.hpp"

using namespace merr;
using config::ConfigError;

TEST_CASE("full-preset defaults") {
  const auto c = config::preset("full");
  CHECK(c.gen.count == 10000);
  CHECK(c.n_test == 1000);
  CHECK(c.gen.q4_nr == 20);
  CHECK(c.gen.q8_nc == 80);
  CHECK(c.dims.input == 1722);
  CHECK(c.dims.out_error == 1722);
  CHECK(c.dims.out_super == 19682);
  CHECK(c.dims.h2 == 2048);
  CHECK(c.train.max_epochs == 300);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.epoch_subsample == 4096);
  CHECK(c.train.lr0 == 1e-5);
  CHECK(c.train.decay == 0.99);
  CHECK(c.gen.e0 == 2.0e11);
  CHECK(c.gen.load_hi == 5.0e5);
  CHECK(c.flags.use_u);
  CHECK(c.flags.use_super);
  CHECK(c.mc_passes == 2000);
}

TEST_CASE("desk preset pins the acceptance-scale run") {
  const auto c = config::preset("desk");
  CHECK(c.gen.count == 2000);
  CHECK(c.n_test == 200);
  CHECK(c.dims.h2 == 512);
  CHECK(c.train.max_epochs == 60);
  CHECK(c.dims.input == 1722);  // mesh unchanged
  CHECK(c.gen.master_seed == 7);
}

TEST_CASE("unknown preset and unknown keys are rejected") {
  CHECK_THROWS_AS(config::preset("bogus"), ConfigError);
  CHECK_THROWS_AS(config::load_json(R"({"bogus": 1})", config::preset("full")),
                  ConfigError);
  CHECK_THROWS_AS(
      config::load_json(R"({"train": {"learning_rate": 1}})", config::preset("full")),
      ConfigError);
  CHECK_THROWS_AS(
      config::load_json(R"({"mesh": {"q4_grid": [20]}})", config::preset("full")),
      ConfigError);
}

TEST_CASE("invalid values are rejected") {
  auto base = config::preset("full");
  CHECK_THROWS_AS(config::load_json(R"({"train": {"batch_size": 0}})", base),
                  ConfigError);
  CHECK_THROWS_AS(config::load_json(R"({"material": {"poisson": 0.7}})", base),
                  ConfigError);
  CHECK_THROWS_AS(
      config::load_json(R"({"dataset": {"count": 10, "n_test": -1}})", base),
      ConfigError);
  CHECK_THROWS_AS(config::load_json(R"(not json)", base), ConfigError);
}

TEST_CASE("overlay and round trip") {
  auto c = config::load_json(
      R"({"dataset": {"count": 50, "n_test": 5}, "seed": 9,
          "model": {"h2": 64}, "train": {"max_epochs": 2, "loss_super": false}})",
      config::preset("full"));
  CHECK(c.gen.count == 50);
  CHECK(c.n_test == 5);
  CHECK(c.gen.master_seed == 9);
  CHECK(c.dims.h2 == 64);
  CHECK(c.train.max_epochs == 2);
  CHECK(!c.flags.use_super);
  CHECK(c.flags.use_u);
  CHECK(c.train.seed == 9);  // finalize mirrors the master seed

  const auto text = config::to_json(c);
  const auto back = config::load_json(text, config::preset("full"));
  CHECK(back.gen.count == 50);
  CHECK(back.dims.h2 == 64);
  CHECK(config::to_json(back) == text);
}

TEST_CASE("widths follow the mesh grids") {
  auto c = config::load_json(
      R"({"mesh": {"q4_grid": [4, 8], "q8_grid": [8, 16]},
          "dataset": {"count": 4, "n_test": 1}})",
      config::preset("full"));
  CHECK(c.dims.input == 2 * 5 * 9);
  CHECK(c.dims.out_super == 2 * (17 * 33 - 8 * 16));
}

#include <doctest.h>

#include <cmath>

#include "merr/grf.hpp"
#include "merr/mesh.hpp"
#include "merr/rng.hpp"
#include "test_util.hpp"

using namespace merr;

namespace {

grf::GrfSpec spec_with_points(std::vector<Eigen::Vector2d> pts) {
  grf::GrfSpec s;
  s.eval_points = std::move(pts);
  s.q4_point_count = static_cast<int>(s.eval_points.size());
  return s;
}

}  // namespace

TEST_CASE("single point factor is sqrt(1 + nugget)") {
  auto s = spec_with_points({{0.3, 0.4}});
  const auto f = grf::build_correlation_factor(s);
  REQUIRE(f.l.rows() == 1);
  CHECK(f.l(0, 0) == doctest::Approx(std::sqrt(1.0 + s.nugget)).epsilon(1e-15));
}

TEST_CASE("kernel value at one correlation length is exp(-1)") {
  auto s = spec_with_points({{0.2, 0.1}, {0.2, 0.1 + 0.25}});
  CHECK(grf::correlation(s, s.eval_points[0], s.eval_points[1]) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  const auto c = grf::correlation_matrix(s);
  CHECK(c(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(c(0, 0) == 1.0);
}

TEST_CASE("factor reproduces the correlation matrix") {
  rng::Stream s(21, rng::Domain::probe);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Eigen::Vector2d> pts;
    const int n = 40 + trial * 30;
    for (int i = 0; i < n; ++i) {
      pts.push_back({s.uniform(), s.uniform()});
    }
    auto spec = spec_with_points(std::move(pts));
    const auto c = grf::correlation_matrix(spec);
    const auto f = grf::build_correlation_factor(spec);
    const Eigen::MatrixXd recon =
        f.l * f.l.transpose() -
        f.nugget_used * Eigen::MatrixXd::Identity(c.rows(), c.cols());
    CHECK((recon - c).lpNorm<Eigen::Infinity>() <=
          1e-10 * c.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("degenerate point sets raise the nugget instead of failing") {
  // Two coincident points: correlation matrix is singular.
  auto s = spec_with_points({{0.5, 0.5}, {0.5, 0.5}});
  const auto f = grf::build_correlation_factor(s);
  CHECK(f.nugget_used >= s.nugget);
  CHECK(f.l.allFinite());
}

TEST_CASE("zero std gives the mean field exactly") {
  auto s = spec_with_points({{0.1, 0.1}, {0.9, 0.2}, {0.4, 0.7}});
  s.std_lo_frac = 0.0;
  s.std_hi_frac = 0.0;
  const auto f = grf::build_correlation_factor(s);
  rng::Stream stream(5, rng::Domain::sample, 0);
  const auto real = grf::sample_realization(f, s, stream);
  for (Eigen::Index i = 0; i < real.e_q4.size(); ++i) {
    CHECK(real.e_q4[i] == 2.0e11);
  }
  CHECK(real.std_used == 0.0);
  CHECK(real.load >= s.load_lo);
  CHECK(real.load <= s.load_hi);
}

TEST_CASE("identical stream seeds give bit-identical realizations") {
  auto s = spec_with_points({{0.1, 0.1}, {0.9, 0.2}, {0.4, 0.7}, {0.6, 0.6}});
  const auto f = grf::build_correlation_factor(s);
  rng::Stream s1(77, rng::Domain::sample, 3);
  rng::Stream s2(77, rng::Domain::sample, 3);
  const auto a = grf::sample_realization(f, s, s1);
  const auto b = grf::sample_realization(f, s, s2);
  CHECK((a.e_q4 - b.e_q4).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.load == b.load);
  CHECK(a.std_used == b.std_used);
}

TEST_CASE("moduli never fall below the floor") {
  auto s = spec_with_points({{0.1, 0.1}, {0.9, 0.2}, {0.4, 0.7}});
  s.std_lo_frac = 0.5;
  s.std_hi_frac = 0.5;  // widest allowed spread, flooring must engage
  const auto f = grf::build_correlation_factor(s);
  const double floor = s.floor_frac * s.mean;
  bool floored = false;
  for (int k = 0; k < 2000; ++k) {
    rng::Stream stream(13, rng::Domain::sample, static_cast<std::uint64_t>(k));
    const auto real = grf::sample_realization(f, s, stream);
    CHECK(real.e_q4.minCoeff() >= floor);
    if (real.e_q4.minCoeff() == floor) floored = true;
  }
  CHECK(floored);
}

TEST_CASE("pre-floor marginal is Gaussian (KS at alpha = 0.01)") {
  auto s = spec_with_points({{0.15, 0.2}, {0.5, 0.45}, {0.85, 0.75}});
  const auto f = grf::build_correlation_factor(s);
  const int n = 6000;
  std::vector<double> z;
  z.reserve(n);
  for (int k = 0; k < n; ++k) {
    rng::Stream stream(101, rng::Domain::sample, static_cast<std::uint64_t>(k));
    const auto draw = grf::sample_field(f, s, stream);
    z.push_back((draw.values[1] - s.mean) / draw.std_used);
  }
  const double d = testutil::ks_statistic_standard_normal(std::move(z));
  CHECK(d < testutil::ks_critical_alpha01(n));
}

TEST_CASE("monte-carlo moments and lag correlation") {
  // Points at distance corr_len_x along x: theoretical correlation e^-1.
  auto s = spec_with_points({{0.2, 0.3}, {0.2 + 0.25, 0.3}});
  s.std_lo_frac = 0.2;
  s.std_hi_frac = 0.2;  // fixed std so flooring never engages
  const auto f = grf::build_correlation_factor(s);

  const int n = 10000;
  double sum0 = 0.0, sq0 = 0.0, sum1 = 0.0, sq1 = 0.0, cross = 0.0;
  for (int k = 0; k < n; ++k) {
    rng::Stream stream(2024, rng::Domain::sample, static_cast<std::uint64_t>(k));
    const auto real = grf::sample_realization(f, s, stream);
    const double a = real.e_q4[0], b = real.e_q4[1];
    sum0 += a;
    sq0 += a * a;
    sum1 += b;
    sq1 += b * b;
    cross += a * b;
  }
  const double mean0 = sum0 / n, mean1 = sum1 / n;
  const double var0 = sq0 / n - mean0 * mean0;
  const double var1 = sq1 / n - mean1 * mean1;
  const double std_used = 0.2 * s.mean;

  CHECK(std::abs(mean0 - s.mean) < 0.01 * s.mean);
  CHECK(std::abs(std::sqrt(var0) - std_used) < 0.05 * std_used);

  const double corr =
      (cross / n - mean0 * mean1) / std::sqrt(var0 * var1);
  CHECK(corr == doctest::Approx(std::exp(-1.0)).epsilon(0.15));
  CHECK(std::abs(corr - std::exp(-1.0)) < 0.05);
}

TEST_CASE("material spec covers both meshes' centroids") {
  const auto q4 = mesh::build_mesh(mesh::ElementOrder::q4, 4, 8);
  const auto q8 = mesh::build_mesh(mesh::ElementOrder::q8, 8, 16);
  auto s = grf::make_material_spec(q4, q8);
  CHECK(s.q4_point_count == q4.element_count());
  CHECK(static_cast<int>(s.eval_points.size()) ==
        q4.element_count() + q8.element_count());

  const auto f = grf::build_correlation_factor(s);
  rng::Stream stream(1, rng::Domain::sample, 0);
  const auto real = grf::sample_realization(f, s, stream);
  CHECK(real.e_q4.size() == q4.element_count());
  CHECK(real.e_q8.size() == q8.element_count());
}

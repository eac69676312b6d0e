#pragma once

#include <Eigen/Core>
#include <vector>

#include "merr/mesh.hpp"
#include "merr/rng.hpp"

namespace merr::grf {

// Spatially correlated elastic-modulus field sampled jointly at the union of
// both meshes' element centroids, plus the per-sample edge load draw.
struct GrfSpec {
  double mean = 2.0e11;          // E0, Pa
  double std_lo_frac = 0.1;      // per-sample std ~ U[std_lo, std_hi] * mean
  double std_hi_frac = 0.5;
  double corr_len_x = 0.25;      // m
  double corr_len_y = 0.25;      // m
  double nugget = 1e-10;
  double floor_frac = 0.05;      // moduli clamped at floor_frac * mean
  double load_lo = 1.0;          // N/m
  double load_hi = 5.0e5;        // N/m
  std::vector<Eigen::Vector2d> eval_points;
  int q4_point_count = 0;        // leading eval_points owned by the Q4 mesh
};

// eval_points = Q4 centroids followed by Q8 centroids.
GrfSpec make_material_spec(const mesh::Mesh& q4, const mesh::Mesh& q8);

struct CorrelationFactor {
  Eigen::MatrixXd l;      // lower triangular, L L^T = C + nugget I
  double nugget_used = 0.0;
};

// Separable squared-exponential kernel exp(-(dx/lx)^2 - (dy/ly)^2).
double correlation(const GrfSpec& spec, const Eigen::Vector2d& a,
                   const Eigen::Vector2d& b);

Eigen::MatrixXd correlation_matrix(const GrfSpec& spec);

// Cholesky factor of C + nugget I. If the factorization fails the nugget is
// raised by x100 up to 1e-4 before giving up.
CorrelationFactor build_correlation_factor(const GrfSpec& spec);

// One field draw before flooring: f = mean + std_used * (L z).
// Draw order: std_used, then z, then nothing else (load is drawn by
// sample_realization after the field).
struct FieldDraw {
  Eigen::VectorXd values;
  double std_used = 0.0;
};
FieldDraw sample_field(const CorrelationFactor& factor, const GrfSpec& spec,
                       rng::Stream& stream);

struct MaterialRealization {
  Eigen::VectorXd e_q4;   // per-Q4-element modulus, Pa
  Eigen::VectorXd e_q8;   // per-Q8-element modulus, Pa
  double load = 0.0;      // N/m
  double std_used = 0.0;  // Pa
};

MaterialRealization sample_realization(const CorrelationFactor& factor,
                                       const GrfSpec& spec,
                                       rng::Stream& stream);

}  // namespace merr::grf

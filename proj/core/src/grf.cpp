#include "merr/grf.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace merr::grf {

GrfSpec make_material_spec(const mesh::Mesh& q4, const mesh::Mesh& q8) {
  GrfSpec spec;
  spec.eval_points.reserve(static_cast<std::size_t>(q4.element_count()) +
                           static_cast<std::size_t>(q8.element_count()));
  for (int e = 0; e < q4.element_count(); ++e) {
    spec.eval_points.push_back(q4.element_centroid(e));
  }
  spec.q4_point_count = q4.element_count();
  for (int e = 0; e < q8.element_count(); ++e) {
    spec.eval_points.push_back(q8.element_centroid(e));
  }
  return spec;
}

double correlation(const GrfSpec& spec, const Eigen::Vector2d& a,
                   const Eigen::Vector2d& b) {
  const double dx = (a.x() - b.x()) / spec.corr_len_x;
  const double dy = (a.y() - b.y()) / spec.corr_len_y;
  return std::exp(-dx * dx - dy * dy);
}

Eigen::MatrixXd correlation_matrix(const GrfSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.eval_points.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index q = 0; q < n; ++q) {
    for (Eigen::Index p = 0; p < n; ++p) {
      c(p, q) = correlation(spec, spec.eval_points[p], spec.eval_points[q]);
    }
  }
  return c;
}

CorrelationFactor build_correlation_factor(const GrfSpec& spec) {
  if (spec.eval_points.empty()) {
    throw std::invalid_argument("build_correlation_factor: no eval points");
  }
  if (spec.corr_len_x <= 0.0 || spec.corr_len_y <= 0.0) {
    throw std::invalid_argument("build_correlation_factor: correlation length <= 0");
  }
  Eigen::MatrixXd c = correlation_matrix(spec);
  const auto n = c.rows();

  double nugget = spec.nugget;
  constexpr double nugget_cap = 1e-4;
  while (true) {
    Eigen::MatrixXd a = c;
    a.diagonal().array() += nugget;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      CorrelationFactor factor;
      factor.l = llt.matrixL();
      factor.nugget_used = nugget;
      return factor;
    }
    if (nugget > nugget_cap) {
      throw std::runtime_error(
          "build_correlation_factor: Cholesky failed for " + std::to_string(n) +
          " points even with nugget " + std::to_string(nugget));
    }
    nugget *= 100.0;
  }
}

FieldDraw sample_field(const CorrelationFactor& factor, const GrfSpec& spec,
                       rng::Stream& stream) {
  const auto n = factor.l.rows();
  if (n != static_cast<Eigen::Index>(spec.eval_points.size())) {
    throw std::invalid_argument("sample_field: factor/spec size mismatch");
  }
  FieldDraw draw;
  draw.std_used =
      spec.mean * stream.uniform(spec.std_lo_frac, spec.std_hi_frac);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = stream.normal();
  draw.values = (factor.l.triangularView<Eigen::Lower>() * z);
  draw.values = spec.mean + (draw.std_used * draw.values).array();
  return draw;
}

MaterialRealization sample_realization(const CorrelationFactor& factor,
                                       const GrfSpec& spec,
                                       rng::Stream& stream) {
  FieldDraw draw = sample_field(factor, spec, stream);
  const double floor = spec.floor_frac * spec.mean;
  Eigen::VectorXd field = draw.values.cwiseMax(floor);

  MaterialRealization real;
  real.std_used = draw.std_used;
  real.e_q4 = field.head(spec.q4_point_count);
  real.e_q8 = field.tail(field.size() - spec.q4_point_count);
  real.load = stream.uniform(spec.load_lo, spec.load_hi);
  return real;
}

}  // namespace merr::grf

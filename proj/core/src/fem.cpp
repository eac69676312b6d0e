#include "merr/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/LU>
#include <cmath>
#include <stdexcept>
#include <string>

namespace merr::fem {

Eigen::Matrix3d constitutive_matrix(double modulus, double poisson) {
  if (modulus <= 0.0) throw std::invalid_argument("constitutive_matrix: E <= 0");
  const double c = modulus / (1.0 - poisson * poisson);
  Eigen::Matrix3d d;
  d << c, c * poisson, 0.0,
       c * poisson, c, 0.0,
       0.0, 0.0, c * (1.0 - poisson) / 2.0;
  return d;
}

GaussRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n < 1");
  GaussRule rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  constexpr double pi = 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    // Chebyshev-based initial guess for the i-th root of P_n.
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.points[n - 1 - i] = x;
    rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

namespace {

void accumulate_stiffness(const mesh::Mesh& m, int element, double modulus,
                          double poisson, double thickness,
                          const GaussRule& rule, Eigen::MatrixXd& ke) {
  const auto conn = m.element(element);
  const int npe = m.nodes_per_element();
  const Eigen::Matrix3d d = constitutive_matrix(modulus, poisson);

  Eigen::MatrixXd b(3, 2 * npe);
  for (std::size_t qx = 0; qx < rule.points.size(); ++qx) {
    for (std::size_t qy = 0; qy < rule.points.size(); ++qy) {
      const double xi = rule.points[qx];
      const double eta = rule.points[qy];
      const auto sf = mesh::shape_functions(m.order, xi, eta);

      Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
      for (int k = 0; k < npe; ++k) {
        const auto& p = m.nodes[conn[k]];
        j(0, 0) += sf.dxi[k] * p.x();
        j(0, 1) += sf.dxi[k] * p.y();
        j(1, 0) += sf.deta[k] * p.x();
        j(1, 1) += sf.deta[k] * p.y();
      }
      const double detj = j.determinant();
      if (!(detj > 0.0)) {
        throw std::runtime_error("element_stiffness: nonpositive Jacobian in element " +
                                 std::to_string(element));
      }
      const Eigen::Matrix2d jinv = j.inverse();

      b.setZero();
      for (int k = 0; k < npe; ++k) {
        const double dnx = jinv(0, 0) * sf.dxi[k] + jinv(0, 1) * sf.deta[k];
        const double dny = jinv(1, 0) * sf.dxi[k] + jinv(1, 1) * sf.deta[k];
        b(0, 2 * k) = dnx;
        b(1, 2 * k + 1) = dny;
        b(2, 2 * k) = dny;
        b(2, 2 * k + 1) = dnx;
      }

      const double w = thickness * rule.weights[qx] * rule.weights[qy] * detj;
      const Eigen::MatrixXd g = d * b;
      // Upper triangle only; mirrored below for exact symmetry.
      for (int r = 0; r < 2 * npe; ++r) {
        for (int c = r; c < 2 * npe; ++c) {
          ke(r, c) += w * b.col(r).dot(g.col(c));
        }
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd element_stiffness_with_rule(const mesh::Mesh& m, int element,
                                            double modulus, double poisson,
                                            double thickness,
                                            const GaussRule& rule) {
  const int ndof = 2 * m.nodes_per_element();
  Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(ndof, ndof);
  accumulate_stiffness(m, element, modulus, poisson, thickness, rule, ke);
  for (int r = 0; r < ndof; ++r) {
    for (int c = r + 1; c < ndof; ++c) ke(c, r) = ke(r, c);
  }
  return ke;
}

Eigen::MatrixXd element_stiffness(const mesh::Mesh& m, int element,
                                  double modulus, double poisson,
                                  double thickness) {
  static const GaussRule rule2 = gauss_legendre(2);
  static const GaussRule rule3 = gauss_legendre(3);
  const GaussRule& rule = m.order == mesh::ElementOrder::q4 ? rule2 : rule3;
  return element_stiffness_with_rule(m, element, modulus, poisson, thickness, rule);
}

Eigen::SparseMatrix<double> assemble_stiffness(const mesh::Mesh& m,
                                               const Eigen::VectorXd& moduli,
                                               double poisson,
                                               double thickness) {
  if (moduli.size() != m.element_count()) {
    throw std::invalid_argument("assemble_stiffness: moduli length mismatch");
  }
  const int npe = m.nodes_per_element();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(m.element_count()) * 4 * npe * npe);
  for (int e = 0; e < m.element_count(); ++e) {
    const Eigen::MatrixXd ke =
        element_stiffness(m, e, moduli[e], poisson, thickness);
    const auto conn = m.element(e);
    for (int r = 0; r < 2 * npe; ++r) {
      const int gr = 2 * conn[r / 2] + (r % 2);
      for (int c = 0; c < 2 * npe; ++c) {
        const int gc = 2 * conn[c / 2] + (c % 2);
        trips.emplace_back(gr, gc, ke(r, c));
      }
    }
  }
  Eigen::SparseMatrix<double> k(m.dof_count(), m.dof_count());
  k.setFromTriplets(trips.begin(), trips.end());
  return k;
}

Eigen::VectorXd traction_vector(const mesh::Mesh& m, double traction) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m.dof_count());
  for (const auto& edge : m.boundary_sets.loaded_edge) {
    const double len = (m.nodes[edge.b] - m.nodes[edge.a]).norm();
    if (edge.mid < 0) {
      f[2 * edge.a] += traction * len / 2.0;
      f[2 * edge.b] += traction * len / 2.0;
    } else {
      f[2 * edge.a] += traction * len / 6.0;
      f[2 * edge.mid] += traction * len * 2.0 / 3.0;
      f[2 * edge.b] += traction * len / 6.0;
    }
  }
  return f;
}

PlateSolver::PlateSolver(const mesh::Mesh& m, double poisson, double thickness)
    : mesh_(m), poisson_(poisson), thickness_(thickness) {
  free_index_.assign(m.dof_count(), 0);
  for (int n : m.boundary_sets.symmetry_x_axis) free_index_[2 * n + 1] = -1;
  for (int n : m.boundary_sets.symmetry_y_axis) free_index_[2 * n] = -1;
  for (int d = 0; d < m.dof_count(); ++d) {
    if (free_index_[d] >= 0) {
      free_index_[d] = static_cast<int>(free_dofs_.size());
      free_dofs_.push_back(d);
    }
  }
}

void PlateSolver::assemble_free(const Eigen::VectorXd& moduli) {
  const int npe = mesh_.nodes_per_element();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh_.element_count()) * 4 * npe * npe);
  for (int e = 0; e < mesh_.element_count(); ++e) {
    const Eigen::MatrixXd ke =
        element_stiffness(mesh_, e, moduli[e], poisson_, thickness_);
    const auto conn = mesh_.element(e);
    for (int r = 0; r < 2 * npe; ++r) {
      const int fr = free_index_[2 * conn[r / 2] + (r % 2)];
      if (fr < 0) continue;
      for (int c = 0; c < 2 * npe; ++c) {
        const int fc = free_index_[2 * conn[c / 2] + (c % 2)];
        if (fc < 0) continue;
        trips.emplace_back(fr, fc, ke(r, c));
      }
    }
  }
  const auto nf = static_cast<Eigen::Index>(free_dofs_.size());
  if (k_ff_.rows() != nf) k_ff_.resize(nf, nf);
  k_ff_.setFromTriplets(trips.begin(), trips.end());
}

Eigen::VectorXd PlateSolver::solve(const Eigen::VectorXd& moduli,
                                   double traction) {
  if (moduli.size() != mesh_.element_count()) {
    throw std::invalid_argument("PlateSolver::solve: moduli length mismatch");
  }
  assemble_free(moduli);

  const Eigen::VectorXd f_full = traction_vector(mesh_, traction);
  Eigen::VectorXd f(free_dofs_.size());
  for (std::size_t i = 0; i < free_dofs_.size(); ++i) f[i] = f_full[free_dofs_[i]];

  Eigen::VectorXd u_full = Eigen::VectorXd::Zero(mesh_.dof_count());
  if (f.isZero(0.0)) return u_full;  // homogeneous problem

  if (!analyzed_) {
    llt_.analyzePattern(k_ff_);
    analyzed_ = true;
  }
  llt_.factorize(k_ff_);

  Eigen::VectorXd uf;
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    uf = llt_.solve(f);
    const double rel = (k_ff_ * uf - f).norm() / f.norm();
    ok = std::isfinite(rel) && rel <= 1e-10;
  }
  if (!ok) {
    // Jacobi-preconditioned CG fallback, tolerance well below the error
    // scale of interest.
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(20 * k_ff_.rows());
    cg.compute(k_ff_);
    uf = cg.solve(f);
    const double rel = (k_ff_ * uf - f).norm() / f.norm();
    if (!(std::isfinite(rel) && rel <= 1e-10)) {
      throw std::runtime_error("PlateSolver: linear solve failed (relative residual " +
                               std::to_string(rel) + ")");
    }
  }

  for (std::size_t i = 0; i < free_dofs_.size(); ++i) u_full[free_dofs_[i]] = uf[i];
  return u_full;
}

Solution assemble_and_solve(const ElasticityProblem& p) {
  if (p.mesh == nullptr) throw std::invalid_argument("assemble_and_solve: null mesh");
  PlateSolver solver(*p.mesh, p.poisson, p.thickness);
  return {solver.solve(p.moduli, p.traction)};
}

Eigen::Vector3d stress_at(const mesh::Mesh& m, int element, double modulus,
                          double poisson, const Eigen::VectorXd& u, double xi,
                          double eta) {
  const auto conn = m.element(element);
  const int npe = m.nodes_per_element();
  const auto sf = mesh::shape_functions(m.order, xi, eta);
  const Eigen::Matrix2d j = mesh::jacobian(m, element, xi, eta);
  const Eigen::Matrix2d jinv = j.inverse();
  Eigen::Vector3d strain = Eigen::Vector3d::Zero();
  for (int k = 0; k < npe; ++k) {
    const double dnx = jinv(0, 0) * sf.dxi[k] + jinv(0, 1) * sf.deta[k];
    const double dny = jinv(1, 0) * sf.dxi[k] + jinv(1, 1) * sf.deta[k];
    const double ux = u[2 * conn[k]];
    const double uy = u[2 * conn[k] + 1];
    strain[0] += dnx * ux;
    strain[1] += dny * uy;
    strain[2] += dny * ux + dnx * uy;
  }
  return constitutive_matrix(modulus, poisson) * strain;
}

}  // namespace merr::fem

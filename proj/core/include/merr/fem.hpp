#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <vector>

#include "merr/mesh.hpp"

namespace merr::fem {

struct ElasticityProblem {
  const mesh::Mesh* mesh = nullptr;
  Eigen::VectorXd moduli;      // per element, Pa
  double poisson = 0.28;
  double thickness = 0.005;    // m
  double traction = 0.0;       // N per unit edge length, +x on loaded_edge
};

struct Solution {
  Eigen::VectorXd u;  // flattened (u_x, u_y) per node, m
};

// Plane-stress constitutive matrix E/(1-nu^2) [[1,nu,0],[nu,1,0],[0,0,(1-nu)/2]].
Eigen::Matrix3d constitutive_matrix(double modulus, double poisson);

// Gauss-Legendre points and weights on [-1, 1], computed by Newton iteration
// on the Legendre recurrence.
struct GaussRule {
  std::vector<double> points;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int n);

// Full-integration element stiffness (2x2 for Q4, 3x3 for Q8), exactly
// symmetric by construction. Throws on a nonpositive Jacobian.
Eigen::MatrixXd element_stiffness(const mesh::Mesh& m, int element,
                                  double modulus, double poisson,
                                  double thickness);

// Same quadrature loop with a caller-chosen rule; used by convergence and
// oracle comparisons.
Eigen::MatrixXd element_stiffness_with_rule(const mesh::Mesh& m, int element,
                                            double modulus, double poisson,
                                            double thickness,
                                            const GaussRule& rule);

// Unconstrained global stiffness over all 2N dofs.
Eigen::SparseMatrix<double> assemble_stiffness(const mesh::Mesh& m,
                                               const Eigen::VectorXd& moduli,
                                               double poisson,
                                               double thickness);

// Consistent nodal loads for the +x edge traction: half-half per Q4 edge,
// 1/6-2/3-1/6 per Q8 edge segment.
Eigen::VectorXd traction_vector(const mesh::Mesh& m, double traction);

// Reusable solver for one mesh: symmetry constraints eliminated, sparsity
// pattern analyzed once, refactorized per moduli field. Not thread-safe;
// use one instance per worker.
class PlateSolver {
 public:
  PlateSolver(const mesh::Mesh& m, double poisson, double thickness);

  Eigen::VectorXd solve(const Eigen::VectorXd& moduli, double traction);

  const std::vector<int>& free_index() const { return free_index_; }

 private:
  const mesh::Mesh& mesh_;
  double poisson_;
  double thickness_;
  std::vector<int> free_index_;  // global dof -> free dof, -1 if constrained
  std::vector<int> free_dofs_;   // free dof -> global dof
  Eigen::SparseMatrix<double> k_ff_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
  bool analyzed_ = false;

  void assemble_free(const Eigen::VectorXd& moduli);
};

Solution assemble_and_solve(const ElasticityProblem& p);

// Plane-stress stress vector (sxx, syy, sxy) at a reference point of one
// element, from nodal displacements.
Eigen::Vector3d stress_at(const mesh::Mesh& m, int element, double modulus,
                          double poisson, const Eigen::VectorXd& u, double xi,
                          double eta);

}  // namespace merr::fem

#include "merr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace merr::mesh {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kOnAxisTol = 1e-12;

// Fraction along the ray where it exits the unit square.
Eigen::Vector2d ray_exit(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double t = kPlateHalfWidth / std::max(c, s);
  return {t * c, t * s};
}

}  // namespace

Eigen::Vector2d domain_point(double r_frac, double theta) {
  const Eigen::Vector2d inner{kHoleRadius * std::cos(theta),
                              kHoleRadius * std::sin(theta)};
  const Eigen::Vector2d outer = ray_exit(theta);
  return inner + r_frac * (outer - inner);
}

Eigen::Vector2d Mesh::element_centroid(int e) const {
  const auto conn = element(e);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (int k = 0; k < 4; ++k) c += nodes[conn[k]];
  return c / 4.0;
}

Mesh build_mesh(ElementOrder order, int n_radial, int n_circumferential) {
  if (n_radial < 1 || n_circumferential < 1) {
    throw std::invalid_argument("build_mesh: grid divisions must be >= 1");
  }
  const int nr = n_radial;
  const int nc = n_circumferential;

  Mesh m;
  m.order = order;
  m.n_radial = nr;
  m.n_circumferential = nc;

  auto grid_point = [&](double i, double j) {
    return domain_point(i / nr, (kPi / 2.0) * (j / nc));
  };

  // Corner nodes, circumferential-major.
  const int corners = (nr + 1) * (nc + 1);
  m.nodes.reserve(corners);
  for (int j = 0; j <= nc; ++j) {
    for (int i = 0; i <= nr; ++i) {
      m.nodes.push_back(grid_point(i, j));
    }
  }
  auto corner_id = [&](int i, int j) { return j * (nr + 1) + i; };

  if (order == ElementOrder::q4) {
    m.connectivity.reserve(static_cast<std::size_t>(nr) * nc * 4);
    for (int j = 0; j < nc; ++j) {
      for (int i = 0; i < nr; ++i) {
        m.connectivity.push_back(corner_id(i, j));
        m.connectivity.push_back(corner_id(i + 1, j));
        m.connectivity.push_back(corner_id(i + 1, j + 1));
        m.connectivity.push_back(corner_id(i, j + 1));
      }
    }
  } else {
    // Unique corner-pair edges, sorted; midside ids follow all corners.
    std::map<std::pair<int, int>, int> edge_ids;
    auto edge_key = [](int a, int b) {
      return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    };
    for (int j = 0; j < nc; ++j) {
      for (int i = 0; i < nr; ++i) {
        const int c1 = corner_id(i, j), c2 = corner_id(i + 1, j);
        const int c3 = corner_id(i + 1, j + 1), c4 = corner_id(i, j + 1);
        edge_ids.emplace(edge_key(c1, c2), -1);
        edge_ids.emplace(edge_key(c2, c3), -1);
        edge_ids.emplace(edge_key(c3, c4), -1);
        edge_ids.emplace(edge_key(c4, c1), -1);
      }
    }
    int next = corners;
    for (auto& [key, id] : edge_ids) id = next++;

    m.nodes.resize(static_cast<std::size_t>(next));
    for (const auto& [key, id] : edge_ids) {
      // Half-integer grid position of the edge midpoint, mapped through the
      // analytic domain map so hole and outer midside nodes land on the
      // true boundary rather than the chord midpoint.
      const double ia = key.first % (nr + 1), ja = key.first / (nr + 1);
      const double ib = key.second % (nr + 1), jb = key.second / (nr + 1);
      m.nodes[id] = grid_point(0.5 * (ia + ib), 0.5 * (ja + jb));
    }

    m.connectivity.reserve(static_cast<std::size_t>(nr) * nc * 8);
    for (int j = 0; j < nc; ++j) {
      for (int i = 0; i < nr; ++i) {
        const int c1 = corner_id(i, j), c2 = corner_id(i + 1, j);
        const int c3 = corner_id(i + 1, j + 1), c4 = corner_id(i, j + 1);
        m.connectivity.push_back(c1);
        m.connectivity.push_back(c2);
        m.connectivity.push_back(c3);
        m.connectivity.push_back(c4);
        m.connectivity.push_back(edge_ids.at(edge_key(c1, c2)));
        m.connectivity.push_back(edge_ids.at(edge_key(c2, c3)));
        m.connectivity.push_back(edge_ids.at(edge_key(c3, c4)));
        m.connectivity.push_back(edge_ids.at(edge_key(c4, c1)));
      }
    }
  }

  // Boundary sets by coordinate; node order ascending for determinism.
  for (int n = 0; n < m.node_count(); ++n) {
    const auto& p = m.nodes[n];
    if (std::abs(p.y()) <= kOnAxisTol) m.boundary_sets.symmetry_x_axis.push_back(n);
    if (std::abs(p.x()) <= kOnAxisTol) m.boundary_sets.symmetry_y_axis.push_back(n);
    if (std::abs(p.norm() - kHoleRadius) <= kOnAxisTol) {
      m.boundary_sets.hole_boundary.push_back(n);
    }
  }

  // Loaded edge x = 1: outer edges of elements (nr - 1, j) for rays that
  // exit through the right side of the square.
  for (int j = 0; j < nc; ++j) {
    const int c2 = corner_id(nr, j);
    const int c3 = corner_id(nr, j + 1);
    const bool on_right = std::abs(m.nodes[c2].x() - kPlateHalfWidth) <= kOnAxisTol &&
                          std::abs(m.nodes[c3].x() - kPlateHalfWidth) <= kOnAxisTol;
    if (!on_right) continue;
    if (order == ElementOrder::q4) {
      m.boundary_sets.loaded_edge.push_back({c2, -1, c3});
    } else {
      const int e = j * nr + (nr - 1);
      const int mid = m.connectivity[static_cast<std::size_t>(e) * 8 + 5];
      m.boundary_sets.loaded_edge.push_back({c2, mid, c3});
    }
  }

  return m;
}

ShapeEval shape_functions(ElementOrder order, double xi, double eta) {
  ShapeEval out;
  static constexpr double xs[8] = {-1, 1, 1, -1, 0, 1, 0, -1};
  static constexpr double es[8] = {-1, -1, 1, 1, -1, 0, 1, 0};
  if (order == ElementOrder::q4) {
    out.count = 4;
    for (int k = 0; k < 4; ++k) {
      out.value[k] = 0.25 * (1 + xs[k] * xi) * (1 + es[k] * eta);
      out.dxi[k] = 0.25 * xs[k] * (1 + es[k] * eta);
      out.deta[k] = 0.25 * es[k] * (1 + xs[k] * xi);
    }
    return out;
  }
  out.count = 8;
  for (int k = 0; k < 4; ++k) {
    const double xk = xs[k], ek = es[k];
    out.value[k] = 0.25 * (1 + xk * xi) * (1 + ek * eta) * (xk * xi + ek * eta - 1);
    out.dxi[k] = 0.25 * xk * (1 + ek * eta) * (2 * xk * xi + ek * eta);
    out.deta[k] = 0.25 * ek * (1 + xk * xi) * (xk * xi + 2 * ek * eta);
  }
  for (int k = 4; k < 8; ++k) {
    if (xs[k] == 0.0) {  // midside at eta = +-1
      const double ek = es[k];
      out.value[k] = 0.5 * (1 - xi * xi) * (1 + ek * eta);
      out.dxi[k] = -xi * (1 + ek * eta);
      out.deta[k] = 0.5 * ek * (1 - xi * xi);
    } else {  // midside at xi = +-1
      const double xk = xs[k];
      out.value[k] = 0.5 * (1 + xk * xi) * (1 - eta * eta);
      out.dxi[k] = 0.5 * xk * (1 - eta * eta);
      out.deta[k] = -eta * (1 + xk * xi);
    }
  }
  return out;
}

std::array<double, 2> reference_node(ElementOrder order, int k) {
  static constexpr double xs[8] = {-1, 1, 1, -1, 0, 1, 0, -1};
  static constexpr double es[8] = {-1, -1, 1, 1, -1, 0, 1, 0};
  const int npe = order == ElementOrder::q4 ? 4 : 8;
  if (k < 0 || k >= npe) throw std::out_of_range("reference_node: bad index");
  return {xs[k], es[k]};
}

Eigen::Matrix2d jacobian(const Mesh& m, int element, double xi, double eta) {
  const auto sf = shape_functions(m.order, xi, eta);
  const auto conn = m.element(element);
  Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
  for (int k = 0; k < sf.count; ++k) {
    const auto& p = m.nodes[conn[k]];
    j(0, 0) += sf.dxi[k] * p.x();
    j(0, 1) += sf.dxi[k] * p.y();
    j(1, 0) += sf.deta[k] * p.x();
    j(1, 1) += sf.deta[k] * p.y();
  }
  return j;
}

CoincidenceMap build_coincidence_map(const Mesh& q4, const Mesh& q8) {
  constexpr double tol = 1e-9;
  // Q8 nodes sorted by x for a banded search.
  std::vector<int> order(q8.nodes.size());
  for (std::size_t n = 0; n < order.size(); ++n) order[n] = static_cast<int>(n);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return q8.nodes[a].x() < q8.nodes[b].x();
  });
  std::vector<double> xs(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) xs[k] = q8.nodes[order[k]].x();

  CoincidenceMap map;
  map.q4_to_q8.resize(q4.nodes.size(), -1);
  for (int n = 0; n < q4.node_count(); ++n) {
    const auto& p = q4.nodes[n];
    const auto lo = std::lower_bound(xs.begin(), xs.end(), p.x() - tol);
    const auto hi = std::upper_bound(xs.begin(), xs.end(), p.x() + tol);
    int best = -1;
    double best_d = tol;
    for (auto it = lo; it != hi; ++it) {
      const int cand = order[static_cast<std::size_t>(it - xs.begin())];
      const double d = (q8.nodes[cand] - p).norm();
      if (d <= best_d) {
        best_d = d;
        best = cand;
      }
    }
    if (best < 0) {
      throw std::runtime_error("build_coincidence_map: Q4 node " +
                               std::to_string(n) +
                               " has no coincident Q8 node (incompatible grids)");
    }
    map.q4_to_q8[n] = best;
  }
  return map;
}

Eigen::VectorXd restrict_field(const Eigen::VectorXd& field_on_q8,
                               const CoincidenceMap& map) {
  const auto nq4 = static_cast<Eigen::Index>(map.q4_to_q8.size());
  Eigen::VectorXd out(2 * nq4);
  for (Eigen::Index n = 0; n < nq4; ++n) {
    const Eigen::Index t = map.q4_to_q8[static_cast<std::size_t>(n)];
    if (2 * t + 1 >= field_on_q8.size()) {
      throw std::invalid_argument("restrict_field: field length mismatch");
    }
    out[2 * n] = field_on_q8[2 * t];
    out[2 * n + 1] = field_on_q8[2 * t + 1];
  }
  return out;
}

void export_text(const Mesh& m, std::ostream& os) {
  char buf[96];
  os << order_name(m.order) << ' ' << m.node_count() << ' ' << m.element_count()
     << '\n';
  for (const auto& p : m.nodes) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p.x(), p.y());
    os << buf;
  }
  const int npe = m.nodes_per_element();
  for (int e = 0; e < m.element_count(); ++e) {
    const auto conn = m.element(e);
    for (int k = 0; k < npe; ++k) os << conn[k] << (k + 1 < npe ? ' ' : '\n');
  }
}

void export_text_file(const Mesh& m, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_text_file: cannot open " + path);
  export_text(m, os);
}

}  // namespace merr::mesh

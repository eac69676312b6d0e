#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace merr::mesh {

enum class ElementOrder { q4, q8 };

inline const char* order_name(ElementOrder o) {
  return o == ElementOrder::q4 ? "q4" : "q8";
}

// Quarter-plate geometry: unit square with a quarter-circular hole of
// radius 0.4 m at the origin (full plate 2 m x 2 m, opening diameter 0.8 m).
inline constexpr double kHoleRadius = 0.4;
inline constexpr double kPlateHalfWidth = 1.0;

struct BoundaryEdge {
  int a;    // first corner node
  int mid;  // midside node, -1 on Q4 meshes
  int b;    // second corner node
};

struct BoundarySets {
  std::vector<int> symmetry_x_axis;  // nodes on y = 0, u_y constrained
  std::vector<int> symmetry_y_axis;  // nodes on x = 0, u_x constrained
  std::vector<int> hole_boundary;    // nodes on the circular opening
  std::vector<BoundaryEdge> loaded_edge;  // element edges on x = 1
};

// Structured quarter-plate discretization. Nodes are laid out
// circumferential-major: corner (i, j) has index j * (n_radial + 1) + i,
// i = 0 on the hole, j = 0 on the x axis. Q8 midside nodes follow all
// corners, numbered in lexicographically sorted corner-pair order.
struct Mesh {
  ElementOrder order = ElementOrder::q4;
  int n_radial = 0;
  int n_circumferential = 0;
  std::vector<Eigen::Vector2d> nodes;
  std::vector<int> connectivity;  // nodes_per_element() entries per element
  BoundarySets boundary_sets;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int nodes_per_element() const { return order == ElementOrder::q4 ? 4 : 8; }
  int element_count() const {
    return static_cast<int>(connectivity.size()) / nodes_per_element();
  }
  int dof_count() const { return 2 * node_count(); }

  std::span<const int> element(int e) const {
    const int npe = nodes_per_element();
    return {connectivity.data() + static_cast<std::size_t>(e) * npe,
            static_cast<std::size_t>(npe)};
  }

  // Centroid as the average of the element's corner nodes.
  Eigen::Vector2d element_centroid(int e) const;
};

// Analytic domain map. theta in [0, pi/2] picks the ray from the hole point
// (0.4 cos, 0.4 sin) to where the ray exits the unit square; r in [0, 1]
// interpolates linearly along it.
Eigen::Vector2d domain_point(double r_frac, double theta);

Mesh build_mesh(ElementOrder order, int n_radial, int n_circumferential);

struct ShapeEval {
  int count = 0;
  std::array<double, 8> value{};
  std::array<double, 8> dxi{};
  std::array<double, 8> deta{};
};

// Q4 bilinear / Q8 serendipity basis on the reference square [-1, 1]^2.
ShapeEval shape_functions(ElementOrder order, double xi, double eta);

// Reference coordinates of local node k.
std::array<double, 2> reference_node(ElementOrder order, int k);

// Jacobian of the isoparametric map at (xi, eta) for one element.
Eigen::Matrix2d jacobian(const Mesh& m, int element, double xi, double eta);

struct CoincidenceMap {
  std::vector<int> q4_to_q8;  // per Q4 node, index of its coincident Q8 node
};

// Throws std::runtime_error if any Q4 node has no Q8 node within 1e-9 m.
CoincidenceMap build_coincidence_map(const Mesh& q4, const Mesh& q8);

// Restriction of a flattened Q8 nodal field (u_x, u_y per node) to Q4 nodes
// by direct gather at coincident nodes.
Eigen::VectorXd restrict_field(const Eigen::VectorXd& field_on_q8,
                               const CoincidenceMap& map);

// Plain-text export: "order node_count element_count" header, then one
// coordinate line per node and one connectivity line per element.
void export_text(const Mesh& m, std::ostream& os);
void export_text_file(const Mesh& m, const std::string& path);

}  // namespace merr::mesh

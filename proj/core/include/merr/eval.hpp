#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "merr/dataset.hpp"
#include "merr/mesh.hpp"
#include "merr/model.hpp"

namespace merr::eval {

// Signed prediction - truth values pooled over the test set, split by DOF
// direction.
struct HeadDifferences {
  std::vector<double> x;
  std::vector<double> y;
};

// Per-Q4-node statistics of |e_pred - e_true| over the test set.
struct NodeMaps {
  Eigen::VectorXd mean_x, std_x, mean_y, std_y;
};

struct TestSetEval {
  HeadDifferences err_diff;
  HeadDifferences super_diff;
  NodeMaps maps;
};

// One deterministic chunked pass over the test set in eval mode.
TestSetEval evaluate_test_set(const model::PinnModel<float>& m,
                              const model::DataView& test);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries, symmetric about 0
  std::vector<long long> count_x;
  std::vector<long long> count_y;

  long long total_x() const;
  long long total_y() const;
};

// Symmetric bins spanning +-5 robust std (MAD * 1.4826) of the pooled
// differences; outliers are clamped into the end bins so counts are
// conserved.
Histogram difference_histogram(const HeadDifferences& diffs, int n_bins);

struct SeriesStats {
  double mean = 0.0;
  double stddev = 0.0;
};
SeriesStats series_stats(const std::vector<double>& values);

enum class Head { error, super };

struct NodalComparison {
  Head head = Head::error;
  Eigen::VectorXd truth_x, truth_y, pred_x, pred_y;  // ordered by node index
};

NodalComparison nodal_comparison(const model::PinnModel<float>& m,
                                 const dataset::Sample& sample, Head head);

// Superresolved Q8 field for one sample (eval mode).
Eigen::VectorXd superresolve(const model::PinnModel<float>& m,
                             const Eigen::VectorXd& u_r);

// ---- Table-1 style ablation ----

struct AblationCase {
  std::string label;        // "1", "2", "3"
  std::string flags_name;   // "l_u+l_super", "l_u", "-"
  model::LossFlags flags;
  model::TrainResult result;
  double train_mean = 0.0, train_std = 0.0;  // over the final <=10 epochs
  double test_mean = 0.0, test_std = 0.0;
};

struct AblationTable {
  std::vector<AblationCase> cases;
};

// Three cases from identical initial weights (same init seed) and identical
// training streams; only the loss composition differs.
AblationTable run_ablation(const model::DataView& train_data,
                           const model::DataView& test_data,
                           const model::ModelDims& dims,
                           const model::TrainConfig& cfg,
                           std::uint64_t init_seed, std::ostream* log = nullptr);

// ---- CSV / SVG writers ----

void write_histogram_csv(const Histogram& h, const std::string& path);
void write_maps_csv(const NodeMaps& maps, const mesh::Mesh& q4,
                    const std::string& path);
void write_nodal_comparison_csv(const NodalComparison& c, const mesh::Mesh& m,
                                const std::string& path);
void write_ablation_csv(const AblationTable& t, const std::string& path);
void write_superres_csv(const Eigen::VectorXd& pred, const Eigen::VectorXd* truth,
                        const mesh::Mesh& q8, const std::string& path);
void write_uncertainty_csv(const model::McResult& mc, const mesh::Mesh& q4,
                           const mesh::Mesh& q8, const std::string& err_path,
                           const std::string& super_path);

// Filled-element heatmap of a per-node scalar field as a standalone SVG;
// byte-identical for identical inputs.
void render_heatmap(const Eigen::VectorXd& nodal, const mesh::Mesh& m,
                    const std::string& title, const std::string& path);

}  // namespace merr::eval

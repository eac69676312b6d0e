#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "merr/fem.hpp"
#include "merr/grf.hpp"
#include "merr/mesh.hpp"

namespace merr::dataset {

struct GenConfig {
  int q4_nr = 20, q4_nc = 40;
  int q8_nr = 40, q8_nc = 80;
  double e0 = 2.0e11;
  double std_lo_frac = 0.1, std_hi_frac = 0.5;
  double corr_len_x = 0.25, corr_len_y = 0.25;
  double nugget = 1e-10;
  double floor_frac = 0.05;
  double load_lo = 1.0, load_hi = 5.0e5;
  double poisson = 0.28;
  double thickness = 0.005;
  int count = 10000;
  std::uint64_t master_seed = 42;
};

// FNV-1a over the canonical field string; identifies compatible files for
// resume and guards against mixing configurations.
std::uint64_t config_hash(const GenConfig& cfg);

struct Sample {
  Eigen::VectorXd u_r;      // Q4 solution, 2 * n_q4
  Eigen::VectorXd u_h_q8;   // Q8 solution, 2 * n_q8
  Eigen::VectorXd u_h_q4;   // Q8 solution restricted to Q4 nodes
  Eigen::VectorXd e;        // u_h_q4 - u_r
  double load = 0.0;
  double std_used = 0.0;
  std::uint64_t index = 0;  // sample RNG key under the dataset master seed
};

struct DatasetMeta {
  std::uint32_t version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  int q4_nr = 0, q4_nc = 0, q8_nr = 0, q8_nc = 0;
  std::int64_t len_ur = 0;  // 2 * n_q4
  std::int64_t len_uh = 0;  // 2 * n_q8
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

// Everything shared across sample generations: meshes, coincidence map,
// material spec and its correlation factor. Immutable once built.
class GenerationContext {
 public:
  explicit GenerationContext(const GenConfig& cfg);

  const GenConfig& config() const { return cfg_; }
  const mesh::Mesh& q4() const { return q4_; }
  const mesh::Mesh& q8() const { return q8_; }
  const mesh::CoincidenceMap& coincidence() const { return map_; }
  const grf::GrfSpec& spec() const { return spec_; }
  const grf::CorrelationFactor& factor() const { return factor_; }
  DatasetMeta meta() const;

 private:
  GenConfig cfg_;
  mesh::Mesh q4_;
  mesh::Mesh q8_;
  mesh::CoincidenceMap map_;
  grf::GrfSpec spec_;
  grf::CorrelationFactor factor_;
};

// Per-worker reusable solvers (sparsity analyzed once).
struct WorkerSolvers {
  fem::PlateSolver q4;
  fem::PlateSolver q8;
  explicit WorkerSolvers(const GenerationContext& ctx);
};

// Deterministic in (config, index); FEM failures are rethrown with the
// sample index attached.
Sample generate_sample(const GenerationContext& ctx, WorkerSolvers& solvers,
                       std::uint64_t index);

// Incremental, resumable writer. Records are appended strictly in index
// order; an existing file must match the configuration hash.
class DatasetWriter {
 public:
  DatasetWriter(const GenConfig& cfg, const std::string& path);
  ~DatasetWriter();

  int existing() const { return existing_; }
  void append(const Sample& s);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int existing_ = 0;
};

// Generates cfg.count samples into path (resuming if the file already has a
// prefix), writes the JSON metadata sidecar next to it, and returns the full
// dataset read back from disk.
Dataset generate_dataset(const GenConfig& cfg, const std::string& path,
                         int threads, std::ostream* log = nullptr);

// Seed-deterministic disjoint split; sample order within each part follows
// the original index order.
std::pair<Dataset, Dataset> split(const Dataset& ds, int n_test,
                                  std::uint64_t seed);

void write_binary(const Dataset& ds, const std::string& path);
Dataset read_binary(const std::string& path);

std::string meta_json(const GenConfig& cfg, int count);
void write_meta_json(const GenConfig& cfg, int count, const std::string& path);

// Lossy human-readable export of the Q4-sampled fields, one row per
// (sample, node).
void write_csv(const Dataset& ds, const mesh::Mesh& q4, const std::string& path);

}  // namespace merr::dataset

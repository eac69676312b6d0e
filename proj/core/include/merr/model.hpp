#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "merr/dataset.hpp"
#include "merr/nn.hpp"
#include "merr/rng.hpp"

namespace merr::model {

struct ModelDims {
  Eigen::Index input = 1722;
  Eigen::Index h1 = 1722;       // error-branch hidden width
  Eigen::Index h2 = 2048;       // superresolution-branch hidden width
  Eigen::Index out_error = 1722;
  Eigen::Index out_super = 19682;
  double bound_error = 1e-4;    // m
  double bound_super = 1e-2;    // m
  double dropout = 0.1;
};

// Shared trunk, then an error head and a superresolution head. The loss
// weights are carried as unconstrained s_i with beta_i = exp(-s_i), so the
// objective's beta_i * L_i + s_i term cannot collapse the physics losses to
// zero weight.
template <typename T>
struct PinnModel {
  ModelDims dims;
  nn::Stack<T> trunk;
  nn::Stack<T> branch_error;
  nn::Stack<T> branch_super;
  nn::Vector<T> s;   // (s1, s2)
  nn::Vector<T> gs;

  static PinnModel create(const ModelDims& dims, std::uint64_t init_seed);

  T beta1() const { return std::exp(-s[0]); }
  T beta2() const { return std::exp(-s[1]); }

  struct Outputs {
    nn::Matrix<T> e_pred;   // out_error x batch
    nn::Matrix<T> u_super;  // out_super x batch
  };

  // Training-path forward; tapes are stored in the stacks for backward().
  Outputs forward(const nn::Matrix<T>& u_r, nn::Mode mode, rng::Stream* stream);
  // Accumulates parameter gradients from head gradients.
  void backward(const nn::Matrix<T>& g_error, const nn::Matrix<T>& g_super);

  // Const forward with caller-independent scratch tapes; safe to call
  // concurrently on one model instance.
  Outputs predict(const nn::Matrix<T>& u_r, nn::Mode mode,
                  rng::Stream* stream) const;

  std::vector<nn::ParamView<T>> params();
  void zero_grad();
  Eigen::Index param_count();
};

// ---- losses (Eq. values reported in meters per degree of freedom) ----

struct LossFlags {
  bool use_u = false;
  bool use_super = false;
};

struct LossBreakdown {
  double l_error = 0.0;   // raw mean absolute error-head mismatch
  double l_u = 0.0;       // raw, before beta1
  double l_super = 0.0;   // raw, before beta2
  double l_total = 0.0;   // objective incl. weight regularizers
  double beta1 = 1.0;
  double beta2 = 1.0;
};

// Mean over batch of the per-sample mean absolute component difference;
// accumulated in double regardless of T.
template <typename T>
double mean_abs_diff(const nn::Matrix<T>& a, const nn::Matrix<T>& b);

template <typename T>
double loss_error(const nn::Matrix<T>& e_pred, const nn::Matrix<T>& e_true);

template <typename T>
double loss_u(const nn::Matrix<T>& e_pred, const nn::Matrix<T>& u_r,
              const nn::Matrix<T>& u_h_q4, double beta1);

template <typename T>
double loss_super(const nn::Matrix<T>& u_super_pred,
                  const nn::Matrix<T>& u_h_q8, double beta2);

template <typename T>
LossBreakdown loss_total(const typename PinnModel<T>::Outputs& out,
                         const nn::Matrix<T>& u_r, const nn::Matrix<T>& e_true,
                         const nn::Matrix<T>& u_h_q4,
                         const nn::Matrix<T>& u_h_q8, const PinnModel<T>& model,
                         LossFlags flags);

template <typename T>
nn::Vector<T> compensate(const nn::Vector<T>& u_r, const nn::Vector<T>& e_pred);

// ---- optimizer ----

template <typename T>
class Adam {
 public:
  Adam() = default;
  void step(std::vector<nn::ParamView<T>>& params, double lr);
  long steps() const { return step_; }

  // Exposed for checkpointing.
  std::vector<nn::Vector<T>>& m() { return m_; }
  std::vector<nn::Vector<T>>& v() { return v_; }
  const std::vector<nn::Vector<T>>& m() const { return m_; }
  const std::vector<nn::Vector<T>>& v() const { return v_; }
  void set_steps(long t) { step_ = t; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  long step_ = 0;
  std::vector<nn::Vector<T>> m_;
  std::vector<nn::Vector<T>> v_;
};

// ---- training ----

struct TrainConfig {
  int batch_size = 32;
  int epoch_subsample = 4096;
  double lr0 = 1e-5;
  double decay = 0.99;      // per-epoch exponential
  int max_epochs = 300;
  double input_noise_rel = 1e-4;  // 0.01% of per-feature RMS
  int patience = 20;
  double min_delta = 0.0;
  std::uint64_t seed = 42;
};

struct EpochRecord {
  int epoch = 0;           // 1-based
  double lr = 0.0;
  double l_error_train = 0.0;
  double l_error_test = 0.0;
  double l_u_raw = 0.0;
  double l_super_raw = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double objective = 0.0;
};

// Feature-major float copies of the dataset fields used in training.
struct DataView {
  nn::Matrix<float> u_r;     // D x N
  nn::Matrix<float> e;       // D x N
  nn::Matrix<float> u_h_q4;  // D x N
  nn::Matrix<float> u_h_q8;  // D2 x N
  int size() const { return static_cast<int>(u_r.cols()); }
};
DataView make_view(const dataset::Dataset& ds);

struct TrainResult {
  PinnModel<float> model;       // best-test checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = 0;           // 1-based
  double best_test = 0.0;
  long total_steps = 0;
};

TrainResult train(PinnModel<float> model, const DataView& train_data,
                  const DataView& test_data, const TrainConfig& cfg,
                  LossFlags flags, std::ostream* log = nullptr);

// Test-set error-head loss in eval mode (deterministic reduction).
double evaluate_l_error(const PinnModel<float>& model, const DataView& data,
                        int chunk = 256);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path);

// ---- MC dropout ----

struct McResult {
  Eigen::VectorXd mean_e, std_e;
  Eigen::VectorXd mean_u, std_u;
};

// n_passes stochastic forward passes with dropout active; mean/std use a
// shifted accumulation merged in fixed chunk order, so results do not depend
// on the thread count.
McResult mc_dropout_predict(const PinnModel<float>& model,
                            const Eigen::VectorXf& u_r, int n_passes,
                            std::uint64_t seed, int threads = 1);

// ---- checkpoint ----

void save_checkpoint(const PinnModel<float>& model, const Adam<float>* adam,
                     const std::string& path);

struct LoadedCheckpoint {
  PinnModel<float> model;
  std::optional<Adam<float>> adam;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// ---- gradient check of the full composition (64-bit) ----

// Smooth probe objective: random linear functionals of both heads plus the
// weight-regularization terms; dropout masks fixed by reseeding.
nn::GradCheckReport model_gradient_check(const ModelDims& dims,
                                         Eigen::Index batch,
                                         std::uint64_t seed);

}  // namespace merr::model

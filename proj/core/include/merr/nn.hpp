#pragma once

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "merr/rng.hpp"

namespace merr::nn {

enum class Mode { train, eval, mc_dropout };

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Flat view over one parameter block and its gradient accumulator.
template <typename T>
struct ParamView {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

// Per-invocation recorded values; backward consumes exactly what forward
// produced (including sampled dropout masks).
template <typename T>
struct Tape {
  Matrix<T> x;        // affine / prelu input
  Matrix<T> z;        // instance norm normalized values
  Vector<T> inv_std;  // instance norm, per column
  Matrix<T> mask;     // dropout
  Matrix<T> sig;      // bounded sigmoid sigma(x)
};

template <typename T>
struct Affine {
  Matrix<T> w;  // out x in
  Vector<T> b;
  Matrix<T> gw;
  Vector<T> gb;

  Affine(Eigen::Index in, Eigen::Index out);
  // Uniform +-sqrt(6 / (fan_in + fan_out)), zero bias.
  void init(rng::Stream& stream);

  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const;
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& gy);
  void collect(const std::string& prefix, std::vector<ParamView<T>>& out);
};

// Per-sample normalization over the feature axis with learnable affine.
template <typename T>
struct InstanceNorm {
  Vector<T> gamma;
  Vector<T> beta;
  Vector<T> ggamma;
  Vector<T> gbeta;
  T eps;

  explicit InstanceNorm(Eigen::Index dim, T epsilon = T(1e-5));

  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const;
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& gy);
  void collect(const std::string& prefix, std::vector<ParamView<T>>& out);
};

template <typename T>
struct Dropout {
  double rate = 0.1;

  explicit Dropout(double p) : rate(p) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw std::invalid_argument("Dropout: rate must be in [0, 1)");
    }
  }

  // Active in train and mc_dropout modes; identity in eval. Mask entries are
  // drawn column-major so a fixed stream reproduces the mask exactly.
  Matrix<T> forward(const Matrix<T>& x, Mode mode, rng::Stream* stream,
                    Tape<T>& tape) const;
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& gy) const;
};

// One learnable negative slope per layer instance.
template <typename T>
struct PReLU {
  Vector<T> slope;   // size 1
  Vector<T> gslope;

  explicit PReLU(T initial_slope = T(0.25));

  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const;
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& gy);
  void collect(const std::string& prefix, std::vector<ParamView<T>>& out);
};

// y = bound * (2 sigma(x) - 1), strictly inside (-bound, bound).
template <typename T>
struct BoundedSigmoid {
  T bound;

  explicit BoundedSigmoid(T b) : bound(b) {}

  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const;
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& gy) const;
};

template <typename T>
using Layer = std::variant<Affine<T>, InstanceNorm<T>, Dropout<T>, PReLU<T>,
                           BoundedSigmoid<T>>;

template <typename T>
Matrix<T> forward_layer(const Layer<T>& layer, const Matrix<T>& x, Mode mode,
                        rng::Stream* stream, Tape<T>& tape);

template <typename T>
Matrix<T> backward_layer(Layer<T>& layer, const Tape<T>& tape,
                         const Matrix<T>& gy);

template <typename T>
void collect_layer_params(Layer<T>& layer, const std::string& prefix,
                          std::vector<ParamView<T>>& out);

// A plain sequence of layers sharing one tape vector.
template <typename T>
struct Stack {
  std::vector<Layer<T>> layers;
  std::vector<Tape<T>> tapes;

  Matrix<T> forward(const Matrix<T>& x, Mode mode, rng::Stream* stream);
  // gy for the stack output; returns gradient at the stack input and
  // accumulates parameter gradients.
  Matrix<T> backward(const Matrix<T>& gy);
  void collect(const std::string& prefix, std::vector<ParamView<T>>& out);
};

template <typename T>
void zero_grads(std::vector<ParamView<T>>& params);

// ---- finite-difference gradient checking (64-bit only) ----

struct GradCheckEntry {
  std::string block;
  double worst_rel = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> blocks;
  double worst() const;
};

// Central differences with step 1e-6 * max(1, |theta|) against the analytic
// gradients currently stored in the views. `loss` must be a pure function of
// the parameter values (fix dropout masks by reseeding the same stream).
GradCheckReport finite_difference_check(std::vector<ParamView<double>>& params,
                                        const std::function<double()>& loss);

// Self-contained check of one layer: random input and a random linear probe
// of the output; checks parameter grads and the input grad.
GradCheckReport layer_gradient_check(Layer<double>& layer, Eigen::Index in_dim,
                                     Eigen::Index batch, std::uint64_t seed);

}  // namespace merr::nn

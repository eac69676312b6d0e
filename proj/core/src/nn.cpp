#include "merr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace merr::nn {

namespace {

template <typename T>
void check_width(const Matrix<T>& x, Eigen::Index expect, const char* who) {
  if (x.rows() != expect) {
    throw std::invalid_argument(std::string(who) + ": input width " +
                                std::to_string(x.rows()) + ", expected " +
                                std::to_string(expect));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---- Affine ----

template <typename T>
Affine<T>::Affine(Eigen::Index in, Eigen::Index out)
    : w(Matrix<T>::Zero(out, in)),
      b(Vector<T>::Zero(out)),
      gw(Matrix<T>::Zero(out, in)),
      gb(Vector<T>::Zero(out)) {}

template <typename T>
void Affine<T>::init(rng::Stream& stream) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      w(r, c) = static_cast<T>(stream.uniform(-bound, bound));
    }
  }
  b.setZero();
}

template <typename T>
Matrix<T> Affine<T>::forward(const Matrix<T>& x, Tape<T>& tape) const {
  check_width(x, w.cols(), "Affine");
  tape.x = x;
  Matrix<T> y = w * x;
  y.colwise() += b;
  return y;
}

template <typename T>
Matrix<T> Affine<T>::backward(const Tape<T>& tape, const Matrix<T>& gy) {
  gw.noalias() += gy * tape.x.transpose();
  gb.noalias() += gy.rowwise().sum();
  return w.transpose() * gy;
}

template <typename T>
void Affine<T>::collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
  out.push_back({prefix + ".w", w.data(), gw.data(), w.rows(), w.cols()});
  out.push_back({prefix + ".b", b.data(), gb.data(), b.rows(), 1});
}

// ---- InstanceNorm ----

template <typename T>
InstanceNorm<T>::InstanceNorm(Eigen::Index dim, T epsilon)
    : gamma(Vector<T>::Ones(dim)),
      beta(Vector<T>::Zero(dim)),
      ggamma(Vector<T>::Zero(dim)),
      gbeta(Vector<T>::Zero(dim)),
      eps(epsilon) {
  if (!(eps > T(0))) {
    throw std::invalid_argument("InstanceNorm: epsilon must be > 0");
  }
}

template <typename T>
Matrix<T> InstanceNorm<T>::forward(const Matrix<T>& x, Tape<T>& tape) const {
  check_width(x, gamma.size(), "InstanceNorm");
  const auto d = x.rows();
  tape.z.resize(x.rows(), x.cols());
  tape.inv_std.resize(x.cols());
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const T mean = x.col(c).sum() / static_cast<T>(d);
    const T var = (x.col(c).array() - mean).square().sum() / static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    tape.inv_std[c] = inv;
    tape.z.col(c) = (x.col(c).array() - mean) * inv;
    y.col(c) = gamma.array() * tape.z.col(c).array() + beta.array();
  }
  return y;
}

template <typename T>
Matrix<T> InstanceNorm<T>::backward(const Tape<T>& tape, const Matrix<T>& gy) {
  const auto d = gy.rows();
  Matrix<T> gx(gy.rows(), gy.cols());
  for (Eigen::Index c = 0; c < gy.cols(); ++c) {
    ggamma.array() += gy.col(c).array() * tape.z.col(c).array();
    gbeta += gy.col(c);
    // d/dx of (x - mean) * inv_std including the mean/variance coupling.
    const auto gz = (gy.col(c).array() * gamma.array()).eval();
    const T gz_mean = gz.sum() / static_cast<T>(d);
    const T gzz_mean =
        (gz * tape.z.col(c).array()).sum() / static_cast<T>(d);
    gx.col(c) = tape.inv_std[c] *
                (gz - gz_mean - tape.z.col(c).array() * gzz_mean);
  }
  return gx;
}

template <typename T>
void InstanceNorm<T>::collect(const std::string& prefix,
                              std::vector<ParamView<T>>& out) {
  out.push_back({prefix + ".gamma", gamma.data(), ggamma.data(), gamma.rows(), 1});
  out.push_back({prefix + ".beta", beta.data(), gbeta.data(), beta.rows(), 1});
}

// ---- Dropout ----

template <typename T>
Matrix<T> Dropout<T>::forward(const Matrix<T>& x, Mode mode, rng::Stream* stream,
                              Tape<T>& tape) const {
  if (mode == Mode::eval || rate == 0.0) {
    tape.mask.resize(0, 0);
    return x;
  }
  if (stream == nullptr) {
    throw std::invalid_argument("Dropout: stochastic mode without a stream");
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  tape.mask.resize(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      tape.mask(r, c) = stream->uniform() < rate ? T(0) : keep_scale;
    }
  }
  return tape.mask.array() * x.array();
}

template <typename T>
Matrix<T> Dropout<T>::backward(const Tape<T>& tape, const Matrix<T>& gy) const {
  if (tape.mask.size() == 0) return gy;
  return tape.mask.array() * gy.array();
}

// ---- PReLU ----

template <typename T>
PReLU<T>::PReLU(T initial_slope)
    : slope(Vector<T>::Constant(1, initial_slope)), gslope(Vector<T>::Zero(1)) {}

template <typename T>
Matrix<T> PReLU<T>::forward(const Matrix<T>& x, Tape<T>& tape) const {
  tape.x = x;
  const T a = slope[0];
  return x.unaryExpr([a](T v) { return v >= T(0) ? v : a * v; });
}

template <typename T>
Matrix<T> PReLU<T>::backward(const Tape<T>& tape, const Matrix<T>& gy) {
  const T a = slope[0];
  T ga = T(0);
  Matrix<T> gx(gy.rows(), gy.cols());
  for (Eigen::Index c = 0; c < gy.cols(); ++c) {
    for (Eigen::Index r = 0; r < gy.rows(); ++r) {
      const T x = tape.x(r, c);
      gx(r, c) = x >= T(0) ? gy(r, c) : a * gy(r, c);
      if (x < T(0)) ga += x * gy(r, c);
    }
  }
  gslope[0] += ga;
  return gx;
}

template <typename T>
void PReLU<T>::collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
  out.push_back({prefix + ".slope", slope.data(), gslope.data(), 1, 1});
}

// ---- BoundedSigmoid ----

template <typename T>
Matrix<T> BoundedSigmoid<T>::forward(const Matrix<T>& x, Tape<T>& tape) const {
  tape.sig = x.unaryExpr([](T v) { return stable_sigmoid(v); });
  const T b = bound;
  // The output contract is the open interval (-b, b); saturated sigmoids
  // would otherwise round onto the bound itself, so clamp by one ulp.
  const T hi = std::nextafter(b, T(0));
  return tape.sig.unaryExpr([b, hi](T s) {
    const T y = b * (T(2) * s - T(1));
    return std::min(std::max(y, -hi), hi);
  });
}

template <typename T>
Matrix<T> BoundedSigmoid<T>::backward(const Tape<T>& tape,
                                      const Matrix<T>& gy) const {
  const T b = bound;
  return (gy.array() *
          tape.sig.array().unaryExpr([b](T s) { return T(2) * b * s * (T(1) - s); }))
      .matrix();
}

// ---- variant dispatch ----

template <typename T>
Matrix<T> forward_layer(const Layer<T>& layer, const Matrix<T>& x, Mode mode,
                        rng::Stream* stream, Tape<T>& tape) {
  return std::visit(
      [&](const auto& l) -> Matrix<T> {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Dropout<T>>) {
          return l.forward(x, mode, stream, tape);
        } else {
          return l.forward(x, tape);
        }
      },
      layer);
}

template <typename T>
Matrix<T> backward_layer(Layer<T>& layer, const Tape<T>& tape,
                         const Matrix<T>& gy) {
  return std::visit([&](auto& l) -> Matrix<T> { return l.backward(tape, gy); },
                    layer);
}

template <typename T>
void collect_layer_params(Layer<T>& layer, const std::string& prefix,
                          std::vector<ParamView<T>>& out) {
  std::visit(
      [&](auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Affine<T>> ||
                      std::is_same_v<L, InstanceNorm<T>> ||
                      std::is_same_v<L, PReLU<T>>) {
          l.collect(prefix, out);
        }
      },
      layer);
}

// ---- Stack ----

template <typename T>
Matrix<T> Stack<T>::forward(const Matrix<T>& x, Mode mode, rng::Stream* stream) {
  tapes.resize(layers.size());
  Matrix<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = forward_layer(layers[i], h, mode, stream, tapes[i]);
  }
  return h;
}

template <typename T>
Matrix<T> Stack<T>::backward(const Matrix<T>& gy) {
  if (tapes.size() != layers.size()) {
    throw std::logic_error("Stack::backward without a matching forward");
  }
  Matrix<T> g = gy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = backward_layer(layers[i], tapes[i], g);
  }
  return g;
}

template <typename T>
void Stack<T>::collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    collect_layer_params(layers[i], prefix + "." + std::to_string(i), out);
  }
}

template <typename T>
void zero_grads(std::vector<ParamView<T>>& params) {
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p.grad[i] = T(0);
  }
}

// ---- gradient checking ----

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : blocks) w = std::max(w, e.worst_rel);
  return w;
}

GradCheckReport finite_difference_check(std::vector<ParamView<double>>& params,
                                        const std::function<double()>& loss) {
  GradCheckReport report;
  for (auto& p : params) {
    // Central differences for the whole block, then errors normalized by the
    // block's gradient scale (floored for all-zero blocks such as
    // dropout-masked inputs).
    double scale = 0.0;
    double worst_abs = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double theta = p.value[i];
      const double h = 1e-6 * std::max(1.0, std::abs(theta));
      p.value[i] = theta + h;
      const double up = loss();
      p.value[i] = theta - h;
      const double down = loss();
      p.value[i] = theta;
      const double fd = (up - down) / (2.0 * h);
      scale = std::max(scale, std::abs(fd));
      worst_abs = std::max(worst_abs, std::abs(p.grad[i] - fd));
    }
    report.blocks.push_back({p.name, worst_abs / std::max(scale, 1e-12)});
  }
  return report;
}

GradCheckReport layer_gradient_check(Layer<double>& layer, Eigen::Index in_dim,
                                     Eigen::Index batch, std::uint64_t seed) {
  rng::Stream data_stream(seed, rng::Domain::probe, 1);
  Matrix<double> x(in_dim, batch);
  for (Eigen::Index c = 0; c < batch; ++c) {
    for (Eigen::Index r = 0; r < in_dim; ++r) x(r, c) = data_stream.normal();
  }

  // Probe matrix and output baseline sized lazily from the first pass. The
  // baseline centers the probe loss at the unperturbed output, which keeps
  // finite-difference cancellation at the output scale rather than the loss
  // scale.
  Matrix<double> probe, baseline;
  auto run = [&](bool with_grads, Matrix<double>* gx_out) {
    Tape<double> tape;
    rng::Stream drop_stream(seed, rng::Domain::dropout, 7);
    Matrix<double> y = forward_layer(layer, x, Mode::train, &drop_stream, tape);
    if (probe.size() == 0) {
      rng::Stream probe_stream(seed, rng::Domain::probe, 2);
      probe.resize(y.rows(), y.cols());
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          probe(r, c) = probe_stream.normal();
        }
      }
      baseline = y;
    }
    if (with_grads) {
      Matrix<double> gx = backward_layer(layer, tape, probe);
      if (gx_out) *gx_out = gx;
    }
    return (probe.array() * (y - baseline).array()).sum();
  };

  std::vector<ParamView<double>> params;
  collect_layer_params(layer, "layer", params);
  zero_grads(params);
  Matrix<double> gx;
  run(true, &gx);

  // Expose the input as one more checked block.
  Matrix<double> gx_copy = gx;
  params.push_back({"input", x.data(), gx_copy.data(), x.rows(), x.cols()});

  return finite_difference_check(params, [&]() { return run(false, nullptr); });
}

// ---- explicit instantiations ----

#define MERR_INSTANTIATE(T)                                                    \
  template struct Affine<T>;                                                   \
  template struct InstanceNorm<T>;                                             \
  template struct Dropout<T>;                                                  \
  template struct PReLU<T>;                                                    \
  template struct BoundedSigmoid<T>;                                           \
  template struct Stack<T>;                                                    \
  template Matrix<T> forward_layer<T>(const Layer<T>&, const Matrix<T>&, Mode, \
                                      rng::Stream*, Tape<T>&);                 \
  template Matrix<T> backward_layer<T>(Layer<T>&, const Tape<T>&,              \
                                       const Matrix<T>&);                      \
  template void collect_layer_params<T>(Layer<T>&, const std::string&,         \
                                        std::vector<ParamView<T>>&);           \
  template void zero_grads<T>(std::vector<ParamView<T>>&);

MERR_INSTANTIATE(float)
MERR_INSTANTIATE(double)

#undef MERR_INSTANTIATE

}  // namespace merr::nn

#include "merr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace merr::eval {

TestSetEval evaluate_test_set(const model::PinnModel<float>& m,
                              const model::DataView& test) {
  const int n = test.size();
  if (n == 0) throw std::invalid_argument("evaluate_test_set: empty test set");
  const Eigen::Index d_err = test.e.rows();
  const Eigen::Index d_sup = test.u_h_q8.rows();
  const Eigen::Index nodes = d_err / 2;

  TestSetEval ev;
  ev.err_diff.x.reserve(static_cast<std::size_t>(n) * nodes);
  ev.err_diff.y.reserve(static_cast<std::size_t>(n) * nodes);
  ev.super_diff.x.reserve(static_cast<std::size_t>(n) * (d_sup / 2));
  ev.super_diff.y.reserve(static_cast<std::size_t>(n) * (d_sup / 2));

  Eigen::VectorXd sum_x = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd sq_x = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd sum_y = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd sq_y = Eigen::VectorXd::Zero(nodes);

  constexpr int kChunk = 64;
  for (int start = 0; start < n; start += kChunk) {
    const int bs = std::min(kChunk, n - start);
    const auto out = m.predict(test.u_r.middleCols(start, bs), nn::Mode::eval,
                               nullptr);
    for (int c = 0; c < bs; ++c) {
      for (Eigen::Index node = 0; node < nodes; ++node) {
        const double dx = static_cast<double>(out.e_pred(2 * node, c)) -
                          static_cast<double>(test.e(2 * node, start + c));
        const double dy = static_cast<double>(out.e_pred(2 * node + 1, c)) -
                          static_cast<double>(test.e(2 * node + 1, start + c));
        ev.err_diff.x.push_back(dx);
        ev.err_diff.y.push_back(dy);
        sum_x[node] += std::abs(dx);
        sq_x[node] += dx * dx;
        sum_y[node] += std::abs(dy);
        sq_y[node] += dy * dy;
      }
      for (Eigen::Index node = 0; node < d_sup / 2; ++node) {
        ev.super_diff.x.push_back(
            static_cast<double>(out.u_super(2 * node, c)) -
            static_cast<double>(test.u_h_q8(2 * node, start + c)));
        ev.super_diff.y.push_back(
            static_cast<double>(out.u_super(2 * node + 1, c)) -
            static_cast<double>(test.u_h_q8(2 * node + 1, start + c)));
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  ev.maps.mean_x = sum_x * inv_n;
  ev.maps.mean_y = sum_y * inv_n;
  // Materialized mean squares keep the n = 1 cancellation exact (no fused
  // multiply-add across the subtraction).
  const Eigen::VectorXd mx2 = ev.maps.mean_x.cwiseProduct(ev.maps.mean_x);
  const Eigen::VectorXd my2 = ev.maps.mean_y.cwiseProduct(ev.maps.mean_y);
  ev.maps.std_x = (sq_x * inv_n - mx2).cwiseMax(0.0).cwiseSqrt();
  ev.maps.std_y = (sq_y * inv_n - my2).cwiseMax(0.0).cwiseSqrt();
  return ev;
}

long long Histogram::total_x() const {
  long long t = 0;
  for (auto c : count_x) t += c;
  return t;
}

long long Histogram::total_y() const {
  long long t = 0;
  for (auto c : count_y) t += c;
  return t;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const auto lower =
        *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace

Histogram difference_histogram(const HeadDifferences& diffs, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("difference_histogram: n_bins < 2");
  if (diffs.x.empty() && diffs.y.empty()) {
    throw std::invalid_argument("difference_histogram: no differences");
  }
  std::vector<double> pooled;
  pooled.reserve(diffs.x.size() + diffs.y.size());
  pooled.insert(pooled.end(), diffs.x.begin(), diffs.x.end());
  pooled.insert(pooled.end(), diffs.y.begin(), diffs.y.end());

  const double med = median_of(pooled);
  std::vector<double> dev(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) dev[i] = std::abs(pooled[i] - med);
  double robust = 1.4826 * median_of(dev);
  if (robust <= 0.0) {
    double maxabs = 0.0;
    for (double v : pooled) maxabs = std::max(maxabs, std::abs(v));
    robust = maxabs > 0.0 ? maxabs / 5.0 : 1e-12;
  }
  const double half_width = 5.0 * robust;

  Histogram h;
  h.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) {
    h.edges[static_cast<std::size_t>(i)] =
        -half_width + 2.0 * half_width * i / n_bins;
  }
  h.count_x.assign(static_cast<std::size_t>(n_bins), 0);
  h.count_y.assign(static_cast<std::size_t>(n_bins), 0);

  auto bin_of = [&](double v) {
    const double t = (v + half_width) / (2.0 * half_width) * n_bins;
    auto b = static_cast<long long>(std::floor(t));
    b = std::clamp<long long>(b, 0, n_bins - 1);
    return static_cast<std::size_t>(b);
  };
  for (double v : diffs.x) ++h.count_x[bin_of(v)];
  for (double v : diffs.y) ++h.count_y[bin_of(v)];
  return h;
}

SeriesStats series_stats(const std::vector<double>& values) {
  SeriesStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

NodalComparison nodal_comparison(const model::PinnModel<float>& m,
                                 const dataset::Sample& sample, Head head) {
  const nn::Matrix<float> x = sample.u_r.cast<float>();
  const auto out = m.predict(x, nn::Mode::eval, nullptr);

  NodalComparison c;
  c.head = head;
  const Eigen::VectorXd& truth = head == Head::error ? sample.e : sample.u_h_q8;
  Eigen::VectorXd pred =
      (head == Head::error ? out.e_pred : out.u_super).col(0).cast<double>();
  const Eigen::Index nodes = truth.size() / 2;
  c.truth_x.resize(nodes);
  c.truth_y.resize(nodes);
  c.pred_x.resize(nodes);
  c.pred_y.resize(nodes);
  for (Eigen::Index node = 0; node < nodes; ++node) {
    c.truth_x[node] = truth[2 * node];
    c.truth_y[node] = truth[2 * node + 1];
    c.pred_x[node] = pred[2 * node];
    c.pred_y[node] = pred[2 * node + 1];
  }
  return c;
}

Eigen::VectorXd superresolve(const model::PinnModel<float>& m,
                             const Eigen::VectorXd& u_r) {
  const nn::Matrix<float> x = u_r.cast<float>();
  const auto out = m.predict(x, nn::Mode::eval, nullptr);
  return out.u_super.col(0).cast<double>();
}

AblationTable run_ablation(const model::DataView& train_data,
                           const model::DataView& test_data,
                           const model::ModelDims& dims,
                           const model::TrainConfig& cfg,
                           std::uint64_t init_seed, std::ostream* log) {
  struct CaseSpec {
    const char* label;
    const char* name;
    model::LossFlags flags;
  };
  const CaseSpec specs[3] = {
      {"1", "l_u+l_super", {true, true}},
      {"2", "l_u", {true, false}},
      {"3", "-", {false, false}},
  };

  AblationTable table;
  for (const auto& spec : specs) {
    if (log) *log << "ablation case " << spec.label << " (" << spec.name << ")\n";
    auto m = model::PinnModel<float>::create(dims, init_seed);
    AblationCase c;
    c.label = spec.label;
    c.flags_name = spec.name;
    c.flags = spec.flags;
    c.result = model::train(std::move(m), train_data, test_data, cfg,
                            spec.flags, log);

    const auto& hist = c.result.history;
    const std::size_t tail = std::min<std::size_t>(10, hist.size());
    std::vector<double> tr, te;
    for (std::size_t i = hist.size() - tail; i < hist.size(); ++i) {
      tr.push_back(hist[i].l_error_train);
      te.push_back(hist[i].l_error_test);
    }
    const auto trs = series_stats(tr);
    const auto tes = series_stats(te);
    c.train_mean = trs.mean;
    c.train_std = trs.stddev;
    c.test_mean = tes.mean;
    c.test_std = tes.stddev;
    table.cases.push_back(std::move(c));
  }
  return table;
}

// ---- writers ----

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

}  // namespace

void write_histogram_csv(const Histogram& h, const std::string& path) {
  auto os = open_out(path);
  os << "bin_lo,bin_hi,count_x,count_y\n";
  char buf[160];
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%lld,%lld\n", h.edges[b],
                  h.edges[b + 1], h.count_x[b], h.count_y[b]);
    os << buf;
  }
}

void write_maps_csv(const NodeMaps& maps, const mesh::Mesh& q4,
                    const std::string& path) {
  auto os = open_out(path);
  os << "node,x,y,mean_x,std_x,mean_y,std_y\n";
  char buf[256];
  for (Eigen::Index n = 0; n < maps.mean_x.size(); ++n) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(n), q4.nodes[n].x(), q4.nodes[n].y(),
                  maps.mean_x[n], maps.std_x[n], maps.mean_y[n], maps.std_y[n]);
    os << buf;
  }
}

void write_nodal_comparison_csv(const NodalComparison& c, const mesh::Mesh& m,
                                const std::string& path) {
  auto os = open_out(path);
  os << "node,x,y,truth_x,pred_x,truth_y,pred_y\n";
  char buf[256];
  for (Eigen::Index n = 0; n < c.truth_x.size(); ++n) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%.9g,%.9g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(n), m.nodes[n].x(), m.nodes[n].y(),
                  c.truth_x[n], c.pred_x[n], c.truth_y[n], c.pred_y[n]);
    os << buf;
  }
}

void write_ablation_csv(const AblationTable& t, const std::string& path) {
  auto os = open_out(path);
  os << "case,flags,train_mean,train_std,test_mean,test_std\n";
  char buf[256];
  for (const auto& c : t.cases) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g\n",
                  c.label.c_str(), c.flags_name.c_str(), c.train_mean,
                  c.train_std, c.test_mean, c.test_std);
    os << buf;
  }
}

void write_superres_csv(const Eigen::VectorXd& pred, const Eigen::VectorXd* truth,
                        const mesh::Mesh& q8, const std::string& path) {
  auto os = open_out(path);
  os << (truth != nullptr ? "node,x,y,pred_x,pred_y,truth_x,truth_y\n"
                          : "node,x,y,pred_x,pred_y\n");
  char buf[256];
  for (int n = 0; n < q8.node_count(); ++n) {
    if (truth != nullptr) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.17g,%.17g,%.17g,%.17g\n",
                    n, q8.nodes[n].x(), q8.nodes[n].y(), pred[2 * n],
                    pred[2 * n + 1], (*truth)[2 * n], (*truth)[2 * n + 1]);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.17g,%.17g\n", n,
                    q8.nodes[n].x(), q8.nodes[n].y(), pred[2 * n],
                    pred[2 * n + 1]);
    }
    os << buf;
  }
}

void write_uncertainty_csv(const model::McResult& mc, const mesh::Mesh& q4,
                           const mesh::Mesh& q8, const std::string& err_path,
                           const std::string& super_path) {
  {
    auto os = open_out(err_path);
    os << "node,x,y,mean_x,std_x,mean_y,std_y\n";
    char buf[256];
    for (int n = 0; n < q4.node_count(); ++n) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.17g,%.17g,%.17g,%.17g\n",
                    n, q4.nodes[n].x(), q4.nodes[n].y(), mc.mean_e[2 * n],
                    mc.std_e[2 * n], mc.mean_e[2 * n + 1], mc.std_e[2 * n + 1]);
      os << buf;
    }
  }
  {
    auto os = open_out(super_path);
    os << "node,x,y,mean_x,std_x,mean_y,std_y\n";
    char buf[256];
    for (int n = 0; n < q8.node_count(); ++n) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.17g,%.17g,%.17g,%.17g\n",
                    n, q8.nodes[n].x(), q8.nodes[n].y(), mc.mean_u[2 * n],
                    mc.std_u[2 * n], mc.mean_u[2 * n + 1], mc.std_u[2 * n + 1]);
      os << buf;
    }
  }
}

// ---- SVG heatmap ----

namespace {

struct Rgb {
  double r, g, b;
};

// Coarse viridis anchors, linearly interpolated.
Rgb viridis(double t) {
  static constexpr Rgb anchors[9] = {
      {0.267004, 0.004874, 0.329415}, {0.282623, 0.140926, 0.457517},
      {0.253935, 0.265254, 0.529983}, {0.206756, 0.371758, 0.553117},
      {0.163625, 0.471133, 0.558148}, {0.127568, 0.566949, 0.550556},
      {0.134692, 0.658636, 0.517649}, {0.477504, 0.821444, 0.318195},
      {0.993248, 0.906157, 0.143936}};
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 8.0;
  const int lo = std::min(7, static_cast<int>(pos));
  const double f = pos - lo;
  return {anchors[lo].r + f * (anchors[lo + 1].r - anchors[lo].r),
          anchors[lo].g + f * (anchors[lo + 1].g - anchors[lo].g),
          anchors[lo].b + f * (anchors[lo + 1].b - anchors[lo].b)};
}

void append_color(std::string& out, const Rgb& c) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(c.r * 255.0)),
                static_cast<int>(std::lround(c.g * 255.0)),
                static_cast<int>(std::lround(c.b * 255.0)));
  out += buf;
}

}  // namespace

void render_heatmap(const Eigen::VectorXd& nodal, const mesh::Mesh& m,
                    const std::string& title, const std::string& path) {
  if (nodal.size() != m.node_count()) {
    throw std::invalid_argument("render_heatmap: field length mismatch");
  }
  const double vmin = nodal.minCoeff();
  const double vmax = nodal.maxCoeff();
  const double span = vmax > vmin ? vmax - vmin : 1.0;

  constexpr double plot = 540.0, margin = 30.0;
  constexpr double width = plot + 2 * margin + 110.0;
  constexpr double height = plot + 2 * margin + 20.0;
  auto px = [&](double x) { return margin + x * plot; };
  auto py = [&](double y) { return margin + 20.0 + (1.0 - y) * plot; };

  std::string svg;
  svg.reserve(1u << 20);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
                "height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                width, height, width, height);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"18\" font-family=\"sans-serif\" "
                "font-size=\"14\">%s</text>\n",
                margin, title.c_str());
  svg += buf;

  // One flat-shaded polygon per element through its boundary nodes.
  const int npe = m.nodes_per_element();
  static constexpr int q8_ring[8] = {0, 4, 1, 5, 2, 6, 3, 7};
  for (int e = 0; e < m.element_count(); ++e) {
    const auto conn = m.element(e);
    double value = 0.0;
    for (int k = 0; k < npe; ++k) value += nodal[conn[k]];
    value /= npe;

    svg += "<polygon points=\"";
    for (int k = 0; k < npe; ++k) {
      const int local = npe == 8 ? q8_ring[k] : k;
      const auto& p = m.nodes[conn[local]];
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", px(p.x()), py(p.y()));
      svg += buf;
    }
    svg += "\" fill=\"";
    append_color(svg, viridis((value - vmin) / span));
    svg += "\" stroke=\"none\"/>\n";
  }

  // Color bar with numeric bounds.
  const double bar_x = plot + 2 * margin;
  const double bar_y = margin + 20.0;
  constexpr int bar_steps = 32;
  for (int i = 0; i < bar_steps; ++i) {
    const double t0 = static_cast<double>(i) / bar_steps;
    const double t1 = static_cast<double>(i + 1) / bar_steps;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%g\" y=\"%.3f\" width=\"18\" height=\"%.3f\" fill=\"",
                  bar_x, bar_y + (1.0 - t1) * plot, plot / bar_steps + 0.5);
    svg += buf;
    append_color(svg, viridis(0.5 * (t0 + t1)));
    svg += "\" stroke=\"none\"/>\n";
  }
  const double labels[3] = {vmax, 0.5 * (vmin + vmax), vmin};
  const double label_y[3] = {bar_y + 10.0, bar_y + plot / 2.0, bar_y + plot};
  for (int i = 0; i < 3; ++i) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%.3f\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%.6g</text>\n",
                  bar_x + 22.0, label_y[i], labels[i]);
    svg += buf;
  }
  svg += "</svg>\n";

  auto os = open_out(path);
  os << svg;
}

}  // namespace merr::eval

// Command-line front end for the model-error learning pipeline:
// dataset generation, training, evaluation, ablation and uncertainty.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include "merr/config.hpp"
#include "merr/dataset.hpp"
#include "merr/eval.hpp"
#include "merr/fem.hpp"
#include "merr/mesh.hpp"
#include "merr/model.hpp"
#include "merr/nn.hpp"

namespace {

namespace fs = std::filesystem;
using merr::config::RunConfig;

struct GlobalArgs {
  std::string config_path;
  std::string preset = "full";
  std::string out_dir;
  int threads = 0;
  long long seed = -1;
};

RunConfig resolve_config(const GlobalArgs& g) {
  RunConfig cfg = merr::config::preset(g.preset);
  if (!g.config_path.empty()) {
    cfg = merr::config::load_file(g.config_path, std::move(cfg));
  }
  if (const char* env = std::getenv("MERR_OUT_DIR")) {
    cfg.output_dir = env;
  }
  if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
  if (g.seed >= 0) cfg.gen.master_seed = static_cast<std::uint64_t>(g.seed);
  merr::config::finalize(cfg);
  return cfg;
}

int effective_threads(const GlobalArgs& g) {
  if (g.threads > 0) return g.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
}

merr::mesh::ElementOrder parse_order(const std::string& s) {
  if (s == "q4" || s == "Q4") return merr::mesh::ElementOrder::q4;
  if (s == "q8" || s == "Q8") return merr::mesh::ElementOrder::q8;
  throw merr::config::ConfigError("bad --order '" + s + "' (expected q4 or q8)");
}

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    throw merr::config::ConfigError("bad --grid '" + s + "' (expected RxC)");
  }
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw merr::config::ConfigError("bad --grid '" + s + "' (expected RxC)");
  }
}

merr::model::ModelDims dims_for_data(const RunConfig& cfg,
                                     const merr::dataset::Dataset& ds) {
  merr::model::ModelDims dims = cfg.dims;
  dims.input = ds.meta.len_ur;
  dims.out_error = ds.meta.len_ur;
  dims.out_super = ds.meta.len_uh;
  return dims;
}

// ---- subcommand bodies ----

int cmd_mesh(const std::string& order_str, const std::string& grid_str,
             const std::string& export_path) {
  const auto order = parse_order(order_str);
  const auto [nr, nc] = parse_grid(grid_str);
  const auto m = merr::mesh::build_mesh(order, nr, nc);
  if (!export_path.empty()) {
    merr::mesh::export_text_file(m, export_path);
    std::printf("nodes=%d elements=%d file=%s\n", m.node_count(),
                m.element_count(), export_path.c_str());
  } else {
    std::printf("nodes=%d elements=%d\n", m.node_count(), m.element_count());
  }
  return 0;
}

int cmd_generate(const RunConfig& cfg, int threads, bool csv) {
  ensure_out_dir(cfg);
  const std::string path = join(cfg.output_dir, "dataset.merr");
  const auto ds = merr::dataset::generate_dataset(cfg.gen, path, threads, &std::cerr);
  if (csv) {
    const auto q4 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q4,
                                           cfg.gen.q4_nr, cfg.gen.q4_nc);
    merr::dataset::write_csv(ds, q4, join(cfg.output_dir, "dataset.csv"));
  }
  std::printf("samples=%d file=%s\n", ds.size(), path.c_str());
  return 0;
}

int cmd_split(const RunConfig& cfg, const std::string& input) {
  ensure_out_dir(cfg);
  const std::string in = input.empty() ? join(cfg.output_dir, "dataset.merr") : input;
  const auto ds = merr::dataset::read_binary(in);
  auto [train, test] = merr::dataset::split(ds, cfg.n_test, cfg.gen.master_seed);
  const std::string train_path = join(cfg.output_dir, "train.merr");
  const std::string test_path = join(cfg.output_dir, "test.merr");
  merr::dataset::write_binary(train, train_path);
  merr::dataset::write_binary(test, test_path);
  std::printf("train=%d test=%d train_file=%s test_file=%s\n", train.size(),
              test.size(), train_path.c_str(), test_path.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& train_path,
              const std::string& test_path) {
  ensure_out_dir(cfg);
  const std::string tr_p =
      train_path.empty() ? join(cfg.output_dir, "train.merr") : train_path;
  const std::string te_p =
      test_path.empty() ? join(cfg.output_dir, "test.merr") : test_path;
  const auto train_ds = merr::dataset::read_binary(tr_p);
  const auto test_ds = merr::dataset::read_binary(te_p);
  const auto train_view = merr::model::make_view(train_ds);
  const auto test_view = merr::model::make_view(test_ds);

  auto model = merr::model::PinnModel<float>::create(
      dims_for_data(cfg, train_ds), cfg.gen.master_seed);
  auto result = merr::model::train(std::move(model), train_view, test_view,
                                   cfg.train, cfg.flags, &std::cerr);

  const std::string ckpt = join(cfg.output_dir, "model.ckpt");
  merr::model::save_checkpoint(result.model, nullptr, ckpt);
  merr::model::write_history_csv(result.history,
                                 join(cfg.output_dir, "history.csv"));
  std::printf("epochs=%zu best_epoch=%d best_test=%.9e checkpoint=%s\n",
              result.history.size(), result.best_epoch, result.best_test,
              ckpt.c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path,
                 const std::string& test_path) {
  ensure_out_dir(cfg);
  const std::string mp =
      model_path.empty() ? join(cfg.output_dir, "model.ckpt") : model_path;
  const std::string tp =
      test_path.empty() ? join(cfg.output_dir, "test.merr") : test_path;
  const auto loaded = merr::model::load_checkpoint(mp);
  const auto test_ds = merr::dataset::read_binary(tp);
  const auto test_view = merr::model::make_view(test_ds);

  const auto ev = merr::eval::evaluate_test_set(loaded.model, test_view);
  const auto hist_err = merr::eval::difference_histogram(ev.err_diff, cfg.eval_bins);
  const auto hist_sup = merr::eval::difference_histogram(ev.super_diff, cfg.eval_bins);

  const auto q4 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q4,
                                         test_ds.meta.q4_nr, test_ds.meta.q4_nc);
  const auto q8 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q8,
                                         test_ds.meta.q8_nr, test_ds.meta.q8_nc);

  merr::eval::write_histogram_csv(hist_err, join(cfg.output_dir, "hist_error.csv"));
  merr::eval::write_histogram_csv(hist_sup, join(cfg.output_dir, "hist_super.csv"));
  merr::eval::write_maps_csv(ev.maps, q4, join(cfg.output_dir, "maps.csv"));
  merr::eval::render_heatmap(ev.maps.mean_x, q4, "mean |e_pred - e| (x)",
                             join(cfg.output_dir, "map_mean_x.svg"));
  merr::eval::render_heatmap(ev.maps.std_x, q4, "std |e_pred - e| (x)",
                             join(cfg.output_dir, "map_std_x.svg"));
  merr::eval::render_heatmap(ev.maps.mean_y, q4, "mean |e_pred - e| (y)",
                             join(cfg.output_dir, "map_mean_y.svg"));
  merr::eval::render_heatmap(ev.maps.std_y, q4, "std |e_pred - e| (y)",
                             join(cfg.output_dir, "map_std_y.svg"));

  const int si = cfg.eval_sample_index;
  if (si < 0 || si >= test_ds.size()) {
    throw merr::config::ConfigError("eval.sample_index out of range");
  }
  const auto& sample = test_ds.samples[static_cast<std::size_t>(si)];
  const auto cmp_err =
      merr::eval::nodal_comparison(loaded.model, sample, merr::eval::Head::error);
  const auto cmp_sup =
      merr::eval::nodal_comparison(loaded.model, sample, merr::eval::Head::super);
  merr::eval::write_nodal_comparison_csv(cmp_err, q4,
                                         join(cfg.output_dir, "nodal_error.csv"));
  merr::eval::write_nodal_comparison_csv(cmp_sup, q8,
                                         join(cfg.output_dir, "nodal_super.csv"));

  const auto stats_x = merr::eval::series_stats(ev.err_diff.x);
  const auto stats_y = merr::eval::series_stats(ev.err_diff.y);
  const double l_err = merr::model::evaluate_l_error(loaded.model, test_view);
  std::printf(
      "test_l_error=%.9e hist_err_total_x=%lld hist_err_total_y=%lld "
      "diff_mean_x=%.6e diff_std_x=%.6e diff_mean_y=%.6e diff_std_y=%.6e\n",
      l_err, hist_err.total_x(), hist_err.total_y(), stats_x.mean,
      stats_x.stddev, stats_y.mean, stats_y.stddev);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& train_path,
               const std::string& test_path) {
  ensure_out_dir(cfg);
  const std::string tr_p =
      train_path.empty() ? join(cfg.output_dir, "train.merr") : train_path;
  const std::string te_p =
      test_path.empty() ? join(cfg.output_dir, "test.merr") : test_path;
  const auto train_ds = merr::dataset::read_binary(tr_p);
  const auto test_ds = merr::dataset::read_binary(te_p);
  const auto train_view = merr::model::make_view(train_ds);
  const auto test_view = merr::model::make_view(test_ds);

  const auto table = merr::eval::run_ablation(
      train_view, test_view, dims_for_data(cfg, train_ds), cfg.train,
      cfg.gen.master_seed, &std::cerr);
  merr::eval::write_ablation_csv(table, join(cfg.output_dir, "ablation.csv"));
  for (const auto& c : table.cases) {
    merr::model::write_history_csv(
        c.result.history,
        join(cfg.output_dir, "history_case" + c.label + ".csv"));
    merr::model::save_checkpoint(
        c.result.model, nullptr,
        join(cfg.output_dir, "model_case" + c.label + ".ckpt"));
  }
  std::printf("cases=%zu table=%s\n", table.cases.size(),
              join(cfg.output_dir, "ablation.csv").c_str());
  return 0;
}

int cmd_uncertainty(const RunConfig& cfg, const std::string& model_path,
                    const std::string& test_path, int threads) {
  ensure_out_dir(cfg);
  const std::string mp =
      model_path.empty() ? join(cfg.output_dir, "model.ckpt") : model_path;
  const std::string tp =
      test_path.empty() ? join(cfg.output_dir, "test.merr") : test_path;
  const auto loaded = merr::model::load_checkpoint(mp);
  const auto test_ds = merr::dataset::read_binary(tp);
  const int si = cfg.eval_sample_index;
  if (si < 0 || si >= test_ds.size()) {
    throw merr::config::ConfigError("eval.sample_index out of range");
  }
  const auto& sample = test_ds.samples[static_cast<std::size_t>(si)];

  const auto mc = merr::model::mc_dropout_predict(
      loaded.model, sample.u_r.cast<float>(), cfg.mc_passes,
      cfg.gen.master_seed, threads);

  const auto q4 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q4,
                                         test_ds.meta.q4_nr, test_ds.meta.q4_nc);
  const auto q8 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q8,
                                         test_ds.meta.q8_nr, test_ds.meta.q8_nc);
  merr::eval::write_uncertainty_csv(mc, q4, q8,
                                    join(cfg.output_dir, "uncertainty_error.csv"),
                                    join(cfg.output_dir, "uncertainty_super.csv"));
  Eigen::VectorXd std_x(q4.node_count()), std_y(q4.node_count());
  for (int n = 0; n < q4.node_count(); ++n) {
    std_x[n] = mc.std_e[2 * n];
    std_y[n] = mc.std_e[2 * n + 1];
  }
  merr::eval::render_heatmap(std_x, q4, "MC-dropout std (x)",
                             join(cfg.output_dir, "uncertainty_std_x.svg"));
  merr::eval::render_heatmap(std_y, q4, "MC-dropout std (y)",
                             join(cfg.output_dir, "uncertainty_std_y.svg"));
  std::printf("passes=%d sample=%d min_std_x=%.6e min_std_y=%.6e\n",
              cfg.mc_passes, si, std_x.minCoeff(), std_y.minCoeff());
  return 0;
}

int cmd_superresolve(const RunConfig& cfg, const std::string& model_path,
                     const std::string& test_path) {
  ensure_out_dir(cfg);
  const std::string mp =
      model_path.empty() ? join(cfg.output_dir, "model.ckpt") : model_path;
  const std::string tp =
      test_path.empty() ? join(cfg.output_dir, "test.merr") : test_path;
  const auto loaded = merr::model::load_checkpoint(mp);
  const auto test_ds = merr::dataset::read_binary(tp);
  const int si = cfg.eval_sample_index;
  if (si < 0 || si >= test_ds.size()) {
    throw merr::config::ConfigError("eval.sample_index out of range");
  }
  const auto& sample = test_ds.samples[static_cast<std::size_t>(si)];
  const auto pred = merr::eval::superresolve(loaded.model, sample.u_r);

  const auto q8 = merr::mesh::build_mesh(merr::mesh::ElementOrder::q8,
                                         test_ds.meta.q8_nr, test_ds.meta.q8_nc);
  merr::eval::write_superres_csv(pred, &sample.u_h_q8, q8,
                                 join(cfg.output_dir, "superres.csv"));
  Eigen::VectorXd pred_x(q8.node_count()), truth_x(q8.node_count());
  for (int n = 0; n < q8.node_count(); ++n) {
    pred_x[n] = pred[2 * n];
    truth_x[n] = sample.u_h_q8[2 * n];
  }
  merr::eval::render_heatmap(pred_x, q8, "superresolved u_x (prediction)",
                             join(cfg.output_dir, "superres_pred_x.svg"));
  merr::eval::render_heatmap(truth_x, q8, "superresolved u_x (truth)",
                             join(cfg.output_dir, "superres_truth_x.svg"));
  std::printf("sample=%d rows=%d file=%s\n", si, q8.node_count(),
              join(cfg.output_dir, "superres.csv").c_str());
  return 0;
}

int cmd_gradcheck(const std::string& preset_name, std::uint64_t seed) {
  merr::model::ModelDims dims;
  if (preset_name == "small") {
    dims.input = 10;
    dims.h1 = 8;
    dims.h2 = 12;
    dims.out_error = 10;
    dims.out_super = 26;
  } else if (preset_name == "wide") {
    dims.input = 24;
    dims.h1 = 20;
    dims.h2 = 28;
    dims.out_error = 24;
    dims.out_super = 64;
  } else {
    throw merr::config::ConfigError("unknown gradcheck preset '" + preset_name +
                                    "' (expected small or wide)");
  }

  double worst_affine = 0.0;
  {
    merr::nn::Layer<double> layer{merr::nn::Affine<double>(6, 5)};
    auto& aff = std::get<merr::nn::Affine<double>>(layer);
    merr::rng::Stream s(seed, merr::rng::Domain::init, 11);
    aff.init(s);
    worst_affine = merr::nn::layer_gradient_check(layer, 6, 4, seed).worst();
  }

  const auto report = merr::model::model_gradient_check(dims, 3, seed);
  const double worst = report.worst();
  std::printf("worst_rel=%.6e worst_affine=%.6e\n", worst, worst_affine);
  return worst < 1e-4 && worst_affine < 1e-8 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-error learning pipeline for the plate-with-hole benchmark"};
  app.require_subcommand(1);
  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--preset", g.preset, "config preset: full or desk")
      ->default_val("full");
  app.add_option("--out", g.out_dir, "output directory (overrides config/env)");
  app.add_option("--threads", g.threads, "worker threads (0 = hardware)");
  app.add_option("--seed", g.seed, "master seed override");

  // mesh
  std::string order_str = "q4", grid_str = "20x40", export_path;
  auto* mesh_cmd = app.add_subcommand("mesh", "build a mesh and print its size");
  mesh_cmd->add_option("--order", order_str, "q4 or q8");
  mesh_cmd->add_option("--grid", grid_str, "RxC element grid");
  auto* mesh_export = mesh_cmd->add_subcommand("export", "write the plain-text mesh");
  std::string export_order = "q4", export_grid = "20x40", export_file;
  mesh_export->add_option("--order", export_order, "q4 or q8");
  mesh_export->add_option("--grid", export_grid, "RxC element grid");
  mesh_export->add_option("--out-file", export_file, "path for the text export");

  // generate
  long long count_override = -1;
  bool gen_csv = false;
  auto* gen_cmd = app.add_subcommand("generate", "generate the paired dataset");
  gen_cmd->add_option("--count", count_override, "sample count override");
  gen_cmd->add_flag("--csv", gen_csv, "also write the lossy CSV export");

  // split
  std::string split_input;
  long long n_test_override = -1;
  auto* split_cmd = app.add_subcommand("split", "split into train/test sets");
  split_cmd->add_option("--input", split_input, "dataset file");
  split_cmd->add_option("--n-test", n_test_override, "test-set size override");

  // train
  std::string train_in, test_in;
  long long epochs_override = -1, h1_override = -1, h2_override = -1;
  int loss_u_flag = -1, loss_super_flag = -1;
  auto* train_cmd = app.add_subcommand("train", "train the two-branch network");
  train_cmd->add_option("--train", train_in, "training dataset file");
  train_cmd->add_option("--test", test_in, "test dataset file");
  train_cmd->add_option("--epochs", epochs_override, "max epochs override");
  train_cmd->add_option("--h1", h1_override, "error-branch hidden width");
  train_cmd->add_option("--h2", h2_override, "super-branch hidden width");
  train_cmd->add_option("--loss-u", loss_u_flag, "enable the displacement loss (0/1)");
  train_cmd->add_option("--loss-super", loss_super_flag,
                        "enable the superresolution loss (0/1)");

  // evaluate
  std::string eval_model, eval_test;
  long long sample_override = -1, bins_override = -1;
  auto* eval_cmd = app.add_subcommand("evaluate", "histograms, maps, comparisons");
  eval_cmd->add_option("--model", eval_model, "checkpoint file");
  eval_cmd->add_option("--test", eval_test, "test dataset file");
  eval_cmd->add_option("--sample", sample_override, "sample index for comparisons");
  eval_cmd->add_option("--bins", bins_override, "histogram bin count");

  // ablate
  std::string abl_train, abl_test;
  long long abl_epochs = -1, abl_h2 = -1;
  auto* abl_cmd = app.add_subcommand("ablate", "run the three loss-composition cases");
  abl_cmd->add_option("--train", abl_train, "training dataset file");
  abl_cmd->add_option("--test", abl_test, "test dataset file");
  abl_cmd->add_option("--epochs", abl_epochs, "max epochs override");
  abl_cmd->add_option("--h2", abl_h2, "super-branch hidden width");

  // uncertainty
  std::string unc_model, unc_test;
  long long passes_override = -1, unc_sample = -1;
  auto* unc_cmd = app.add_subcommand("uncertainty", "MC-dropout prediction spread");
  unc_cmd->add_option("--model", unc_model, "checkpoint file");
  unc_cmd->add_option("--test", unc_test, "test dataset file");
  unc_cmd->add_option("--passes", passes_override, "number of stochastic passes");
  unc_cmd->add_option("--sample", unc_sample, "test sample index");

  // superresolve
  std::string sup_model, sup_test;
  long long sup_sample = -1;
  auto* sup_cmd = app.add_subcommand("superresolve", "export the Q8 field prediction");
  sup_cmd->add_option("--model", sup_model, "checkpoint file");
  sup_cmd->add_option("--test", sup_test, "test dataset file");
  sup_cmd->add_option("--sample", sup_sample, "test sample index");

  // gradcheck
  std::string gc_preset = "small";
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc_cmd->add_option("--preset", gc_preset, "small or wide");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = resolve_config(g);
    if (count_override > 0) cfg.gen.count = static_cast<int>(count_override);
    if (n_test_override >= 0) cfg.n_test = static_cast<int>(n_test_override);
    if (epochs_override > 0) cfg.train.max_epochs = static_cast<int>(epochs_override);
    if (abl_epochs > 0) cfg.train.max_epochs = static_cast<int>(abl_epochs);
    if (h1_override > 0) cfg.dims.h1 = h1_override;
    if (h2_override > 0) cfg.dims.h2 = h2_override;
    if (abl_h2 > 0) cfg.dims.h2 = abl_h2;
    if (loss_u_flag >= 0) cfg.flags.use_u = loss_u_flag != 0;
    if (loss_super_flag >= 0) cfg.flags.use_super = loss_super_flag != 0;
    if (sample_override >= 0) cfg.eval_sample_index = static_cast<int>(sample_override);
    if (unc_sample >= 0) cfg.eval_sample_index = static_cast<int>(unc_sample);
    if (sup_sample >= 0) cfg.eval_sample_index = static_cast<int>(sup_sample);
    if (bins_override >= 2) cfg.eval_bins = static_cast<int>(bins_override);
    if (passes_override >= 2) cfg.mc_passes = static_cast<int>(passes_override);
    merr::config::finalize(cfg);

    const int threads = effective_threads(g);
    Eigen::setNbThreads(threads);

    if (mesh_cmd->parsed()) {
      if (mesh_export->parsed()) {
        std::string out = export_file;
        if (out.empty()) {
          ensure_out_dir(cfg);
          out = join(cfg.output_dir, "mesh_" + export_order + ".txt");
        }
        return cmd_mesh(export_order, export_grid, out);
      }
      return cmd_mesh(order_str, grid_str, "");
    }
    if (gen_cmd->parsed()) return cmd_generate(cfg, threads, gen_csv);
    if (split_cmd->parsed()) return cmd_split(cfg, split_input);
    if (train_cmd->parsed()) return cmd_train(cfg, train_in, test_in);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, eval_model, eval_test);
    if (abl_cmd->parsed()) return cmd_ablate(cfg, abl_train, abl_test);
    if (unc_cmd->parsed()) return cmd_uncertainty(cfg, unc_model, unc_test, threads);
    if (sup_cmd->parsed()) return cmd_superresolve(cfg, sup_model, sup_test);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_preset, cfg.gen.master_seed);
    std::fprintf(stderr, "no subcommand\n");
    return 2;
  } catch (const merr::config::ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
}

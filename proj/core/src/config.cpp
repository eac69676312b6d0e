#include "merr/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace merr::config {

namespace {

using nlohmann::json;

void require_keys(const json& j, const char* where,
                  std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError(std::string("unknown config key '") + key + "' in " +
                        where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad value for '") + key + "': " + ex.what());
  }
}

void read_pair(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("'") + key + "' must be a 2-element array");
  }
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

void read_grid(const json& j, const char* key, int& nr, int& nc) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("'") + key + "' must be a 2-element array");
  }
  nr = v[0].get<int>();
  nc = v[1].get<int>();
}

void validate(const RunConfig& c) {
  auto bad = [](const std::string& what) { throw ConfigError(what); };
  if (c.gen.q4_nr < 1 || c.gen.q4_nc < 1 || c.gen.q8_nr < 1 || c.gen.q8_nc < 1)
    bad("mesh grids must be positive");
  if (c.gen.count < 1) bad("dataset.count must be >= 1");
  if (c.n_test < 0) bad("dataset.n_test must be >= 0");
  if (c.gen.e0 <= 0.0) bad("material.e0 must be > 0");
  if (c.gen.std_lo_frac < 0.0 || c.gen.std_hi_frac < c.gen.std_lo_frac)
    bad("material.std_range must satisfy 0 <= lo <= hi");
  if (c.gen.corr_len_x <= 0.0 || c.gen.corr_len_y <= 0.0)
    bad("material.corr_len must be > 0");
  if (c.gen.poisson <= 0.0 || c.gen.poisson >= 0.5)
    bad("material.poisson must be in (0, 0.5)");
  if (c.gen.thickness <= 0.0) bad("material.thickness must be > 0");
  if (c.gen.load_lo > c.gen.load_hi) bad("load_range must satisfy lo <= hi");
  if (c.dims.h1 < 1 || c.dims.h2 < 1) bad("model widths must be >= 1");
  if (c.dims.dropout < 0.0 || c.dims.dropout >= 1.0)
    bad("model.dropout must be in [0, 1)");
  if (c.dims.bound_error <= 0.0 || c.dims.bound_super <= 0.0)
    bad("model bounds must be > 0");
  if (c.train.batch_size < 1) bad("train.batch_size must be >= 1");
  if (c.train.epoch_subsample < 1) bad("train.epoch_subsample must be >= 1");
  if (c.train.lr0 <= 0.0) bad("train.lr0 must be > 0");
  if (c.train.decay <= 0.0 || c.train.decay > 1.0)
    bad("train.decay must be in (0, 1]");
  if (c.train.max_epochs < 1) bad("train.max_epochs must be >= 1");
  if (c.train.input_noise_rel < 0.0) bad("train.input_noise_rel must be >= 0");
  if (c.train.patience < 1) bad("train.patience must be >= 1");
  if (c.eval_bins < 2) bad("eval.n_bins must be >= 2");
  if (c.mc_passes < 2) bad("eval.mc_passes must be >= 2");
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig preset(const std::string& name) {
  RunConfig c = default_config();
  if (name == "full" || name.empty()) {
    finalize(c);
    return c;
  }
  if (name == "desk") {
    c.gen.count = 2000;
    c.n_test = 200;
    c.dims.h2 = 512;
    c.train.max_epochs = 60;
    c.gen.master_seed = 7;
    finalize(c);
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected full or desk)");
}

RunConfig load_json(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config parse error: ") + ex.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  require_keys(j, "root",
               {"mesh", "material", "load_range", "dataset", "model", "train",
                "eval", "seed", "output_dir"});

  RunConfig c = std::move(base);
  if (j.contains("mesh")) {
    const auto& m = j.at("mesh");
    require_keys(m, "mesh", {"q4_grid", "q8_grid"});
    read_grid(m, "q4_grid", c.gen.q4_nr, c.gen.q4_nc);
    read_grid(m, "q8_grid", c.gen.q8_nr, c.gen.q8_nc);
  }
  if (j.contains("material")) {
    const auto& m = j.at("material");
    require_keys(m, "material",
                 {"e0", "std_range", "corr_len", "nugget", "floor", "poisson",
                  "thickness"});
    read(m, "e0", c.gen.e0);
    read_pair(m, "std_range", c.gen.std_lo_frac, c.gen.std_hi_frac);
    read_pair(m, "corr_len", c.gen.corr_len_x, c.gen.corr_len_y);
    read(m, "nugget", c.gen.nugget);
    read(m, "floor", c.gen.floor_frac);
    read(m, "poisson", c.gen.poisson);
    read(m, "thickness", c.gen.thickness);
  }
  read_pair(j, "load_range", c.gen.load_lo, c.gen.load_hi);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    require_keys(d, "dataset", {"count", "n_test"});
    read(d, "count", c.gen.count);
    read(d, "n_test", c.n_test);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    require_keys(m, "model",
                 {"h1", "h2", "bound_error", "bound_super", "dropout"});
    long long h1 = c.dims.h1, h2 = c.dims.h2;
    read(m, "h1", h1);
    read(m, "h2", h2);
    c.dims.h1 = h1;
    c.dims.h2 = h2;
    read(m, "bound_error", c.dims.bound_error);
    read(m, "bound_super", c.dims.bound_super);
    read(m, "dropout", c.dims.dropout);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    require_keys(t, "train",
                 {"batch_size", "epoch_subsample", "lr0", "decay", "max_epochs",
                  "input_noise_rel", "patience", "min_delta", "loss_u",
                  "loss_super"});
    read(t, "batch_size", c.train.batch_size);
    read(t, "epoch_subsample", c.train.epoch_subsample);
    read(t, "lr0", c.train.lr0);
    read(t, "decay", c.train.decay);
    read(t, "max_epochs", c.train.max_epochs);
    read(t, "input_noise_rel", c.train.input_noise_rel);
    read(t, "patience", c.train.patience);
    read(t, "min_delta", c.train.min_delta);
    read(t, "loss_u", c.flags.use_u);
    read(t, "loss_super", c.flags.use_super);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    require_keys(e, "eval", {"n_bins", "sample_index", "mc_passes"});
    read(e, "n_bins", c.eval_bins);
    read(e, "sample_index", c.eval_sample_index);
    read(e, "mc_passes", c.mc_passes);
  }
  read(j, "seed", c.gen.master_seed);
  read(j, "output_dir", c.output_dir);

  finalize(c);
  return c;
}

RunConfig load_file(const std::string& path, RunConfig base) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return load_json(ss.str(), std::move(base));
}

std::string to_json(const RunConfig& c) {
  json j;
  j["mesh"]["q4_grid"] = {c.gen.q4_nr, c.gen.q4_nc};
  j["mesh"]["q8_grid"] = {c.gen.q8_nr, c.gen.q8_nc};
  j["material"]["e0"] = c.gen.e0;
  j["material"]["std_range"] = {c.gen.std_lo_frac, c.gen.std_hi_frac};
  j["material"]["corr_len"] = {c.gen.corr_len_x, c.gen.corr_len_y};
  j["material"]["nugget"] = c.gen.nugget;
  j["material"]["floor"] = c.gen.floor_frac;
  j["material"]["poisson"] = c.gen.poisson;
  j["material"]["thickness"] = c.gen.thickness;
  j["load_range"] = {c.gen.load_lo, c.gen.load_hi};
  j["dataset"]["count"] = c.gen.count;
  j["dataset"]["n_test"] = c.n_test;
  j["model"]["h1"] = c.dims.h1;
  j["model"]["h2"] = c.dims.h2;
  j["model"]["bound_error"] = c.dims.bound_error;
  j["model"]["bound_super"] = c.dims.bound_super;
  j["model"]["dropout"] = c.dims.dropout;
  j["train"]["batch_size"] = c.train.batch_size;
  j["train"]["epoch_subsample"] = c.train.epoch_subsample;
  j["train"]["lr0"] = c.train.lr0;
  j["train"]["decay"] = c.train.decay;
  j["train"]["max_epochs"] = c.train.max_epochs;
  j["train"]["input_noise_rel"] = c.train.input_noise_rel;
  j["train"]["patience"] = c.train.patience;
  j["train"]["min_delta"] = c.train.min_delta;
  j["train"]["loss_u"] = c.flags.use_u;
  j["train"]["loss_super"] = c.flags.use_super;
  j["eval"]["n_bins"] = c.eval_bins;
  j["eval"]["sample_index"] = c.eval_sample_index;
  j["eval"]["mc_passes"] = c.mc_passes;
  j["seed"] = c.gen.master_seed;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

void finalize(RunConfig& c) {
  const long long n_q4 =
      static_cast<long long>(c.gen.q4_nr + 1) * (c.gen.q4_nc + 1);
  const long long n_q8 =
      (2ll * c.gen.q8_nr + 1) * (2ll * c.gen.q8_nc + 1) -
      static_cast<long long>(c.gen.q8_nr) * c.gen.q8_nc;
  c.dims.input = 2 * n_q4;
  c.dims.out_error = 2 * n_q4;
  c.dims.out_super = 2 * n_q8;
  c.train.seed = c.gen.master_seed;
  validate(c);
}

}  // namespace merr::config

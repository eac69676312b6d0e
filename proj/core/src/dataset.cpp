#include "merr/dataset.hpp"

#include <atomic>
#include <bit>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "dataset container is little-endian");

namespace merr::dataset {

namespace {

constexpr char kMagic[4] = {'M', 'E', 'R', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 56;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string canonical_config_string(const GenConfig& c) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "q4=%dx%d q8=%dx%d e0=%.17g std=[%.17g,%.17g] corr=[%.17g,%.17g] "
                "nugget=%.17g floor=%.17g load=[%.17g,%.17g] nu=%.17g t=%.17g "
                "seed=%llu",
                c.q4_nr, c.q4_nc, c.q8_nr, c.q8_nc, c.e0, c.std_lo_frac,
                c.std_hi_frac, c.corr_len_x, c.corr_len_y, c.nugget,
                c.floor_frac, c.load_lo, c.load_hi, c.poisson, c.thickness,
                static_cast<unsigned long long>(c.master_seed));
  return buf;
}

void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

std::string header_bytes(const DatasetMeta& m) {
  std::string h;
  h.reserve(kHeaderBytes);
  put_bytes(h, kMagic, 4);
  put_bytes(h, &m.version, 4);
  put_bytes(h, &m.config_hash, 8);
  put_bytes(h, &m.master_seed, 8);
  put_bytes(h, &m.q4_nr, 4);
  put_bytes(h, &m.q4_nc, 4);
  put_bytes(h, &m.q8_nr, 4);
  put_bytes(h, &m.q8_nc, 4);
  put_bytes(h, &m.len_ur, 8);
  put_bytes(h, &m.len_uh, 8);
  return h;
}

DatasetMeta parse_header(const std::string& h) {
  if (h.size() != kHeaderBytes || std::memcmp(h.data(), kMagic, 4) != 0) {
    throw std::runtime_error("dataset: bad magic");
  }
  DatasetMeta m;
  std::size_t off = 4;
  auto get = [&](void* p, std::size_t n) {
    std::memcpy(p, h.data() + off, n);
    off += n;
  };
  get(&m.version, 4);
  get(&m.config_hash, 8);
  get(&m.master_seed, 8);
  get(&m.q4_nr, 4);
  get(&m.q4_nc, 4);
  get(&m.q8_nr, 4);
  get(&m.q8_nc, 4);
  get(&m.len_ur, 8);
  get(&m.len_uh, 8);
  if (m.version != kVersion) throw std::runtime_error("dataset: unsupported version");
  return m;
}

std::size_t record_bytes(const DatasetMeta& m) {
  return 24 + 8 * static_cast<std::size_t>(3 * m.len_ur + m.len_uh);
}

// Node counts in closed form: (m+1)(n+1) corners for Q4, serendipity
// (2m+1)(2n+1) - m n for Q8.
DatasetMeta meta_for(const GenConfig& cfg) {
  DatasetMeta m;
  m.version = kVersion;
  m.config_hash = config_hash(cfg);
  m.master_seed = cfg.master_seed;
  m.q4_nr = cfg.q4_nr;
  m.q4_nc = cfg.q4_nc;
  m.q8_nr = cfg.q8_nr;
  m.q8_nc = cfg.q8_nc;
  m.len_ur = 2ll * (cfg.q4_nr + 1) * (cfg.q4_nc + 1);
  m.len_uh = 2ll * ((2ll * cfg.q8_nr + 1) * (2ll * cfg.q8_nc + 1) -
                    static_cast<std::int64_t>(cfg.q8_nr) * cfg.q8_nc);
  return m;
}

}  // namespace

std::uint64_t config_hash(const GenConfig& cfg) {
  return fnv1a(canonical_config_string(cfg));
}

GenerationContext::GenerationContext(const GenConfig& cfg)
    : cfg_(cfg),
      q4_(mesh::build_mesh(mesh::ElementOrder::q4, cfg.q4_nr, cfg.q4_nc)),
      q8_(mesh::build_mesh(mesh::ElementOrder::q8, cfg.q8_nr, cfg.q8_nc)),
      map_(mesh::build_coincidence_map(q4_, q8_)) {
  spec_ = grf::make_material_spec(q4_, q8_);
  spec_.mean = cfg.e0;
  spec_.std_lo_frac = cfg.std_lo_frac;
  spec_.std_hi_frac = cfg.std_hi_frac;
  spec_.corr_len_x = cfg.corr_len_x;
  spec_.corr_len_y = cfg.corr_len_y;
  spec_.nugget = cfg.nugget;
  spec_.floor_frac = cfg.floor_frac;
  spec_.load_lo = cfg.load_lo;
  spec_.load_hi = cfg.load_hi;
  factor_ = grf::build_correlation_factor(spec_);
}

DatasetMeta GenerationContext::meta() const { return meta_for(cfg_); }

WorkerSolvers::WorkerSolvers(const GenerationContext& ctx)
    : q4(ctx.q4(), ctx.config().poisson, ctx.config().thickness),
      q8(ctx.q8(), ctx.config().poisson, ctx.config().thickness) {}

Sample generate_sample(const GenerationContext& ctx, WorkerSolvers& solvers,
                       std::uint64_t index) {
  try {
    rng::Stream stream(ctx.config().master_seed, rng::Domain::sample, index);
    const grf::MaterialRealization real =
        grf::sample_realization(ctx.factor(), ctx.spec(), stream);

    Sample s;
    s.index = index;
    s.load = real.load;
    s.std_used = real.std_used;
    s.u_r = solvers.q4.solve(real.e_q4, real.load);
    s.u_h_q8 = solvers.q8.solve(real.e_q8, real.load);
    s.u_h_q4 = mesh::restrict_field(s.u_h_q8, ctx.coincidence());
    s.e = s.u_h_q4 - s.u_r;
    return s;
  } catch (const std::exception& ex) {
    throw std::runtime_error("generate_sample: sample " + std::to_string(index) +
                             ": " + ex.what());
  }
}

struct DatasetWriter::Impl {
  DatasetMeta meta;
  std::ofstream os;
  std::uint64_t next_index = 0;
};

DatasetWriter::DatasetWriter(const GenConfig& cfg, const std::string& path)
    : impl_(std::make_unique<Impl>()) {
  impl_->meta = meta_for(cfg);
  const std::string expected = header_bytes(impl_->meta);
  const std::size_t rec = record_bytes(impl_->meta);

  namespace fs = std::filesystem;
  if (fs::exists(path) && fs::file_size(path) >= kHeaderBytes) {
    std::ifstream is(path, std::ios::binary);
    std::string h(kHeaderBytes, '\0');
    is.read(h.data(), static_cast<std::streamsize>(kHeaderBytes));
    if (h != expected) {
      throw std::runtime_error("DatasetWriter: existing file does not match the "
                               "generation configuration: " + path);
    }
    const std::size_t payload = fs::file_size(path) - kHeaderBytes;
    existing_ = static_cast<int>(payload / rec);
    if (payload % rec != 0) {  // drop a partial tail record
      fs::resize_file(path, kHeaderBytes + existing_ * rec);
    }
    impl_->os.open(path, std::ios::binary | std::ios::app);
  } else {
    impl_->os.open(path, std::ios::binary | std::ios::trunc);
    impl_->os.write(expected.data(), static_cast<std::streamsize>(expected.size()));
  }
  if (!impl_->os) throw std::runtime_error("DatasetWriter: cannot open " + path);
  impl_->next_index = static_cast<std::uint64_t>(existing_);
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::append(const Sample& s) {
  if (s.index != impl_->next_index) {
    throw std::logic_error("DatasetWriter: out-of-order append");
  }
  auto& os = impl_->os;
  auto put = [&](const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(&s.index, 8);
  put(&s.load, 8);
  put(&s.std_used, 8);
  auto put_vec = [&](const Eigen::VectorXd& v, std::int64_t expect) {
    if (v.size() != expect) throw std::runtime_error("DatasetWriter: bad sample shape");
    put(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  };
  put_vec(s.u_r, impl_->meta.len_ur);
  put_vec(s.u_h_q8, impl_->meta.len_uh);
  put_vec(s.u_h_q4, impl_->meta.len_ur);
  put_vec(s.e, impl_->meta.len_ur);
  os.flush();
  if (!os) throw std::runtime_error("DatasetWriter: write failed");
  ++impl_->next_index;
}

Dataset generate_dataset(const GenConfig& cfg, const std::string& path,
                         int threads, std::ostream* log) {
  GenerationContext ctx(cfg);
  DatasetWriter writer(cfg, path);
  const int first = writer.existing();
  if (log && first > 0) {
    *log << "resuming at sample " << first << " of " << cfg.count << "\n";
  }

  if (first < cfg.count) {
    const int workers = std::max(1, threads);
    std::mutex mu;
    std::condition_variable produced, drained;
    std::map<std::uint64_t, Sample> pending;
    std::atomic<int> next{first};
    std::exception_ptr failure;
    const std::size_t max_pending = static_cast<std::size_t>(2 * workers + 4);

    auto work = [&]() {
      try {
        WorkerSolvers solvers(ctx);
        while (true) {
          const int idx = next.fetch_add(1);
          if (idx >= cfg.count) return;
          Sample s = generate_sample(ctx, solvers, static_cast<std::uint64_t>(idx));
          std::unique_lock lock(mu);
          drained.wait(lock, [&] {
            return pending.size() < max_pending || failure != nullptr;
          });
          if (failure) return;
          pending.emplace(s.index, std::move(s));
          produced.notify_all();
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        produced.notify_all();
        drained.notify_all();
      }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);

    std::uint64_t write_next = static_cast<std::uint64_t>(first);
    {
      std::unique_lock lock(mu);
      while (write_next < static_cast<std::uint64_t>(cfg.count)) {
        produced.wait(lock, [&] {
          return failure != nullptr || pending.count(write_next) > 0;
        });
        if (failure) break;
        Sample s = std::move(pending.at(write_next));
        pending.erase(write_next);
        drained.notify_all();
        lock.unlock();
        writer.append(s);
        if (log && (s.index + 1) % 100 == 0) {
          *log << "generated " << (s.index + 1) << "/" << cfg.count << "\n";
        }
        ++write_next;
        lock.lock();
      }
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  write_meta_json(cfg, cfg.count, path + ".meta.json");
  return read_binary(path);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, int n_test,
                                  std::uint64_t seed) {
  if (n_test < 0 || n_test >= ds.size()) {
    throw std::invalid_argument("split: n_test out of range");
  }
  std::vector<int> order(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng::Stream stream(seed, rng::Domain::split);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = stream.uniform_index(i + 1);
    std::swap(order[i], order[j]);
  }
  std::vector<int> test_idx(order.begin(), order.begin() + n_test);
  std::vector<int> train_idx(order.begin() + n_test, order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  Dataset train, test;
  train.meta = ds.meta;
  test.meta = ds.meta;
  train.samples.reserve(train_idx.size());
  test.samples.reserve(test_idx.size());
  for (int i : train_idx) train.samples.push_back(ds.samples[static_cast<std::size_t>(i)]);
  for (int i : test_idx) test.samples.push_back(ds.samples[static_cast<std::size_t>(i)]);
  return {std::move(train), std::move(test)};
}

void write_binary(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_binary: cannot open " + path);
  const std::string h = header_bytes(ds.meta);
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  auto put = [&](const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  for (const auto& s : ds.samples) {
    put(&s.index, 8);
    put(&s.load, 8);
    put(&s.std_used, 8);
    put(s.u_r.data(), 8 * static_cast<std::size_t>(s.u_r.size()));
    put(s.u_h_q8.data(), 8 * static_cast<std::size_t>(s.u_h_q8.size()));
    put(s.u_h_q4.data(), 8 * static_cast<std::size_t>(s.u_h_q4.size()));
    put(s.e.data(), 8 * static_cast<std::size_t>(s.e.size()));
  }
  if (!os) throw std::runtime_error("write_binary: write failed");
}

Dataset read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_binary: cannot open " + path);
  std::string h(kHeaderBytes, '\0');
  is.read(h.data(), static_cast<std::streamsize>(kHeaderBytes));
  if (is.gcount() != static_cast<std::streamsize>(kHeaderBytes)) {
    throw std::runtime_error("read_binary: truncated header");
  }
  Dataset ds;
  ds.meta = parse_header(h);

  const std::size_t rec = record_bytes(ds.meta);
  namespace fs = std::filesystem;
  const std::size_t payload = fs::file_size(path) - kHeaderBytes;
  const std::size_t count = payload / rec;
  if (payload % rec != 0) {
    throw std::runtime_error("read_binary: truncated record in " + path);
  }

  ds.samples.resize(count);
  auto get = [&](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  };
  for (auto& s : ds.samples) {
    get(&s.index, 8);
    get(&s.load, 8);
    get(&s.std_used, 8);
    s.u_r.resize(ds.meta.len_ur);
    s.u_h_q8.resize(ds.meta.len_uh);
    s.u_h_q4.resize(ds.meta.len_ur);
    s.e.resize(ds.meta.len_ur);
    get(s.u_r.data(), 8 * static_cast<std::size_t>(s.u_r.size()));
    get(s.u_h_q8.data(), 8 * static_cast<std::size_t>(s.u_h_q8.size()));
    get(s.u_h_q4.data(), 8 * static_cast<std::size_t>(s.u_h_q4.size()));
    get(s.e.data(), 8 * static_cast<std::size_t>(s.e.size()));
  }
  if (!is) throw std::runtime_error("read_binary: short read in " + path);
  return ds;
}

std::string meta_json(const GenConfig& cfg, int count) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config_hash"] = config_hash(cfg);
  j["sample_count"] = count;
  j["master_seed"] = cfg.master_seed;
  j["mesh"]["q4_grid"] = {cfg.q4_nr, cfg.q4_nc};
  j["mesh"]["q8_grid"] = {cfg.q8_nr, cfg.q8_nc};
  j["material"]["e0"] = cfg.e0;
  j["material"]["std_range"] = {cfg.std_lo_frac, cfg.std_hi_frac};
  j["material"]["corr_len"] = {cfg.corr_len_x, cfg.corr_len_y};
  j["material"]["nugget"] = cfg.nugget;
  j["material"]["floor"] = cfg.floor_frac;
  j["material"]["poisson"] = cfg.poisson;
  j["material"]["thickness"] = cfg.thickness;
  j["load_range"] = {cfg.load_lo, cfg.load_hi};
  return j.dump(2) + "\n";
}

void write_meta_json(const GenConfig& cfg, int count, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_meta_json: cannot open " + path);
  os << meta_json(cfg, count);
}

void write_csv(const Dataset& ds, const mesh::Mesh& q4, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  os << "sample,node,x,y,u_r_x,u_r_y,u_h_x,u_h_y,e_x,e_y\n";
  char buf[256];
  for (const auto& s : ds.samples) {
    for (int n = 0; n < q4.node_count(); ++n) {
      std::snprintf(buf, sizeof(buf),
                    "%llu,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                    static_cast<unsigned long long>(s.index), n,
                    q4.nodes[n].x(), q4.nodes[n].y(), s.u_r[2 * n],
                    s.u_r[2 * n + 1], s.u_h_q4[2 * n], s.u_h_q4[2 * n + 1],
                    s.e[2 * n], s.e[2 * n + 1]);
      os << buf;
    }
  }
}

}  // namespace merr::dataset

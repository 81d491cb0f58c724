#pragma once

// Command-line flow: gen-data, train, emit-lib, eval-system, interp-drive and
// bench-runtime. Everything a command does is driven by a RunConfig, so a
// manifest (config text + hash + seed) is enough to reproduce its outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cellgnn/dataset.hpp"
#include "cellgnn/gnn.hpp"
#include "cellgnn/libgen.hpp"
#include "cellgnn/sta.hpp"

namespace cellgnn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- configuration --------------------------------------------------------

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"technology", "silicon45"},
      {"catalog", "default"},
      {"cells", ""},
      {"params", "default"},
      {"train_corners", "5"},
      {"test_corners", "8"},
      {"stimulus_slew", "4"},
      {"stimulus_load", "4"},
      {"tasks", "delay,capacitance,flip_power,non_flip_power,leakage"},
      {"exclude_degenerate", "true"},
      {"export_csv", "false"},
      {"batch_size", "512"},
      {"epochs", "5000"},
      {"lr0", "1e-4"},
      {"lr_halving_period", "500"},
      {"valid_interval", "10"},
      {"valid_fraction", "0.1"},
      {"head", "linear"},
      {"scale_by_mean_target", "false"},
      {"resume", "false"},
      {"seed", "1"},
      {"jobs", "0"},
      {"out", "run"},
      {"data", ""},
      {"models", ""},
      {"corner", "1.0,0.3,25"},
      {"grid", "4x4"},
      {"source", "oracle"},
      {"truth_lib", ""},
      {"pred_lib", ""},
      {"netlists", "bundled"},
      {"frequency", "0"},
      {"base_drives", "1,2,4"},
      {"drives", "paper"},
      {"drive_source", "oracle"},
      {"period_factors", "1.02,1.05,1.10"},
      {"quiet", "false"},
  };
  return d;
}

// Keys that may carry a per-task suffix, e.g. lr0.leakage=3e-3.
inline const std::set<std::string>& per_task_keys() {
  static const std::set<std::string> k = {"batch_size", "epochs", "lr0", "lr_halving_period",
                                          "valid_interval", "head", "scale_by_mean_target"};
  return k;
}

// Keys that never change command outputs.
inline const std::set<std::string>& unhashed_keys() {
  static const std::set<std::string> k = {"jobs", "out", "quiet"};
  return k;
}

class RunConfig {
 public:
  RunConfig() : kv_(config_defaults()) {}

  void set(const std::string& key, const std::string& value) {
    check_key(key);
    kv_[key] = value;
  }

  // key=value lines; '#' comments; blank lines ignored.
  void load_text(std::string_view text, const std::string& origin) {
    std::istringstream is{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) config_error(origin + ":" + std::to_string(n) + ": expected key=value");
      const auto key = trim(line.substr(0, eq));
      try {
        set(key, trim(line.substr(eq + 1)));
      } catch (const Error& e) {
        config_error(origin + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  // CELLGNN_<KEY> with '.' spelled "__", e.g. CELLGNN_LR0__LEAKAGE.
  void load_env() {
    for (const auto& [key, _] : config_defaults()) apply_env(key);
    for (const auto& base : per_task_keys())
      for (Task t : kAllTasks) apply_env(base + "." + to_string(t));
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const std::string& get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) config_error("config key '" + key + "' is not set");
    return it->second;
  }
  const std::string& get_for(const std::string& key, Task t) const {
    auto it = kv_.find(key + "." + to_string(t));
    return it != kv_.end() ? it->second : get(key);
  }

  long get_int(const std::string& key) const { return to_int(key, get(key)); }
  double get_double(const std::string& key) const { return to_double(key, get(key)); }
  bool get_bool(const std::string& key) const { return to_bool(key, get(key)); }

  static long to_int(const std::string& key, const std::string& v) {
    long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size())
      config_error("config key '" + key + "': expected an integer, got '" + v + "'");
    return x;
  }
  static double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !std::isfinite(x))
      config_error("config key '" + key + "': expected a number, got '" + v + "'");
    return x;
  }
  static bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    config_error("config key '" + key + "': expected true/false, got '" + v + "'");
  }

  // Sorted key=value text of every hashed key.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : kv_)
      if (!unhashed_keys().count(k)) s += k + "=" + v + "\n";
    return s;
  }
  std::string hash() const { return hex64(fnv1a64(canonical())); }
  const std::map<std::string, std::string>& values() const { return kv_; }

 private:
  static void check_key(const std::string& key) {
    if (config_defaults().count(key)) return;
    auto dot = key.find('.');
    if (dot != std::string::npos && per_task_keys().count(key.substr(0, dot))) {
      parse_task(key.substr(dot + 1));  // throws on an unknown task
      return;
    }
    config_error("unknown config key '" + key + "'");
  }

  void apply_env(const std::string& key) {
    std::string name = "CELLGNN_";
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (key[i] == '.') name += "__";
      else name += static_cast<char>(std::toupper(static_cast<unsigned char>(key[i])));
    }
    if (const char* v = std::getenv(name.c_str())) set(key, v);
  }

  std::map<std::string, std::string> kv_;
};

// ---- parsing helpers ----------------------------------------------------------

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Technology technology_of(const RunConfig& c) { return parse_technology(c.get("technology")); }

inline std::vector<Task> tasks_of(const RunConfig& c) {
  std::vector<Task> t;
  for (const auto& s : split_list(c.get("tasks"))) {
    const Task task = parse_task(s);
    if (std::find(t.begin(), t.end(), task) != t.end()) config_error("task " + s + " listed twice");
    t.push_back(task);
  }
  if (t.empty()) config_error("task list is empty");
  return t;
}

inline Corner corner_of(const RunConfig& c) {
  auto v = split_list(c.get("corner"));
  if (v.size() != 3) config_error("corner must be vdd,vth,third (got '" + c.get("corner") + "')");
  Corner k{technology_of(c), RunConfig::to_double("corner", v[0]), RunConfig::to_double("corner", v[1]),
           RunConfig::to_double("corner", v[2])};
  check_corner(k);
  return k;
}

inline LibraryGrid grid_of(const RunConfig& c) {
  const auto& g = c.get("grid");
  auto x = g.find('x');
  if (x == std::string::npos) config_error("grid must look like 4x4 (got '" + g + "')");
  return make_grid(technology_of(c), static_cast<int>(RunConfig::to_int("grid", g.substr(0, x))),
                   static_cast<int>(RunConfig::to_int("grid", g.substr(x + 1))));
}

inline CellCatalog catalog_of(const RunConfig& c) {
  const Technology t = technology_of(c);
  CellCatalog cat = c.get("catalog") == "default" ? build_default_catalog(t)
                                                   : parse_catalog(read_file(c.get("catalog")), t);
  auto cells = split_list(c.get("cells"));
  return cells.empty() ? cat : cat.subset(cells);
}

inline SurrogateParams params_of(const RunConfig& c) {
  return c.get("params") == "default" ? default_params(technology_of(c))
                                      : parse_params(read_file(c.get("params")));
}

inline int jobs_of(const RunConfig& c) {
  const long j = c.get_int("jobs");
  if (j < 0) config_error("jobs must be >= 0");
  return j == 0 ? default_jobs() : static_cast<int>(j);
}

inline fs::path out_of(const RunConfig& c) { return fs::path(c.get("out")); }
inline fs::path data_dir(const RunConfig& c) {
  return c.get("data").empty() ? out_of(c) / "data" : fs::path(c.get("data"));
}
inline fs::path models_dir(const RunConfig& c) {
  return c.get("models").empty() ? out_of(c) / "models" : fs::path(c.get("models"));
}

inline std::uint64_t seed_of(const RunConfig& c) {
  const long s = c.get_int("seed");
  if (s < 0) config_error("seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

inline TrainConfig train_config_of(const RunConfig& c, Task t) {
  TrainConfig tc;
  tc.batch_size = static_cast<int>(RunConfig::to_int("batch_size", c.get_for("batch_size", t)));
  tc.epochs = static_cast<int>(RunConfig::to_int("epochs", c.get_for("epochs", t)));
  tc.lr0 = RunConfig::to_double("lr0", c.get_for("lr0", t));
  tc.lr_halving_period =
      static_cast<int>(RunConfig::to_int("lr_halving_period", c.get_for("lr_halving_period", t)));
  tc.valid_interval = static_cast<int>(RunConfig::to_int("valid_interval", c.get_for("valid_interval", t)));
  tc.head = parse_head(c.get_for("head", t));
  tc.scale_by_mean_target = RunConfig::to_bool("scale_by_mean_target", c.get_for("scale_by_mean_target", t));
  tc.seed = derive_seed(seed_of(c), std::string("init/") + to_string(t));
  tc.validate();
  return tc;
}

inline std::vector<GateNetlist> netlists_of(const RunConfig& c, Technology t) {
  std::vector<GateNetlist> out;
  for (const auto& item : split_list(c.get("netlists"))) {
    if (item == "bundled") {
      for (auto& b : bundled_benchmarks(t)) out.push_back(std::move(b));
    } else if (item.rfind("bundled:", 0) == 0) {
      out.push_back(bundled_benchmark(item.substr(8), t));
    } else {
      out.push_back(parse_gatelist(read_file(item)));
    }
  }
  if (out.empty()) config_error("no netlists given");
  return out;
}

inline std::vector<std::pair<std::string, int>> drives_of(const RunConfig& c) {
  const auto& d = c.get("drives");
  if (d == "paper") return plus_extension();
  if (d == "none") return {};
  return parse_drive_list(d);
}

inline std::set<int> base_drives_of(const RunConfig& c) {
  std::set<int> s;
  for (const auto& x : split_list(c.get("base_drives"))) {
    const long v = RunConfig::to_int("base_drives", x);
    if (v < 1) config_error("base_drives entries must be >= 1");
    s.insert(static_cast<int>(v));
  }
  if (s.empty()) config_error("base_drives is empty");
  return s;
}

inline std::vector<double> period_factors_of(const RunConfig& c) {
  std::vector<double> f;
  for (const auto& x : split_list(c.get("period_factors"))) {
    const double v = RunConfig::to_double("period_factors", x);
    if (!(v >= 1.0)) config_error("period factors must be >= 1");
    f.push_back(v);
  }
  if (f.empty()) config_error("period_factors is empty");
  return f;
}

// ---- output ----------------------------------------------------------------

struct Output {
  bool quiet = false;
  void line(const std::string& s) const {
    if (!quiet) std::cout << s << "\n";
  }
  void progress(const std::string& s) const {
    if (!quiet) std::cerr << s << "\n";
  }
};

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p.string()))); }

inline json manifest_base(const std::string& command, const RunConfig& c) {
  json m;
  m["command"] = command;
  m["config"] = c.canonical();
  m["config_hash"] = c.hash();
  m["seed"] = seed_of(c);
  return m;
}

inline void write_manifest(const fs::path& path, const json& m) { write_file(path.string(), m.dump(2) + "\n"); }

inline std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- commands -----------------------------------------------------------------

inline std::string dataset_file(Task t, const char* split) {
  return std::string(to_string(t)) + "." + split + ".cgds";
}

inline int cmd_gen_data(const RunConfig& c, const Output& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Technology tech = technology_of(c);
  const auto tasks = tasks_of(c);
  const auto cat = catalog_of(c);
  const auto params = params_of(c);
  const long n_train = c.get_int("train_corners"), n_test = c.get_int("test_corners");
  if (n_test != 0 && n_test < 2) config_error("test_corners must be 0 or >= 2");
  const auto train_corners = corner_grid(tech, static_cast<int>(n_train));
  const auto stim = stimulus_grid(tech, static_cast<int>(c.get_int("stimulus_slew")),
                                  static_cast<int>(c.get_int("stimulus_load")));
  DatasetOptions opts{c.get_bool("exclude_degenerate"), jobs_of(c)};
  const bool csv = c.get_bool("export_csv");
  const fs::path dir = data_dir(c);
  fs::create_directories(dir);

  json m = manifest_base("gen-data", c);
  m["oracle_preset_hash"] = hex64(fnv1a64(to_config_text(params)));
  m["cells"] = cat.size();
  m["train_corners"] = train_corners.size();
  auto emit = [&](const std::vector<Corner>& corners, const char* split) {
    auto ds = build_dataset(cat, corners, stim, tasks, params, opts);
    for (Task t : tasks) {
      const auto& samples = ds.at(t);
      const auto file = dir / dataset_file(t, split);
      write_file(file.string(), serialize_dataset(t, samples));
      if (csv) write_file((dir / (std::string(to_string(t)) + "." + split + ".csv")).string(), export_csv(samples));
      auto& e = m["datasets"][std::string(to_string(t))][split];
      e["file"] = file.filename().string();
      e["count"] = samples.size();
      e["hash"] = hex64(dataset_hash(t, samples));
      o.line(std::string(to_string(t)) + " " + split + ": " + std::to_string(samples.size()) +
             " samples, hash " + hex64(dataset_hash(t, samples)));
    }
  };
  emit(train_corners, "train");
  if (n_test > 0) {
    const auto test_corners = corner_grid(tech, static_cast<int>(n_test));
    m["test_corners"] = test_corners.size();
    emit(test_corners, "test");
  }
  m["wall_clock"]["seconds"] = seconds_since(t0);
  write_manifest(dir / "manifest.json", m);
  return 0;
}

inline std::vector<PreparedGraph<float>> prepare_all(const NormalizationSpec& spec,
                                                      const std::vector<Sample>& s) {
  std::vector<PreparedGraph<float>> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(prepare<float>(apply(spec, x.graph)));
  return out;
}

inline DatasetFile read_dataset(const fs::path& p, Task expect) {
  if (!fs::exists(p)) data_error("missing dataset " + p.string() + " (run gen-data first)");
  auto d = deserialize_dataset(read_file(p.string()));
  if (d.task != expect) data_error(p.string() + " holds " + to_string(d.task) + " samples");
  return d;
}

// Tasks are independent, so with jobs > 1 they train concurrently; each task
// is itself single-threaded and seeded from its own name, which keeps the
// checkpoints identical to a serial run.
inline int cmd_train(const RunConfig& c, const Output& o) {
  const auto tasks = tasks_of(c);
  std::map<Task, TrainConfig> cfgs;
  for (Task t : tasks) cfgs[t] = train_config_of(c, t);  // validate everything up front
  const double vf = c.get_double("valid_fraction");
  if (!(vf > 0.0 && vf < 1.0)) config_error("valid_fraction must be in (0, 1)");
  const bool resume = c.get_bool("resume");
  const fs::path ddir = data_dir(c), mdir = models_dir(c);
  for (Task t : tasks) read_dataset(ddir / dataset_file(t, "train"), t);
  fs::create_directories(mdir);

  std::vector<json> entries(tasks.size());
  std::vector<double> seconds(tasks.size());
  std::mutex out_mu;
  parallel_for(tasks.size(), jobs_of(c), [&](std::size_t ti) {
    const Task t = tasks[ti];
    const auto t0 = std::chrono::steady_clock::now();
    const std::string name = to_string(t);
    const auto& cfg = cfgs.at(t);
    auto data = read_dataset(ddir / dataset_file(t, "train"), t);
    auto [fit, valid] = random_split(std::move(data.samples), vf,
                                     derive_seed(seed_of(c), "valid/" + name));
    if (fit.empty() || valid.empty()) data_error(name + ": dataset too small to split");
    const fs::path ckpt = mdir / (name + ".ckpt");
    const fs::path logf = mdir / (name + ".log.csv");

    NormalizationSpec spec = fit_normalization(fit);
    TrainState<float> st;
    bool resumed = false;
    if (resume && fs::exists(ckpt)) {
      auto ck = deserialize_checkpoint(read_file(ckpt.string()));
      if (!ck.state) data_error(ckpt.string() + " has no training state to resume");
      if (!(ck.norm == spec) || ck.params.layout != layout_for(t))
        data_error(ckpt.string() + " was trained on different data");
      st = cast_state<float>(*ck.state);
      resumed = true;
    }
    const auto A = prepare_all(spec, fit), V = prepare_all(spec, valid);
    if (!resumed) st = start_training<float>(layout_for(t), A, cfg);
    const int start_epoch = st.epoch;
    continue_training<float>(st, A, V, cfg, [&](const EpochLog& e) {
      if (e.epoch % 50 == 0 || e.epoch == cfg.epochs) {
        std::lock_guard<std::mutex> lock(out_mu);
        o.progress(name + " epoch " + std::to_string(e.epoch) + " train " + fmt("%.4f", e.train_mape) +
                   (e.valid_mape ? " valid " + fmt("%.4f", *e.valid_mape) : std::string()));
      }
      return true;
    });
    write_file(ckpt.string(), serialize_checkpoint(st.params, spec, &st));
    std::string log = log_csv(st.log);
    if (resumed && fs::exists(logf)) {
      auto prev = read_file(logf.string());
      log = prev + log.substr(log.find('\n') + 1);
    }
    write_file(logf.string(), log);

    json e;
    e["checkpoint"] = ckpt.filename().string();
    e["checkpoint_hash"] = file_hash(ckpt);
    e["train_count"] = fit.size();
    e["valid_count"] = valid.size();
    e["epochs"] = st.epoch;
    e["resumed_from_epoch"] = start_epoch;
    e["best_epoch"] = st.best_epoch;
    e["best_valid_mape"] = st.best_valid;
    e["head"] = to_string(cfg.head);
    e["lr0"] = cfg.lr0;
    const fs::path test = ddir / dataset_file(t, "test");
    std::string line = name + ": best valid MAPE " + fmt("%.4f", st.best_valid) + "% at epoch " +
                       std::to_string(st.best_epoch);
    if (fs::exists(test)) {
      auto td = read_dataset(test, t);
      const double mape = evaluate_mape(st.best, prepare_all(spec, td.samples));
      e["test_count"] = td.samples.size();
      e["test_mape"] = mape;
      line += ", test MAPE " + fmt("%.4f", mape) + "%";
    }
    entries[ti] = std::move(e);
    seconds[ti] = seconds_since(t0);
    std::lock_guard<std::mutex> lock(out_mu);
    o.line(line);
  });

  json m = manifest_base("train", c);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    m["models"][std::string(to_string(tasks[i]))] = entries[i];
    m["wall_clock"][std::string(to_string(tasks[i]))] = seconds[i];
  }
  write_manifest(mdir / "manifest.json", m);
  return 0;
}

inline ModelSet load_models(const fs::path& dir) {
  ModelSet ms;
  for (Task t : kAllTasks) {
    const auto p = dir / (std::string(to_string(t)) + ".ckpt");
    if (!fs::exists(p)) data_error("missing checkpoint " + p.string());
    ms[t] = load_task_model(read_file(p.string()));
  }
  return ms;
}

inline int cmd_emit_lib(const RunConfig& c, const Output& o) {
  const auto corner = corner_of(c);
  const auto grid = grid_of(c);
  const auto cat = catalog_of(c);
  const auto params = params_of(c);
  const auto& source = c.get("source");
  const int jobs = jobs_of(c);
  const fs::path dir = out_of(c) / "lib";
  fs::create_directories(dir);
  json m = manifest_base("emit-lib", c);
  const auto t0 = std::chrono::steady_clock::now();
  auto truth = build_oracle_library(cat, corner, grid, params, jobs);
  const auto truth_path = dir / (truth.name + ".lib");
  write_file(truth_path.string(), emit_liberty(truth));
  m["outputs"]["oracle_lib"] = truth_path.filename().string();
  m["outputs"]["oracle_lib_hash"] = file_hash(truth_path);
  o.line("wrote " + truth_path.string());
  if (source != "oracle") {
    const fs::path mdir = source == "models" ? models_dir(c) : fs::path(source);
    auto pred = build_model_library(cat, corner, grid, params, load_models(mdir), truth, jobs);
    const auto pred_path = dir / (pred.name + ".lib");
    write_file(pred_path.string(), emit_liberty(pred));
    auto report = compare(pred, truth);
    const auto csv_path = dir / (pred.name + ".metrics.csv");
    write_file(csv_path.string(), report.csv());
    m["outputs"]["model_lib"] = pred_path.filename().string();
    m["outputs"]["model_lib_hash"] = file_hash(pred_path);
    m["outputs"]["metrics"] = csv_path.filename().string();
    for (const auto& [t, mt] : report.overall) m["metrics"][std::string(to_string(t))] = mt.mape;
    o.line("wrote " + pred_path.string());
    o.line(report.table());
  }
  m["wall_clock"]["seconds"] = seconds_since(t0);
  write_manifest(dir / "manifest.json", m);
  return 0;
}

inline CharLibrary read_library(const std::string& path, const char* what) {
  if (path.empty()) config_error(std::string(what) + " library path is not set");
  return parse_liberty(read_file(path));
}

inline int cmd_eval_system(const RunConfig& c, const Output& o) {
  const auto truth = read_library(c.get("truth_lib"), "truth_lib");
  const auto pred = read_library(c.get("pred_lib"), "pred_lib");
  if (truth.corner.technology != pred.corner.technology) data_error("libraries use different technologies");
  const double spu = ranges(truth.corner.technology).seconds_per_time_unit;
  const double freq_key = c.get_double("frequency");
  if (freq_key < 0.0) config_error("frequency must be >= 0");
  const auto nets = netlists_of(c, truth.corner.technology);
  const fs::path dir = out_of(c);
  fs::create_directories(dir);
  std::string csv = SystemDelta::csv_header();
  json m = manifest_base("eval-system", c);
  for (const auto& n : nets) {
    const double f = freq_key > 0.0 ? freq_key : 1.0 / (n.period * spu);
    auto d = compare_libraries(n, truth, pred, f);
    csv += d.csv_row();
    o.line(n.name + ": |dWNS| " + fmt("%.4g", d.abs_dwns()) + " (" + fmt("%.3f", d.dwns_pct_period()) +
           "% of period), leakage err " + fmt("%.3f", d.leakage_err()) + "%, dynamic err " +
           fmt("%.3f", d.dynamic_err()) + "%");
  }
  const auto csv_path = dir / "system.csv";
  write_file(csv_path.string(), csv);
  m["outputs"]["system_csv"] = csv_path.filename().string();
  m["outputs"]["system_csv_hash"] = file_hash(csv_path);
  write_manifest(dir / "system.manifest.json", m);
  return 0;
}

struct InterpRow {
  std::string design;
  double t_min = 0.0;
  struct Point {
    double factor, period, area_orig, power_orig, area_plus, power_plus, ppa;
    bool met_orig, met_plus;
  };
  std::vector<Point> points;
};

inline std::vector<InterpRow> interp_drive(const RunConfig& c, const Output& o) {
  const auto corner = corner_of(c);
  const auto grid = grid_of(c);
  const auto params = params_of(c);
  const auto base_cat = with_drive_set(catalog_of(c), base_drives_of(c));
  const auto drives = drives_of(c);
  const auto factors = period_factors_of(c);
  const auto nets = netlists_of(c, corner.technology);
  const int jobs = jobs_of(c);
  const double spu = ranges(corner.technology).seconds_per_time_unit;

  auto base = build_oracle_library(base_cat, corner, grid, params, jobs);
  CharLibrary plus = base;
  CellCatalog extra{corner.technology, {}};
  for (const auto& [family, d] : drives) {
    const auto name = family + "X" + std::to_string(d);
    if (!base_cat.find(name)) extra.add(make_cell(family, d));
  }
  if (!extra.cells.empty()) {
    auto extra_truth = build_oracle_library(extra, corner, grid, params, jobs);
    const auto& src = c.get("drive_source");
    CharLibrary added = extra_truth;
    if (src != "oracle") {
      const fs::path mdir = src == "models" ? models_dir(c) : fs::path(src);
      added = build_model_library(extra, corner, grid, params, load_models(mdir), extra_truth, jobs);
    }
    for (auto& e : added.cells) plus.cells.push_back(e);
  }
  std::vector<InterpRow> rows;
  for (const auto& n : nets) {
    InterpRow r;
    r.design = n.name;
    r.t_min = min_feasible_period(n, base);
    for (double f : factors) {
      GateNetlist p = n;
      p.period = f * r.t_min;
      auto a = size_gates(p, base, spu);
      auto b = size_gates(p, plus, spu);
      r.points.push_back({f, p.period, a.area_after, a.power_after, b.area_after, b.power_after,
                          ppa_improvement(a.area_after, a.power_after, b.area_after, b.power_after),
                          a.timing_met, b.timing_met});
    }
    std::string line = n.name + ": min period " + fmt("%.4g", r.t_min);
    for (const auto& pt : r.points) line += ", PPA@" + fmt("%.2f", pt.factor) + " " + fmt("%.3f", pt.ppa) + "%";
    o.line(line);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline int cmd_interp_drive(const RunConfig& c, const Output& o) {
  const auto t0 = std::chrono::steady_clock::now();
  auto rows = interp_drive(c, o);
  const double spu = ranges(technology_of(c)).seconds_per_time_unit;
  std::string csv = "design,min_period";
  const auto factors = period_factors_of(c);
  for (std::size_t k = 0; k < factors.size(); ++k) {
    const std::string s = "_" + std::to_string(k + 1);
    csv += ",period" + s + ",freq_mhz" + s + ",area_orig" + s + ",power_orig_uw" + s + ",area_plus" + s +
           ",power_plus_uw" + s + ",met" + s + ",ppa_impro_pct" + s;
  }
  csv += "\n";
  for (const auto& r : rows) {
    csv += r.design + "," + fmt("%.9g", r.t_min);
    for (const auto& p : r.points)
      csv += "," + fmt("%.9g", p.period) + "," + fmt("%.9g", 1e-6 / (p.period * spu)) + "," +
             fmt("%.9g", p.area_orig) + "," + fmt("%.9g", p.power_orig) + "," + fmt("%.9g", p.area_plus) +
             "," + fmt("%.9g", p.power_plus) + "," + ((p.met_orig && p.met_plus) ? "1" : "0") + "," +
             fmt("%.6g", p.ppa);
    csv += "\n";
  }
  const fs::path dir = out_of(c);
  fs::create_directories(dir);
  write_file((dir / "interp.csv").string(), csv);
  json m = manifest_base("interp-drive", c);
  m["outputs"]["interp_csv_hash"] = file_hash(dir / "interp.csv");
  m["wall_clock"]["seconds"] = seconds_since(t0);
  write_manifest(dir / "interp.manifest.json", m);
  return 0;
}

struct RuntimeRow {
  Task task;
  std::size_t queries = 0;
  double oracle_s = 0.0;
  double model_s = 0.0;  // encode + normalize + batched inference
  double speedup() const { return model_s > 0 ? oracle_s / model_s : 0.0; }
};

struct RuntimeReport {
  double load_s = 0.0;  // reading and decoding the checkpoints
  std::size_t cells = 0;
  std::vector<RuntimeRow> rows;
  double oracle_total() const {
    double s = 0;
    for (const auto& r : rows) s += r.oracle_s;
    return s;
  }
  double model_total() const {
    double s = 0;
    for (const auto& r : rows) s += r.model_s;
    return s;
  }
};

// Times the oracle and the models on the same query set: every point of a
// full library at one corner.
inline RuntimeReport bench_runtime(const CellCatalog& cat, const Corner& corner, const LibraryGrid& grid,
                                   const SurrogateParams& params, const fs::path& mdir, int repeats = 3) {
  RuntimeReport rep;
  rep.cells = cat.size();
  auto t0 = std::chrono::steady_clock::now();
  const ModelSet models = load_models(mdir);
  rep.load_s = seconds_since(t0);

  struct Query {
    const CellNetlist* cell;
    std::size_t cell_index;
    Arc arc;
    InputVector state = 0;
    int pin = 0;
    double slew = 0, load = 0;
  };
  std::vector<CompiledCell> compiled;
  for (const auto& c : cat.cells) compiled.emplace_back(c);
  std::map<Task, std::vector<Query>> queries;
  for (std::size_t k = 0; k < cat.cells.size(); ++k) {
    const auto& nl = cat.cells[k];
    for (const auto& a : enumerate_arcs(compiled[k]))
      for (double s : grid.slews)
        for (double l : grid.loads) {
          Query q{&nl, k, a, 0, 0, s, l};
          if (a.output_flips) {
            queries[Task::Delay].push_back(q);
            queries[Task::FlipPower].push_back(q);
          } else {
            queries[Task::NonFlipPower].push_back(q);
          }
        }
    for (InputVector v = 0; v < (1u << nl.inputs.size()); ++v)
      queries[Task::Leakage].push_back({&nl, k, {}, v, 0, 0, 0});
    for (int p = 0; p < static_cast<int>(nl.inputs.size()); ++p)
      queries[Task::Capacitance].push_back({&nl, k, {}, 0, p, 0, 0});
  }
  volatile double sink = 0.0;
  for (Task t : kAllTasks) {
    RuntimeRow row;
    row.task = t;
    const auto& qs = queries[t];
    row.queries = qs.size();
    double best_oracle = 1e300, best_model = 1e300;
    for (int rep_i = 0; rep_i < repeats; ++rep_i) {
      t0 = std::chrono::steady_clock::now();
      for (const auto& q : qs) {
        const auto& cc = compiled[q.cell_index];
        switch (t) {
          case Task::Delay: sink = sink + *characterize(cc, q.arc, corner, q.slew, q.load, params).delay; break;
          case Task::FlipPower: sink = sink + *characterize(cc, q.arc, corner, q.slew, q.load, params).flip_energy; break;
          case Task::NonFlipPower: sink = sink + *characterize(cc, q.arc, corner, q.slew, q.load, params).non_flip_energy; break;
          case Task::Leakage: sink = sink + leakage_power(cc, q.state, corner, params); break;
          case Task::Capacitance: sink = sink + pin_capacitance(cc, q.pin, corner, params); break;
        }
      }
      best_oracle = std::min(best_oracle, seconds_since(t0));

      t0 = std::chrono::steady_clock::now();
      const auto& m = models.at(t);
      std::vector<PreparedGraph<float>> graphs;
      graphs.reserve(qs.size());
      for (const auto& q : qs) {
        const int n = static_cast<int>(q.cell->inputs.size());
        Stimulus s = layout_for(t) == FeatureLayout::DelayPower ? Stimulus::for_arc(q.arc, n, q.slew, q.load)
                     : t == Task::Leakage                       ? Stimulus::for_state(q.state, n)
                                                                : Stimulus::for_pin(q.pin);
        graphs.push_back(prepare<float>(apply(m.norm, encode(*q.cell, corner, s, layout_for(t)))));
      }
      std::vector<std::size_t> idx(graphs.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      ForwardCache<float> cache;
      for (std::size_t b = 0; b < graphs.size(); b += 512) {
        auto batch = make_batch(graphs, idx, b, std::min(graphs.size(), b + 512));
        forward(m.params, batch, cache);
        sink = sink + cache.pred[0];
      }
      best_model = std::min(best_model, seconds_since(t0));
    }
    row.oracle_s = best_oracle;
    row.model_s = best_model;
    rep.rows.push_back(row);
  }
  return rep;
}

inline int cmd_bench_runtime(const RunConfig& c, const Output& o) {
  const auto corner = corner_of(c);
  const auto grid = grid_of(c);
  const auto cat = catalog_of(c);
  const auto params = params_of(c);
  const fs::path mdir = c.get("source") == "oracle" || c.get("source") == "models" ? models_dir(c)
                                                                                   : fs::path(c.get("source"));
  auto rep = bench_runtime(cat, corner, grid, params, mdir);
  std::string csv = "task,queries,oracle_ms,model_ms,speedup\n";
  o.line("cells " + std::to_string(rep.cells) + ", model load " + fmt("%.3f", rep.load_s * 1e3) + " ms");
  o.line("task             queries   oracle_ms    model_ms   speedup");
  for (const auto& r : rep.rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %9zu %11.3f %11.3f %9.3f", to_string(r.task), r.queries,
                  r.oracle_s * 1e3, r.model_s * 1e3, r.speedup());
    o.line(buf);
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f\n", to_string(r.task), r.queries, r.oracle_s * 1e3,
                  r.model_s * 1e3, r.speedup());
    csv += buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "total,,%.6f,%.6f,%.6f\nload,,,%.6f,\n", rep.oracle_total() * 1e3,
                rep.model_total() * 1e3, rep.oracle_total() / rep.model_total(), rep.load_s * 1e3);
  csv += buf;
  const fs::path dir = out_of(c);
  fs::create_directories(dir);
  write_file((dir / "runtime.csv").string(), csv);
  json m = manifest_base("bench-runtime", c);
  m["wall_clock"]["oracle_ms"] = rep.oracle_total() * 1e3;
  m["wall_clock"]["model_ms"] = rep.model_total() * 1e3;
  write_manifest(dir / "runtime.manifest.json", m);
  return 0;
}

// ---- entry point -----------------------------------------------------------------

inline int exit_code(ErrorKind k) { return static_cast<int>(k); }

inline int run(int argc, const char* const* argv) {
  CLI::App app{"cellgnn: GNN cell-library characterization flow"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long> seed, jobs;
  std::optional<std::string> out;
  bool quiet = false;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--set", sets, "override one config key (key=value), repeatable")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--seed", seed, "top-level seed");
  app.add_option("--jobs", jobs, "worker threads (0 = all cores)");
  app.add_option("--out", out, "output directory");
  app.add_flag("--quiet", quiet, "suppress progress output");

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, const Output&);
  };
  const Sub subs[] = {
      {"gen-data", "build train/test datasets from the oracle", cmd_gen_data},
      {"train", "train one model per task", cmd_train},
      {"emit-lib", "write oracle (and model) Liberty libraries plus metrics", cmd_emit_lib},
      {"eval-system", "compare two libraries on gate-level netlists", cmd_eval_system},
      {"interp-drive", "sizing study with added drive strengths", cmd_interp_drive},
      {"bench-runtime", "time model inference against the oracle", cmd_bench_runtime},
  };
  std::map<std::string, std::map<std::string, std::string>> aliases;
  std::vector<CLI::App*> apps;
  auto alias = [&](CLI::App* sub, const std::string& flag, const std::string& key, const char* help) {
    sub->add_option_function<std::string>(
        "--" + flag, [&aliases, sub, key](const std::string& v) { aliases[sub->get_name()][key] = v; }, help);
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    apps.push_back(sub);
    const std::string n = s.name;
    if (n == "gen-data" || n == "train") alias(sub, "data", "data", "dataset directory");
    if (n == "train" || n == "bench-runtime") alias(sub, "models", "models", "checkpoint directory");
    if (n == "emit-lib" || n == "interp-drive" || n == "bench-runtime") {
      alias(sub, "corner", "corner", "vdd,vth,third");
      alias(sub, "grid", "grid", "slew x load points, e.g. 4x4");
    }
    if (n == "emit-lib") alias(sub, "source", "source", "oracle | models | checkpoint directory");
    if (n == "eval-system") {
      alias(sub, "truth", "truth_lib", "reference Liberty file");
      alias(sub, "pred", "pred_lib", "predicted Liberty file");
      alias(sub, "frequency", "frequency", "Hz; 0 uses 1/period");
    }
    if (n == "eval-system" || n == "interp-drive") alias(sub, "netlists", "netlists", "bundled | files");
    if (n == "interp-drive") {
      alias(sub, "drives", "drives", "paper | none | list such as INVX3,BUFX5");
      alias(sub, "drive-source", "drive_source", "oracle | models | checkpoint directory");
    }
    if (n == "train") alias(sub, "resume", "resume", "continue from existing checkpoints");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::Config);
  }
  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_text(read_file(config_path), config_path);
    cfg.load_env();
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) config_error("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (jobs) cfg.set("jobs", std::to_string(*jobs));
    if (out) cfg.set("out", *out);
    if (quiet) cfg.set("quiet", "true");
    for (std::size_t i = 0; i < apps.size(); ++i) {
      if (!apps[i]->parsed()) continue;
      for (const auto& [k, v] : aliases[apps[i]->get_name()]) cfg.set(k, v);
      // Generic checks before any work.
      technology_of(cfg);
      seed_of(cfg);
      jobs_of(cfg);
      Output o{cfg.get_bool("quiet")};
      return subs[i].fn(cfg, o);
    }
    return exit_code(ErrorKind::Config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::Data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::Numeric);
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"cellgnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cellgnn::cli

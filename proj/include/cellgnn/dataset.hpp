#pragma once

// Corner and stimulus grids, labeled sample generation against the oracle,
// min-max feature normalization, and the binary/CSV dataset formats.

#include <array>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cellgnn/cellgraph.hpp"
#include "cellgnn/error.hpp"
#include "cellgnn/netlist.hpp"
#include "cellgnn/oracle.hpp"
#include "cellgnn/technology.hpp"
#include "cellgnn/util.hpp"

namespace cellgnn {

enum class Task : int { Delay = 0, Capacitance = 1, FlipPower = 2, NonFlipPower = 3, Leakage = 4 };

inline constexpr std::array<Task, 5> kAllTasks{Task::Delay, Task::Capacitance, Task::FlipPower,
                                              Task::NonFlipPower, Task::Leakage};

inline const char* to_string(Task t) {
  switch (t) {
    case Task::Delay: return "delay";
    case Task::Capacitance: return "capacitance";
    case Task::FlipPower: return "flip_power";
    case Task::NonFlipPower: return "non_flip_power";
    case Task::Leakage: return "leakage";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  for (auto t : kAllTasks)
    if (s == to_string(t)) return t;
  config_error("unknown task '" + std::string(s) + "'");
}

inline FeatureLayout layout_for(Task t) {
  switch (t) {
    case Task::Leakage: return FeatureLayout::Leakage;
    case Task::Capacitance: return FeatureLayout::Capacitance;
    default: return FeatureLayout::DelayPower;
  }
}

// Equally spaced, endpoints inclusive.
inline std::vector<double> linspace(const Range& r, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
    v[i] = i == n - 1 ? r.hi : r.lo + (r.hi - r.lo) * static_cast<double>(i) / (n - 1);
  return v;
}

// Vdd-major Cartesian product of the three corner axes.
inline std::vector<Corner> corner_grid(Technology t, int points_per_axis) {
  if (points_per_axis < 2) config_error("corner grid needs >= 2 points per axis");
  const auto& r = ranges(t);
  std::vector<Corner> out;
  for (double vdd : linspace(r.vdd, points_per_axis))
    for (double vth : linspace(r.vth, points_per_axis))
      for (double third : linspace(r.third, points_per_axis)) out.push_back({t, vdd, vth, third});
  return out;
}

struct StimulusPoint {
  double slew = 0.0;
  double load = 0.0;
  bool operator==(const StimulusPoint&) const = default;
};

inline std::vector<StimulusPoint> stimulus_grid(Technology t, int n_slew, int n_load) {
  if (n_slew < 2 || n_load < 2) config_error("stimulus grid needs >= 2 points per axis");
  const auto& r = ranges(t);
  std::vector<StimulusPoint> out;
  for (double s : linspace(r.slew, n_slew))
    for (double l : linspace(r.load, n_load)) out.push_back({s, l});
  return out;
}

// Enough to re-encode a sample from scratch.
struct Provenance {
  std::string cell;
  Task task = Task::Delay;
  int pin = -1;
  InputVector from = 0;
  InputVector to = 0;
  Corner corner;
  double slew = 0.0;
  double load = 0.0;

  std::string to_string() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s|%s|%d|%u|%u|%s|%.17g|%.17g|%.17g|%.17g|%.17g",
                  cell.c_str(), cellgnn::to_string(task), pin, from, to,
                  std::string(cellgnn::to_string(corner.technology)).c_str(), corner.vdd,
                  corner.vth, corner.third, slew, load);
    return buf;
  }

  static Provenance parse(const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, '|')) f.push_back(item);
    if (f.size() != 11) data_error("bad provenance '" + s + "'");
    Provenance p;
    try {
      p.cell = f[0];
      p.task = parse_task(f[1]);
      p.pin = std::stoi(f[2]);
      p.from = static_cast<InputVector>(std::stoul(f[3]));
      p.to = static_cast<InputVector>(std::stoul(f[4]));
      p.corner = {parse_technology(f[5]), std::stod(f[6]), std::stod(f[7]), std::stod(f[8])};
      p.slew = std::stod(f[9]);
      p.load = std::stod(f[10]);
    } catch (const std::logic_error&) {
      data_error("bad provenance '" + s + "'");
    }
    return p;
  }
};

struct Sample {
  CellGraph graph;  // graph.target holds the label
  Provenance provenance;
  double target() const { return graph.target; }
};

inline Stimulus stimulus_for(const Provenance& p, int n_inputs) {
  switch (p.task) {
    case Task::Leakage: return Stimulus::for_state(p.from, n_inputs);
    case Task::Capacitance: return Stimulus::for_pin(p.pin);
    default: {
      Arc arc;
      arc.pin = p.pin;
      arc.from = p.from;
      arc.to = p.to;
      return Stimulus::for_arc(arc, n_inputs, p.slew, p.load);
    }
  }
}

inline CellGraph encode(const CellNetlist& cell, const Provenance& p) {
  auto g = encode(cell, p.corner, stimulus_for(p, static_cast<int>(cell.inputs.size())),
                  layout_for(p.task));
  g.description = p.to_string();
  return g;
}

struct DatasetOptions {
  bool exclude_degenerate = true;
  int jobs = 1;
};

using TaskSamples = std::map<Task, std::vector<Sample>>;

// Row counts: delay/flip power per (cell, flip arc, corner, stimulus);
// non-flip power per (cell, static arc, corner, stimulus); leakage per
// (cell, input state, corner); capacitance per (cell, pin, corner).
// Corner-major ordering; corners are generated in parallel.
inline TaskSamples build_dataset(const CellCatalog& catalog, const std::vector<Corner>& corners,
                                 const std::vector<StimulusPoint>& stimulus,
                                 const std::vector<Task>& tasks, const SurrogateParams& params,
                                 const DatasetOptions& opts = {}) {
  if (catalog.cells.empty() || corners.empty() || tasks.empty())
    config_error("build_dataset: empty catalog, corner list or task list");
  bool need_stimulus = false;
  for (auto t : tasks) need_stimulus |= layout_for(t) == FeatureLayout::DelayPower;
  if (need_stimulus && stimulus.empty()) config_error("build_dataset: empty stimulus grid");

  std::vector<CompiledCell> compiled;
  std::vector<std::vector<Arc>> arcs;
  for (const auto& c : catalog.cells) {
    compiled.emplace_back(c);
    arcs.push_back(enumerate_arcs(compiled.back()));
  }

  std::vector<TaskSamples> per_corner(corners.size());
  parallel_for(corners.size(), opts.jobs, [&](std::size_t ci) {
    const Corner& corner = corners[ci];
    auto& out = per_corner[ci];
    auto push = [&](Task task, const CellNetlist& cell, Provenance prov, double target,
                    bool degenerate) {
      if (degenerate && opts.exclude_degenerate) return;
      if (!(target > 0.0) || !std::isfinite(target))
        numeric_error("non-positive target for " + prov.to_string());
      Sample s;
      s.provenance = std::move(prov);
      s.graph = encode(cell, s.provenance);
      s.graph.target = target;
      out[task].push_back(std::move(s));
    };
    for (std::size_t k = 0; k < compiled.size(); ++k) {
      const auto& cc = compiled[k];
      const auto& cell = catalog.cells[k];
      for (Task task : tasks) {
        Provenance base;
        base.cell = cell.name;
        base.task = task;
        base.corner = corner;
        if (task == Task::Leakage) {
          for (InputVector v = 0; v < (1u << cc.n_inputs()); ++v) {
            Provenance p = base;
            p.from = p.to = v;
            bool degenerate = detail::overdrive(corner) <= 0.0;
            push(task, cell, p, leakage_power(cc, v, corner, params), degenerate);
          }
          continue;
        }
        if (task == Task::Capacitance) {
          for (int pin = 0; pin < cc.n_inputs(); ++pin) {
            Provenance p = base;
            p.pin = pin;
            bool degenerate = detail::overdrive(corner) <= 0.0;
            push(task, cell, p, pin_capacitance(cc, pin, corner, params), degenerate);
          }
          continue;
        }
        for (const auto& arc : arcs[k]) {
          if (arc.output_flips != (task != Task::NonFlipPower)) continue;
          for (const auto& sp : stimulus) {
            Provenance p = base;
            p.pin = arc.pin;
            p.from = arc.from;
            p.to = arc.to;
            p.slew = sp.slew;
            p.load = sp.load;
            CharPoint cp;
            try {
              cp = characterize(cc, arc, corner, sp.slew, sp.load, params);
            } catch (const Error& e) {
              throw Error(e.kind(), std::string(e.what()) + " [" + p.to_string() + "]");
            }
            double target = task == Task::Delay       ? *cp.delay
                            : task == Task::FlipPower ? *cp.flip_energy
                                                      : *cp.non_flip_energy;
            push(task, cell, p, target, cp.degenerate);
          }
        }
      }
    }
  });

  TaskSamples all;
  for (auto t : tasks) all[t];
  for (auto& pc : per_corner)
    for (auto& [task, v] : pc)
      for (auto& s : v) all[task].push_back(std::move(s));
  return all;
}

// Seeded split of `samples` into (rest, held) with round(fraction * n) held
// out. Order within each part follows the input order.
inline std::pair<std::vector<Sample>, std::vector<Sample>> random_split(
    std::vector<Sample> samples, double fraction, std::uint64_t seed) {
  const std::size_t n = samples.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<char> is_held(n, 0);
  for (std::size_t k = 0; k < held && k < n; ++k) is_held[idx[k]] = 1;
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i = 0; i < n; ++i)
    (is_held[i] ? out.second : out.first).push_back(std::move(samples[i]));
  return out;
}

// Held-out-cell split: samples of the named cells go to the second part.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_by_cells(
    std::vector<Sample> samples, const std::vector<std::string>& held_cells) {
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (auto& s : samples) {
    bool held = std::find(held_cells.begin(), held_cells.end(), s.provenance.cell) != held_cells.end();
    (held ? out.second : out.first).push_back(std::move(s));
  }
  return out;
}

// Per-slot (min, max) over every node of every training graph.
struct NormalizationSpec {
  FeatureLayout layout = FeatureLayout::DelayPower;
  std::vector<double> min;
  std::vector<double> max;

  bool operator==(const NormalizationSpec&) const = default;

  double apply(int slot, double x) const {
    const double span = max[slot] - min[slot];
    return span > 0.0 ? (x - min[slot]) / span : x;
  }
};

inline NormalizationSpec fit_normalization(const std::vector<const CellGraph*>& train) {
  if (train.empty()) config_error("fit_normalization: empty training set");
  NormalizationSpec spec;
  spec.layout = train.front()->layout;
  const int w = feature_width(spec.layout);
  spec.min.assign(w, std::numeric_limits<double>::infinity());
  spec.max.assign(w, -std::numeric_limits<double>::infinity());
  for (const auto* g : train) {
    if (g->layout != spec.layout) config_error("fit_normalization: mixed layouts");
    for (int i = 0; i < g->num_nodes(); ++i)
      for (int s = 0; s < w; ++s) {
        spec.min[s] = std::min(spec.min[s], g->feature(i, s));
        spec.max[s] = std::max(spec.max[s], g->feature(i, s));
      }
  }
  return spec;
}

inline NormalizationSpec fit_normalization(const std::vector<Sample>& train) {
  std::vector<const CellGraph*> g;
  g.reserve(train.size());
  for (const auto& s : train) g.push_back(&s.graph);
  return fit_normalization(g);
}

// Unclamped: test features may leave [0, 1].
inline CellGraph apply(const NormalizationSpec& spec, CellGraph g) {
  if (g.layout != spec.layout) data_error("normalization layout mismatch for " + g.cell);
  const int w = g.width();
  for (int i = 0; i < g.num_nodes(); ++i)
    for (int s = 0; s < w; ++s) g.feature(i, s) = spec.apply(s, g.feature(i, s));
  return g;
}

inline Sample apply(const NormalizationSpec& spec, Sample s) {
  s.graph = apply(spec, std::move(s.graph));
  return s;
}

// Binary record stream:
//   header: "CGDS" u32 version u32 task u32 layout u32 width u64 count
//   record: u32 nodes u32 edges f64[nodes*width] u32[2*edges] f64 target
//           u32 len char[len] provenance
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(Task task, const std::vector<Sample>& samples) {
  std::string out = "CGDS";
  const FeatureLayout layout = layout_for(task);
  binio::put<std::uint32_t>(out, kDatasetVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(task));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(layout));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(feature_width(layout)));
  binio::put<std::uint64_t>(out, samples.size());
  for (const auto& s : samples) {
    const auto& g = s.graph;
    if (g.layout != layout) data_error("serialize_dataset: layout mismatch");
    binio::put<std::uint32_t>(out, g.num_nodes());
    binio::put<std::uint32_t>(out, g.edges.size());
    for (double f : g.features) binio::put<double>(out, f);
    for (auto [a, b] : g.edges) {
      binio::put<std::uint32_t>(out, a);
      binio::put<std::uint32_t>(out, b);
    }
    binio::put<double>(out, g.target);
    auto prov = s.provenance.to_string();
    binio::put<std::uint32_t>(out, prov.size());
    out += prov;
  }
  return out;
}

struct DatasetFile {
  Task task;
  std::vector<Sample> samples;
};

inline DatasetFile deserialize_dataset(std::string_view bytes) {
  binio::Reader r(bytes, "dataset");
  if (r.bytes(4) != "CGDS") data_error("dataset: bad magic");
  if (r.get<std::uint32_t>() != kDatasetVersion) data_error("dataset: unsupported version");
  DatasetFile f;
  auto task = r.get<std::uint32_t>();
  if (task > 4) data_error("dataset: bad task id");
  f.task = static_cast<Task>(task);
  auto layout = static_cast<FeatureLayout>(r.get<std::uint32_t>());
  if (layout != layout_for(f.task)) data_error("dataset: layout does not match task");
  const auto width = r.get<std::uint32_t>();
  if (static_cast<int>(width) != feature_width(layout)) data_error("dataset: bad feature width");
  const auto count = r.get<std::uint64_t>();
  f.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s;
    auto& g = s.graph;
    g.layout = layout;
    const auto nodes = r.get<std::uint32_t>();
    const auto edges = r.get<std::uint32_t>();
    g.features.resize(static_cast<std::size_t>(nodes) * width);
    for (auto& x : g.features) x = r.get<double>();
    g.kinds.resize(nodes);
    for (std::uint32_t n = 0; n < nodes; ++n) {
      int code = (static_cast<int>(g.feature(n, 0)) << 2) | (static_cast<int>(g.feature(n, 1)) << 1) |
                 static_cast<int>(g.feature(n, 2));
      g.kinds[n] = static_cast<NodeKind>(code);
    }
    for (std::uint32_t e = 0; e < edges; ++e) {
      int a = static_cast<int>(r.get<std::uint32_t>());
      int b = static_cast<int>(r.get<std::uint32_t>());
      if (a >= static_cast<int>(nodes) || b >= static_cast<int>(nodes))
        data_error("dataset: edge index out of range");
      g.edges.emplace_back(a, b);
    }
    g.target = r.get<double>();
    auto len = r.get<std::uint32_t>();
    g.description = r.bytes(len);
    s.provenance = Provenance::parse(g.description);
    g.cell = s.provenance.cell;
    f.samples.push_back(std::move(s));
  }
  if (!r.done()) data_error("dataset: trailing bytes");
  return f;
}

inline std::uint64_t dataset_hash(Task task, const std::vector<Sample>& samples) {
  return fnv1a64(serialize_dataset(task, samples));
}

// One row per sample; node features flattened as n<i>_f<j>.
inline std::string export_csv(const std::vector<Sample>& samples) {
  int max_nodes = 0;
  int width = 0;
  for (const auto& s : samples) {
    max_nodes = std::max(max_nodes, s.graph.num_nodes());
    width = s.graph.width();
  }
  std::string out = "task,cell,target,provenance,nodes,edges";
  for (int n = 0; n < max_nodes; ++n)
    for (int f = 0; f < width; ++f) out += ",n" + std::to_string(n) + "_f" + std::to_string(f);
  out += "\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.17g", s.target());
    out += std::string(to_string(s.provenance.task)) + "," + s.provenance.cell + "," + buf + "," +
           s.provenance.to_string() + "," + std::to_string(s.graph.num_nodes()) + "," +
           std::to_string(s.graph.edges.size());
    for (int n = 0; n < max_nodes; ++n)
      for (int f = 0; f < width; ++f) {
        out += ",";
        if (n < s.graph.num_nodes()) {
          std::snprintf(buf, sizeof buf, "%.9g", s.graph.feature(n, f));
          out += buf;
        }
      }
    out += "\n";
  }
  return out;
}

}  // namespace cellgnn

#pragma once

// Characterized libraries (oracle truth or model prediction) on a slew x load
// grid, comparison metrics, and a Liberty-style text subset.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellgnn/dataset.hpp"
#include "cellgnn/error.hpp"
#include "cellgnn/gnn.hpp"
#include "cellgnn/netlist.hpp"
#include "cellgnn/oracle.hpp"
#include "cellgnn/technology.hpp"
#include "cellgnn/util.hpp"

namespace cellgnn {

struct NldmTable {
  std::vector<double> index_1;  // slew
  std::vector<double> index_2;  // load
  std::vector<double> values;   // row-major, index_1 x index_2

  double at(std::size_t i, std::size_t j) const { return values[i * index_2.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * index_2.size() + j]; }
  bool operator==(const NldmTable&) const = default;

  // Bilinear interpolation; queries outside the grid are clamped to it.
  double lookup(double slew, double load) const {
    auto locate = [](const std::vector<double>& idx, double x, std::size_t& k, double& t) {
      if (x <= idx.front()) {
        k = 0;
        t = 0.0;
      } else if (x >= idx.back()) {
        k = idx.size() - 2;
        t = 1.0;
      } else {
        k = static_cast<std::size_t>(std::upper_bound(idx.begin(), idx.end(), x) - idx.begin()) - 1;
        t = (x - idx[k]) / (idx[k + 1] - idx[k]);
      }
    };
    std::size_t i, j;
    double u, v;
    locate(index_1, slew, i, u);
    locate(index_2, load, j, v);
    const double a = at(i, j), b = at(i, j + 1), c = at(i + 1, j), d = at(i + 1, j + 1);
    return (1 - u) * ((1 - v) * a + v * b) + u * ((1 - v) * c + v * d);
  }
};

struct LibraryGrid {
  std::vector<double> slews;
  std::vector<double> loads;
  bool operator==(const LibraryGrid&) const = default;
};

inline LibraryGrid make_grid(Technology t, int n_slew = 4, int n_load = 4) {
  if (n_slew < 2 || n_load < 2) config_error("library grid must be at least 2x2");
  const auto& r = ranges(t);
  return {linspace(r.slew, n_slew), linspace(r.load, n_load)};
}

// One timing group: a pin flipping under one side assignment, both
// directions, each of which flips the output.
struct FlipArcTables {
  int pin = 0;
  InputVector side = 0;
  bool positive_unate = false;  // output follows the pin
  // Indexed by output direction: [0] output rises, [1] output falls.
  NldmTable delay[2];
  NldmTable out_slew[2];
  NldmTable energy[2];
  bool operator==(const FlipArcTables&) const = default;
};

// A pin flipping under one side assignment without moving the output.
struct StaticArcTables {
  int pin = 0;
  InputVector side = 0;
  NldmTable energy[2];  // [0] pin rises, [1] pin falls
  bool operator==(const StaticArcTables&) const = default;
};

struct CellEntry {
  std::string name;
  std::vector<std::string> inputs;
  std::string output;
  double area = 0.0;
  std::vector<double> leakage;   // per input state, nW
  std::vector<double> pin_caps;  // fF
  std::vector<FlipArcTables> flip;
  std::vector<StaticArcTables> statics;
  bool degenerate = false;
  bool operator==(const CellEntry&) const = default;

  int n_inputs() const { return static_cast<int>(inputs.size()); }
};

struct CharLibrary {
  std::string name;
  Corner corner;
  LibraryGrid grid;
  std::vector<CellEntry> cells;
  bool operator==(const CharLibrary&) const = default;

  const CellEntry* find(const std::string& cell) const {
    for (const auto& c : cells)
      if (c.name == cell) return &c;
    return nullptr;
  }
  const CellEntry& at(const std::string& cell) const {
    if (const auto* c = find(cell)) return *c;
    data_error("library " + name + " has no cell " + cell);
  }
};

// Input vector of a (pin, side) arc when the pin is at `pin_value`.
inline InputVector arc_vector(int n_inputs, int pin, InputVector side, int pin_value) {
  InputVector v = 0;
  int k = n_inputs - 2;
  for (int p = 0; p < n_inputs; ++p) {
    int bit;
    if (p == pin) {
      bit = pin_value;
    } else {
      bit = static_cast<int>((side >> k) & 1u);
      --k;
    }
    v = (v << 1) | static_cast<InputVector>(bit);
  }
  return v;
}

inline Arc make_arc(const CellEntry& c, int pin, InputVector side, Direction pin_dir,
                    bool flips) {
  Arc a;
  a.cell = c.name;
  a.pin = pin;
  a.direction = pin_dir;
  const InputVector lo = arc_vector(c.n_inputs(), pin, side, 0);
  const InputVector hi = arc_vector(c.n_inputs(), pin, side, 1);
  a.from = pin_dir == Direction::Rise ? lo : hi;
  a.to = pin_dir == Direction::Rise ? hi : lo;
  a.output_flips = flips;
  return a;
}

// Pin direction that produces the given output direction (0 rise, 1 fall).
inline Direction pin_direction(const FlipArcTables& t, int out_dir) {
  const bool out_rises = out_dir == 0;
  return out_rises == t.positive_unate ? Direction::Rise : Direction::Fall;
}

namespace detail {

inline NldmTable blank_table(const LibraryGrid& g) {
  return {g.slews, g.loads, std::vector<double>(g.slews.size() * g.loads.size(), 0.0)};
}

// Cell skeleton: arcs grouped per (pin, side) in enumeration order.
inline CellEntry skeleton(const CompiledCell& cc, const LibraryGrid& grid,
                          const SurrogateParams& params) {
  CellEntry e;
  const auto& nl = cc.netlist();
  e.name = nl.name;
  e.inputs = nl.inputs;
  e.output = nl.output;
  e.area = cell_area(nl, params);
  const int n = cc.n_inputs();
  const auto& tt = cc.truth_table();
  for (int pin = 0; pin < n; ++pin) {
    for (InputVector side = 0; side < (1u << (n - 1)); ++side) {
      const int y0 = tt(arc_vector(n, pin, side, 0));
      const int y1 = tt(arc_vector(n, pin, side, 1));
      if (y0 != y1) {
        FlipArcTables f;
        f.pin = pin;
        f.side = side;
        f.positive_unate = y1 == 1;
        for (int d = 0; d < 2; ++d)
          f.delay[d] = f.out_slew[d] = f.energy[d] = blank_table(grid);
        e.flip.push_back(f);
      } else {
        StaticArcTables s;
        s.pin = pin;
        s.side = side;
        s.energy[0] = s.energy[1] = blank_table(grid);
        e.statics.push_back(s);
      }
    }
  }
  e.leakage.assign(std::size_t{1} << n, 0.0);
  e.pin_caps.assign(n, 0.0);
  return e;
}

}  // namespace detail

inline std::string default_library_name(const Corner& c, const std::string& source) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s_%s_vdd%.4g_vth%.4g_%s%.4g", source.c_str(),
                std::string(to_string(c.technology)).c_str(), c.vdd, c.vth,
                c.technology == Technology::Silicon45 ? "t" : "cox", c.third);
  std::string s = buf;
  for (auto& ch : s)
    if (ch == '.' || ch == '-') ch = 'p';
  return s;
}

inline CharLibrary build_oracle_library(const CellCatalog& catalog, const Corner& corner,
                                        const LibraryGrid& grid, const SurrogateParams& params,
                                        int jobs = 1) {
  check_corner(corner);
  if (grid.slews.size() < 2 || grid.loads.size() < 2)
    config_error("library grid must be at least 2x2");
  if (catalog.cells.empty()) config_error("build_library: empty catalog");
  CharLibrary lib;
  lib.name = default_library_name(corner, "oracle");
  lib.corner = corner;
  lib.grid = grid;
  lib.cells.resize(catalog.cells.size());
  parallel_for(catalog.cells.size(), jobs, [&](std::size_t k) {
    CompiledCell cc(catalog.cells[k]);
    CellEntry e = detail::skeleton(cc, grid, params);
    for (auto& f : e.flip) {
      for (int d = 0; d < 2; ++d) {
        const Arc arc = make_arc(e, f.pin, f.side, pin_direction(f, d), true);
        for (std::size_t i = 0; i < grid.slews.size(); ++i)
          for (std::size_t j = 0; j < grid.loads.size(); ++j) {
            auto cp = characterize(cc, arc, corner, grid.slews[i], grid.loads[j], params);
            f.delay[d].at(i, j) = *cp.delay;
            f.out_slew[d].at(i, j) = *cp.out_slew;
            f.energy[d].at(i, j) = *cp.flip_energy;
            e.degenerate |= cp.degenerate;
          }
      }
    }
    for (auto& s : e.statics) {
      for (int d = 0; d < 2; ++d) {
        const Arc arc = make_arc(e, s.pin, s.side, d == 0 ? Direction::Rise : Direction::Fall,
                                 false);
        for (std::size_t i = 0; i < grid.slews.size(); ++i)
          for (std::size_t j = 0; j < grid.loads.size(); ++j) {
            auto cp = characterize(cc, arc, corner, grid.slews[i], grid.loads[j], params);
            s.energy[d].at(i, j) = *cp.non_flip_energy;
            e.degenerate |= cp.degenerate;
          }
      }
    }
    for (InputVector v = 0; v < e.leakage.size(); ++v)
      e.leakage[v] = leakage_power(cc, v, corner, params);
    for (int p = 0; p < e.n_inputs(); ++p) e.pin_caps[p] = pin_capacitance(cc, p, corner, params);
    e.degenerate |= detail::overdrive(corner) <= 0.0;
    lib.cells[k] = std::move(e);
  });
  return lib;
}

struct TaskModel {
  ModelParams<float> params;
  NormalizationSpec norm;
};

using ModelSet = std::map<Task, TaskModel>;

// Checkpoints carrying training state hold the last-epoch weights on top and
// the best-validation weights in the state; inference uses the latter.
inline TaskModel load_task_model(const std::string& bytes) {
  auto ck = deserialize_checkpoint(bytes);
  const auto& p = ck.state ? ck.state->best : ck.params;
  return {p.cast<float>(), ck.norm};
}

// Predicted library. There is no transition-time model among the five
// tasks, so output slew tables are copied from `slew_reference`, which must
// share the grid and cell coverage.
inline CharLibrary build_model_library(const CellCatalog& catalog, const Corner& corner,
                                       const LibraryGrid& grid, const SurrogateParams& params,
                                       const ModelSet& models, const CharLibrary& slew_reference,
                                       int jobs = 1) {
  check_corner(corner);
  if (grid.slews.size() < 2 || grid.loads.size() < 2)
    config_error("library grid must be at least 2x2");
  if (catalog.cells.empty()) config_error("build_library: empty catalog");
  for (Task t : kAllTasks) {
    auto it = models.find(t);
    if (it == models.end()) config_error(std::string("model library needs a ") + to_string(t) + " model");
    if (it->second.params.layout != layout_for(t) || it->second.norm.layout != layout_for(t))
      data_error(std::string("model for ") + to_string(t) + " has the wrong feature layout");
  }
  if (!(slew_reference.grid == grid)) data_error("slew reference library uses a different grid");
  CharLibrary lib;
  lib.name = default_library_name(corner, "model");
  lib.corner = corner;
  lib.grid = grid;
  lib.cells.resize(catalog.cells.size());
  const auto& m_delay = models.at(Task::Delay);
  const auto& m_flip = models.at(Task::FlipPower);
  const auto& m_static = models.at(Task::NonFlipPower);
  const auto& m_leak = models.at(Task::Leakage);
  const auto& m_cap = models.at(Task::Capacitance);
  parallel_for(catalog.cells.size(), jobs, [&](std::size_t k) {
    const auto& nl = catalog.cells[k];
    CompiledCell cc(nl);
    CellEntry e = detail::skeleton(cc, grid, params);
    const auto& ref = slew_reference.at(e.name);
    if (ref.flip.size() != e.flip.size()) data_error("slew reference arcs differ for " + e.name);
    const int n = e.n_inputs();
    const std::size_t ns = grid.slews.size(), nload = grid.loads.size();

    std::vector<CellGraph> flip_graphs, static_graphs;
    for (const auto& f : e.flip)
      for (int d = 0; d < 2; ++d) {
        const Arc arc = make_arc(e, f.pin, f.side, pin_direction(f, d), true);
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t j = 0; j < nload; ++j)
            flip_graphs.push_back(encode(nl, corner,
                                         Stimulus::for_arc(arc, n, grid.slews[i], grid.loads[j]),
                                         FeatureLayout::DelayPower));
      }
    for (const auto& s : e.statics)
      for (int d = 0; d < 2; ++d) {
        const Arc arc =
            make_arc(e, s.pin, s.side, d == 0 ? Direction::Rise : Direction::Fall, false);
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t j = 0; j < nload; ++j)
            static_graphs.push_back(encode(nl, corner,
                                           Stimulus::for_arc(arc, n, grid.slews[i], grid.loads[j]),
                                           FeatureLayout::DelayPower));
      }
    std::vector<CellGraph> leak_graphs, cap_graphs;
    for (InputVector v = 0; v < e.leakage.size(); ++v)
      leak_graphs.push_back(encode(nl, corner, Stimulus::for_state(v, n), FeatureLayout::Leakage));
    for (int p = 0; p < n; ++p)
      cap_graphs.push_back(encode(nl, corner, Stimulus::for_pin(p), FeatureLayout::Capacitance));

    const auto delay = predict_batch(m_delay.params, m_delay.norm, flip_graphs);
    const auto flip_e = predict_batch(m_flip.params, m_flip.norm, flip_graphs);
    const auto static_e = predict_batch(m_static.params, m_static.norm, static_graphs);
    const auto leak = predict_batch(m_leak.params, m_leak.norm, leak_graphs);
    const auto cap = predict_batch(m_cap.params, m_cap.norm, cap_graphs);

    std::size_t q = 0;
    for (std::size_t a = 0; a < e.flip.size(); ++a)
      for (int d = 0; d < 2; ++d) {
        e.flip[a].out_slew[d] = ref.flip[a].out_slew[d];
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t j = 0; j < nload; ++j, ++q) {
            e.flip[a].delay[d].at(i, j) = delay[q];
            e.flip[a].energy[d].at(i, j) = flip_e[q];
          }
      }
    q = 0;
    for (auto& s : e.statics)
      for (int d = 0; d < 2; ++d)
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t j = 0; j < nload; ++j, ++q) s.energy[d].at(i, j) = static_e[q];
    e.leakage = leak;
    e.pin_caps = cap;
    e.degenerate = detail::overdrive(corner) <= 0.0;
    lib.cells[k] = std::move(e);
  });
  return lib;
}

// ---- metrics ----------------------------------------------------------

struct Metric {
  std::size_t count = 0;
  double mape = 0.0;
  double rmspe = 0.0;
  std::optional<double> r2;  // undefined for a constant truth vector
};

inline Metric compute_metric(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) config_error("metrics: prediction/truth length mismatch");
  if (truth.empty()) config_error("metrics: empty input");
  Metric m;
  m.count = truth.size();
  double abs_sum = 0.0, sq_sum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!(truth[i] > 0.0)) data_error("metrics: truth values must be positive");
    const double rel = (pred[i] - truth[i]) / truth[i];
    abs_sum += std::abs(rel);
    sq_sum += rel * rel;
    mean += truth[i];
  }
  const double n = static_cast<double>(truth.size());
  mean /= n;
  m.mape = 100.0 * abs_sum / n;
  m.rmspe = 100.0 * std::sqrt(sq_sum / n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

struct MetricReport {
  std::map<Task, Metric> overall;
  std::map<Task, std::map<std::string, Metric>> per_cell;

  static std::string fmt(const Metric& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,", m.count, m.mape, m.rmspe);
    std::string s = buf;
    if (m.r2) {
      std::snprintf(buf, sizeof buf, "%.6g", *m.r2);
      s += buf;
    } else {
      s += "undefined";
    }
    return s;
  }

  std::string csv() const {
    std::string out = "task,cell,count,mape,rmspe,r2\n";
    for (const auto& [task, m] : overall) out += std::string(to_string(task)) + ",ALL," + fmt(m) + "\n";
    for (const auto& [task, cells] : per_cell)
      for (const auto& [cell, m] : cells)
        out += std::string(to_string(task)) + "," + cell + "," + fmt(m) + "\n";
    return out;
  }

  std::string table() const {
    std::string out = "task             count      MAPE%     RMSPE%         R2\n";
    char buf[160];
    for (const auto& [task, m] : overall) {
      std::snprintf(buf, sizeof buf, "%-14s %7zu %10.4f %10.4f ", to_string(task), m.count, m.mape,
                    m.rmspe);
      out += buf;
      if (m.r2) {
        std::snprintf(buf, sizeof buf, "%10.6f\n", *m.r2);
        out += buf;
      } else {
        out += " undefined\n";
      }
    }
    return out;
  }
};

// Flattened per-task values of a library, with the owning cell of each value.
struct LibraryValues {
  std::map<Task, std::vector<double>> values;
  std::map<Task, std::vector<std::string>> cells;
};

inline LibraryValues flatten(const CharLibrary& lib) {
  LibraryValues v;
  auto push = [&](Task t, const std::string& cell, double x) {
    v.values[t].push_back(x);
    v.cells[t].push_back(cell);
  };
  for (const auto& c : lib.cells) {
    for (const auto& f : c.flip)
      for (int d = 0; d < 2; ++d) {
        for (double x : f.delay[d].values) push(Task::Delay, c.name, x);
        for (double x : f.energy[d].values) push(Task::FlipPower, c.name, x);
      }
    for (const auto& s : c.statics)
      for (int d = 0; d < 2; ++d)
        for (double x : s.energy[d].values) push(Task::NonFlipPower, c.name, x);
    for (double x : c.leakage) push(Task::Leakage, c.name, x);
    for (double x : c.pin_caps) push(Task::Capacitance, c.name, x);
  }
  return v;
}

inline MetricReport compute_report(const std::map<Task, std::vector<double>>& pred,
                                   const std::map<Task, std::vector<double>>& truth,
                                   const std::map<Task, std::vector<std::string>>& cells) {
  MetricReport r;
  for (const auto& [task, t] : truth) {
    if (t.empty()) continue;
    const auto& p = pred.at(task);
    r.overall[task] = compute_metric(p, t);
    const auto& names = cells.at(task);
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < t.size(); ++i) {
      groups[names[i]].first.push_back(p[i]);
      groups[names[i]].second.push_back(t[i]);
    }
    for (const auto& [cell, g] : groups) r.per_cell[task][cell] = compute_metric(g.first, g.second);
  }
  return r;
}

inline MetricReport compare(const CharLibrary& pred, const CharLibrary& truth) {
  if (!(pred.grid == truth.grid) || pred.cells.size() != truth.cells.size())
    data_error("compare: libraries differ in grid or cell coverage");
  for (std::size_t i = 0; i < pred.cells.size(); ++i)
    if (pred.cells[i].name != truth.cells[i].name ||
        pred.cells[i].flip.size() != truth.cells[i].flip.size() ||
        pred.cells[i].statics.size() != truth.cells[i].statics.size())
      data_error("compare: libraries differ in cell " + truth.cells[i].name);
  auto p = flatten(pred);
  auto t = flatten(truth);
  return compute_report(p.values, t.values, t.cells);
}

// ---- Liberty subset ----------------------------------------------------

namespace liberty {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string num_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s;
}

// Boolean condition over the given pins, e.g. "A&!B". Empty for no pins.
inline std::string condition(const std::vector<std::string>& pins, InputVector bits) {
  std::string s;
  const int n = static_cast<int>(pins.size());
  for (int p = 0; p < n; ++p) {
    if (!s.empty()) s += "&";
    if (!((bits >> (n - 1 - p)) & 1u)) s += "!";
    s += pins[p];
  }
  return s;
}

inline std::vector<std::string> side_pins(const CellEntry& c, int pin) {
  std::vector<std::string> s;
  for (int p = 0; p < c.n_inputs(); ++p)
    if (p != pin) s.push_back(c.inputs[p]);
  return s;
}

inline std::string template_name(const LibraryGrid& g) {
  return "nldm_" + std::to_string(g.slews.size()) + "x" + std::to_string(g.loads.size());
}

}  // namespace liberty

inline std::string emit_liberty(const CharLibrary& lib) {
  using namespace liberty;
  if (lib.cells.empty()) config_error("emit_liberty: no cells");
  const bool silicon = lib.corner.technology == Technology::Silicon45;
  const std::string tmpl = template_name(lib.grid);
  std::string o;
  o += "library (" + lib.name + ") {\n";
  o += "  technology_name : \"" + std::string(to_string(lib.corner.technology)) + "\" ;\n";
  o += std::string("  time_unit : \"1") + (silicon ? "ps" : "ns") + "\" ;\n";
  o += "  voltage_unit : \"1V\" ;\n";
  o += "  leakage_power_unit : \"1nW\" ;\n";
  o += "  internal_energy_unit : \"1fJ\" ;\n";
  o += "  capacitive_load_unit (1, ff) ;\n";
  o += "  nom_voltage : " + num(lib.corner.vdd) + " ;\n";
  o += "  threshold_voltage : " + num(lib.corner.vth) + " ;\n";
  o += std::string(silicon ? "  nom_temperature : " : "  oxide_capacitance : ") +
       num(lib.corner.third) + " ;\n";
  o += "  lu_table_template (" + tmpl + ") {\n";
  o += "    variable_1 : input_net_transition ;\n";
  o += "    variable_2 : total_output_net_capacitance ;\n";
  o += "    index_1 (\"" + num_list(lib.grid.slews) + "\") ;\n";
  o += "    index_2 (\"" + num_list(lib.grid.loads) + "\") ;\n";
  o += "  }\n";

  auto table = [&](const std::string& indent, const char* kind, const NldmTable& t) {
    std::string s = indent + kind + " (" + tmpl + ") {\n";
    s += indent + "  values ( \\\n";
    const std::size_t n1 = t.index_1.size(), n2 = t.index_2.size();
    for (std::size_t i = 0; i < n1; ++i) {
      std::vector<double> row(t.values.begin() + i * n2, t.values.begin() + (i + 1) * n2);
      s += indent + "    \"" + num_list(row) + "\"" + (i + 1 < n1 ? ", \\\n" : " \\\n");
    }
    s += indent + "  ) ;\n";
    s += indent + "}\n";
    return s;
  };

  for (const auto& c : lib.cells) {
    o += "  cell (" + c.name + ") {\n";
    o += "    area : " + num(c.area) + " ;\n";
    for (InputVector v = 0; v < c.leakage.size(); ++v) {
      o += "    leakage_power () {\n";
      o += "      when : \"" + condition(c.inputs, v) + "\" ;\n";
      o += "      value : " + num(c.leakage[v]) + " ;\n";
      o += "    }\n";
    }
    for (int p = 0; p < c.n_inputs(); ++p) {
      o += "    pin (" + c.inputs[p] + ") {\n";
      o += "      direction : input ;\n";
      o += "      capacitance : " + num(c.pin_caps[p]) + " ;\n";
      for (const auto& s : c.statics) {
        if (s.pin != p) continue;
        o += "      internal_power () {\n";
        o += "        when : \"" + condition(side_pins(c, p), s.side) + "\" ;\n";
        o += table("        ", "rise_power", s.energy[0]);
        o += table("        ", "fall_power", s.energy[1]);
        o += "      }\n";
      }
      o += "    }\n";
    }
    o += "    pin (" + c.output + ") {\n";
    o += "      direction : output ;\n";
    for (const auto& f : c.flip) {
      o += "      timing () {\n";
      o += "        related_pin : \"" + c.inputs[f.pin] + "\" ;\n";
      o += "        when : \"" + condition(side_pins(c, f.pin), f.side) + "\" ;\n";
      o += std::string("        timing_sense : ") +
           (f.positive_unate ? "positive_unate" : "negative_unate") + " ;\n";
      o += table("        ", "cell_rise", f.delay[0]);
      o += table("        ", "rise_transition", f.out_slew[0]);
      o += table("        ", "cell_fall", f.delay[1]);
      o += table("        ", "fall_transition", f.out_slew[1]);
      o += "      }\n";
    }
    for (const auto& f : c.flip) {
      o += "      internal_power () {\n";
      o += "        related_pin : \"" + c.inputs[f.pin] + "\" ;\n";
      o += "        when : \"" + condition(side_pins(c, f.pin), f.side) + "\" ;\n";
      o += table("        ", "rise_power", f.energy[0]);
      o += table("        ", "fall_power", f.energy[1]);
      o += "      }\n";
    }
    o += "    }\n";
    o += "  }\n";
  }
  o += "}\n";
  return o;
}

namespace liberty {

struct Token {
  enum Kind { Ident, String, Punct, End } kind = End;
  std::string text;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  Token next() {
    skip();
    Token t;
    t.line = line_;
    t.col = col_;
    if (i_ >= s_.size()) return t;
    const char c = s_[i_];
    if (c == '"') {
      advance();
      std::string text;
      while (i_ < s_.size() && s_[i_] != '"') {
        if (s_[i_] == '\n') fail(t, "unterminated string");
        text += s_[i_];
        advance();
      }
      if (i_ >= s_.size()) fail(t, "unterminated string");
      advance();
      t.kind = Token::String;
      t.text = text;
      return t;
    }
    if (std::string_view("(){}:;,").find(c) != std::string_view::npos) {
      advance();
      t.kind = Token::Punct;
      t.text = std::string(1, c);
      return t;
    }
    auto ident_char = [](char ch) {
      return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.' || ch == '-' ||
             ch == '+' || ch == '!' || ch == '&';
    };
    if (!ident_char(c)) fail(t, std::string("unexpected character '") + c + "'");
    while (i_ < s_.size() && ident_char(s_[i_])) {
      t.text += s_[i_];
      advance();
    }
    t.kind = Token::Ident;
    return t;
  }

  [[noreturn]] static void fail(const Token& t, const std::string& msg) {
    data_error("liberty:" + std::to_string(t.line) + ":" + std::to_string(t.col) + ": " + msg);
  }

 private:
  void advance() {
    if (s_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skip() {
    for (;;) {
      while (i_ < s_.size() && (std::isspace(static_cast<unsigned char>(s_[i_])) || s_[i_] == '\\'))
        advance();
      if (i_ + 1 < s_.size() && s_[i_] == '/' && s_[i_ + 1] == '*') {
        const int line = line_, col = col_;
        advance();
        advance();
        while (i_ + 1 < s_.size() && !(s_[i_] == '*' && s_[i_ + 1] == '/')) advance();
        if (i_ + 1 >= s_.size()) {
          Token t;
          t.line = line;
          t.col = col;
          fail(t, "unterminated comment");
        }
        advance();
        advance();
        continue;
      }
      return;
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// Generic statement tree: groups `name (args) { ... }`, simple attributes
// `name : value ;` and complex attributes `name (args) ;`.
struct Node {
  std::string name;
  std::vector<std::string> args;
  std::string value;
  bool group = false;
  bool simple = false;
  std::vector<Node> children;
  int line = 0;
  int col = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view s) : lex_(s) { tok_ = lex_.next(); }

  Node parse_top() {
    Node n = statement();
    if (!n.group || n.name != "library") Lexer::fail(here(n), "expected library group");
    if (tok_.kind != Token::End) Lexer::fail(tok_, "trailing content after library");
    return n;
  }

 private:
  static Token here(const Node& n) {
    Token t;
    t.line = n.line;
    t.col = n.col;
    return t;
  }

  void expect(const char* p) {
    if (tok_.kind != Token::Punct || tok_.text != p) {
      if (tok_.kind == Token::End) Lexer::fail(tok_, "unexpected end of file");
      Lexer::fail(tok_, std::string("expected '") + p + "' near '" + tok_.text + "'");
    }
    tok_ = lex_.next();
  }

  bool at(const char* p) const { return tok_.kind == Token::Punct && tok_.text == p; }

  Node statement() {
    if (tok_.kind != Token::Ident) {
      if (tok_.kind == Token::End) Lexer::fail(tok_, "unexpected end of file");
      Lexer::fail(tok_, "expected a name near '" + tok_.text + "'");
    }
    Node n;
    n.name = tok_.text;
    n.line = tok_.line;
    n.col = tok_.col;
    tok_ = lex_.next();
    if (at(":")) {
      tok_ = lex_.next();
      if (tok_.kind != Token::Ident && tok_.kind != Token::String)
        Lexer::fail(tok_, "expected a value for " + n.name);
      n.value = tok_.text;
      n.simple = true;
      tok_ = lex_.next();
      expect(";");
      return n;
    }
    expect("(");
    while (!at(")")) {
      if (tok_.kind != Token::Ident && tok_.kind != Token::String)
        Lexer::fail(tok_, tok_.kind == Token::End ? "unexpected end of file"
                                                  : "bad argument near '" + tok_.text + "'");
      n.args.push_back(tok_.text);
      tok_ = lex_.next();
      if (at(",")) tok_ = lex_.next();
    }
    expect(")");
    if (at(";")) {
      tok_ = lex_.next();
      return n;
    }
    expect("{");
    n.group = true;
    while (!at("}")) {
      if (tok_.kind == Token::End) Lexer::fail(tok_, "unexpected end of file in " + n.name);
      n.children.push_back(statement());
    }
    expect("}");
    return n;
  }

  Lexer lex_;
  Token tok_;
};

inline Token where(const Node& n) {
  Token t;
  t.line = n.line;
  t.col = n.col;
  return t;
}

[[noreturn]] inline void unsupported(const Node& n) {
  Lexer::fail(where(n), "unsupported construct '" + n.name + "'");
}

inline double to_num(const Node& n, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v))
    Lexer::fail(where(n), "bad number '" + s + "' in " + n.name);
  return v;
}

inline std::vector<double> to_list(const Node& n, const std::string& s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t j = s.find(',', i);
    if (j == std::string::npos) j = s.size();
    std::string item = s.substr(i, j - i);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(to_num(n, item));
    i = j + 1;
  }
  return out;
}

// Parses a condition over `pins` back into a bit vector.
inline InputVector parse_condition(const Node& n, const std::string& s,
                                   const std::vector<std::string>& pins) {
  std::vector<std::string> terms;
  if (!s.empty()) {
    std::size_t i = 0;
    while (i <= s.size()) {
      std::size_t j = s.find('&', i);
      if (j == std::string::npos) j = s.size();
      terms.push_back(s.substr(i, j - i));
      i = j + 1;
    }
  }
  if (terms.size() != pins.size()) Lexer::fail(where(n), "condition '" + s + "' does not cover the pins");
  InputVector v = 0;
  for (std::size_t p = 0; p < pins.size(); ++p) {
    const bool neg = !terms[p].empty() && terms[p][0] == '!';
    if ((neg ? terms[p].substr(1) : terms[p]) != pins[p])
      Lexer::fail(where(n), "condition '" + s + "' does not match pin order");
    v = (v << 1) | (neg ? 0u : 1u);
  }
  return v;
}

}  // namespace liberty

inline CharLibrary parse_liberty(std::string_view text) {
  using namespace liberty;
  const Node top = Parser(text).parse_top();
  if (top.args.size() != 1) Lexer::fail(where(top), "library needs one name");
  CharLibrary lib;
  lib.name = top.args[0];
  std::optional<Technology> tech;
  std::optional<double> vdd, vth, third;
  std::string tmpl;
  bool have_grid = false;

  auto read_table = [&](const Node& n) {
    if (!n.group || n.args.size() != 1 || n.args[0] != tmpl)
      Lexer::fail(where(n), "table " + n.name + " must reference template " + tmpl);
    NldmTable t{lib.grid.slews, lib.grid.loads, {}};
    bool seen = false;
    for (const auto& v : n.children) {
      if (v.name != "values" || v.group || v.simple) unsupported(v);
      if (v.args.size() != lib.grid.slews.size())
        Lexer::fail(where(v), "values rows do not match index_1");
      for (const auto& row : v.args) {
        auto r = to_list(v, row);
        if (r.size() != lib.grid.loads.size())
          Lexer::fail(where(v), "values columns do not match index_2");
        t.values.insert(t.values.end(), r.begin(), r.end());
      }
      seen = true;
    }
    if (!seen) Lexer::fail(where(n), "table " + n.name + " has no values");
    return t;
  };

  for (const auto& n : top.children) {
    if (n.simple) {
      if (n.name == "technology_name") {
        tech = parse_technology(n.value);
      } else if (n.name == "time_unit" || n.name == "voltage_unit" ||
                 n.name == "leakage_power_unit" || n.name == "internal_energy_unit") {
        // Fixed by the technology; checked below.
      } else if (n.name == "nom_voltage") {
        vdd = to_num(n, n.value);
      } else if (n.name == "threshold_voltage") {
        vth = to_num(n, n.value);
      } else if (n.name == "nom_temperature" || n.name == "oxide_capacitance") {
        third = to_num(n, n.value);
      } else {
        unsupported(n);
      }
    } else if (!n.group) {
      if (n.name != "capacitive_load_unit") unsupported(n);
    } else if (n.name == "lu_table_template") {
      if (n.args.size() != 1) Lexer::fail(where(n), "template needs one name");
      tmpl = n.args[0];
      for (const auto& a : n.children) {
        if (a.simple && (a.name == "variable_1" || a.name == "variable_2")) continue;
        if (!a.simple && !a.group && a.args.size() == 1 && a.name == "index_1")
          lib.grid.slews = to_list(a, a.args[0]);
        else if (!a.simple && !a.group && a.args.size() == 1 && a.name == "index_2")
          lib.grid.loads = to_list(a, a.args[0]);
        else
          unsupported(a);
      }
      if (lib.grid.slews.size() < 2 || lib.grid.loads.size() < 2)
        Lexer::fail(where(n), "template needs index_1 and index_2 with >= 2 points");
      have_grid = true;
    } else if (n.name == "cell") {
      if (!have_grid) Lexer::fail(where(n), "cell before lu_table_template");
      if (n.args.size() != 1) Lexer::fail(where(n), "cell needs one name");
      CellEntry c;
      c.name = n.args[0];
      std::vector<std::pair<InputVector, double>> leak;
      std::vector<const Node*> output_pins;
      for (const auto& a : n.children) {
        if (a.simple && a.name == "area") {
          c.area = to_num(a, a.value);
        } else if (a.group && a.name == "leakage_power") {
          std::string when;
          std::optional<double> value;
          for (const auto& b : a.children) {
            if (b.simple && b.name == "when") when = b.value;
            else if (b.simple && b.name == "value") value = to_num(b, b.value);
            else unsupported(b);
          }
          if (!value) Lexer::fail(where(a), "leakage_power without value");
          leak.emplace_back(0, *value);
          leak.back().first = static_cast<InputVector>(leak.size() - 1);
          // Conditions are checked once the pin list is known.
          (void)when;
        } else if (a.group && a.name == "pin") {
          if (a.args.size() != 1) Lexer::fail(where(a), "pin needs one name");
          std::string dir;
          for (const auto& b : a.children)
            if (b.simple && b.name == "direction") dir = b.value;
          if (dir == "input") {
            c.inputs.push_back(a.args[0]);
          } else if (dir == "output") {
            if (!c.output.empty()) Lexer::fail(where(a), "cell has more than one output");
            c.output = a.args[0];
            output_pins.push_back(&a);
          } else {
            Lexer::fail(where(a), "pin " + a.args[0] + " needs direction input or output");
          }
        } else {
          unsupported(a);
        }
      }
      if (c.inputs.empty() || c.output.empty()) Lexer::fail(where(n), "cell " + c.name + " needs inputs and an output");
      // Second pass now that pin order is known.
      std::size_t leak_k = 0;
      c.pin_caps.assign(c.inputs.size(), 0.0);
      for (const auto& a : n.children) {
        if (a.group && a.name == "leakage_power") {
          for (const auto& b : a.children)
            if (b.name == "when" && parse_condition(b, b.value, c.inputs) != leak_k)
              Lexer::fail(where(b), "leakage states must appear in binary order");
          ++leak_k;
        }
        if (!(a.group && a.name == "pin")) continue;
        auto pin_it = std::find(c.inputs.begin(), c.inputs.end(), a.args[0]);
        const bool is_input = pin_it != c.inputs.end();
        const int pin = is_input ? static_cast<int>(pin_it - c.inputs.begin()) : -1;
        for (const auto& b : a.children) {
          if (b.simple && b.name == "direction") continue;
          if (is_input && b.simple && b.name == "capacitance") {
            c.pin_caps[pin] = to_num(b, b.value);
          } else if (is_input && b.group && b.name == "internal_power") {
            StaticArcTables s;
            s.pin = pin;
            bool r = false, f = false;
            for (const auto& t : b.children) {
              if (t.simple && t.name == "when")
                s.side = parse_condition(t, t.value, side_pins(c, pin));
              else if (t.group && t.name == "rise_power") s.energy[0] = read_table(t), r = true;
              else if (t.group && t.name == "fall_power") s.energy[1] = read_table(t), f = true;
              else unsupported(t);
            }
            if (!r || !f) Lexer::fail(where(b), "internal_power needs rise_power and fall_power");
            c.statics.push_back(std::move(s));
          } else if (!is_input && b.group && (b.name == "timing" || b.name == "internal_power")) {
            int related = -1;
            std::string when;
            const Node* when_node = nullptr;
            for (const auto& t : b.children)
              if (t.simple && t.name == "related_pin") {
                auto it = std::find(c.inputs.begin(), c.inputs.end(), t.value);
                if (it == c.inputs.end()) Lexer::fail(where(t), "unknown related_pin " + t.value);
                related = static_cast<int>(it - c.inputs.begin());
              } else if (t.simple && t.name == "when") {
                when = t.value;
                when_node = &t;
              }
            if (related < 0 || !when_node) Lexer::fail(where(b), b.name + " needs related_pin and when");
            const InputVector side = parse_condition(*when_node, when, side_pins(c, related));
            if (b.name == "timing") {
              FlipArcTables f;
              f.pin = related;
              f.side = side;
              int seen = 0;
              for (const auto& t : b.children) {
                if (t.simple && (t.name == "related_pin" || t.name == "when")) continue;
                if (t.simple && t.name == "timing_sense") {
                  if (t.value != "positive_unate" && t.value != "negative_unate")
                    Lexer::fail(where(t), "unsupported timing_sense " + t.value);
                  f.positive_unate = t.value == "positive_unate";
                } else if (t.group && t.name == "cell_rise") f.delay[0] = read_table(t), seen |= 1;
                else if (t.group && t.name == "rise_transition") f.out_slew[0] = read_table(t), seen |= 2;
                else if (t.group && t.name == "cell_fall") f.delay[1] = read_table(t), seen |= 4;
                else if (t.group && t.name == "fall_transition") f.out_slew[1] = read_table(t), seen |= 8;
                else unsupported(t);
              }
              if (seen != 15) Lexer::fail(where(b), "timing group needs rise/fall delay and transition tables");
              c.flip.push_back(std::move(f));
            } else {
              auto it = std::find_if(c.flip.begin(), c.flip.end(), [&](const FlipArcTables& f) {
                return f.pin == related && f.side == side;
              });
              if (it == c.flip.end()) Lexer::fail(where(b), "internal_power without matching timing group");
              int seen = 0;
              for (const auto& t : b.children) {
                if (t.simple && (t.name == "related_pin" || t.name == "when")) continue;
                if (t.group && t.name == "rise_power") it->energy[0] = read_table(t), seen |= 1;
                else if (t.group && t.name == "fall_power") it->energy[1] = read_table(t), seen |= 2;
                else unsupported(t);
              }
              if (seen != 3) Lexer::fail(where(b), "internal_power needs rise_power and fall_power");
            }
          } else {
            unsupported(b);
          }
        }
      }
      if (leak.size() != (std::size_t{1} << c.inputs.size()))
        Lexer::fail(where(n), "cell " + c.name + " needs one leakage_power per input state");
      for (const auto& [v, x] : leak) c.leakage.push_back(x);
      lib.cells.push_back(std::move(c));
    } else {
      unsupported(n);
    }
  }
  if (!tech || !vdd || !vth || !third) Lexer::fail(where(top), "library header is incomplete");
  if (!have_grid) Lexer::fail(where(top), "library has no lu_table_template");
  if (lib.cells.empty()) Lexer::fail(where(top), "no cells");
  lib.corner = {*tech, *vdd, *vth, *third};
  return lib;
}

}  // namespace cellgnn

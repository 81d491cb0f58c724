#pragma once

// Gate-level evaluation: netlist text format, longest-path timing over NLDM
// tables, activity-weighted power, greedy drive sizing and the bundled
// benchmark generators.
//
// Gate-list format, one statement per line, '#' starts a comment:
//   name <design>
//   period <t>                    clock period in the technology time unit
//   inputs <net...>               may repeat
//   outputs <net...>              may repeat
//   slew default|<net> <t>        primary-input transition
//   load default|<net> <fF>       primary-output load
//   activity default|<net> <a>    toggle probability per cycle, 0..1
//   gate <inst> <cell> <out> <in...>   inputs in cell pin order

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cellgnn/error.hpp"
#include "cellgnn/libgen.hpp"
#include "cellgnn/netlist.hpp"
#include "cellgnn/oracle.hpp"
#include "cellgnn/technology.hpp"
#include "cellgnn/util.hpp"

namespace cellgnn {

struct Gate {
  std::string inst;
  std::string cell;
  std::string out;
  std::vector<std::string> ins;
  bool operator==(const Gate&) const = default;
};

struct GateNetlist {
  std::string name = "design";
  double period = 0.0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double default_slew = 0.0;
  double default_load = 0.0;
  double default_activity = 0.0;
  std::map<std::string, double> slew;
  std::map<std::string, double> load;
  std::map<std::string, double> activity;
  std::vector<Gate> gates;  // topological order after parsing
  bool operator==(const GateNetlist&) const = default;

  double pi_slew(const std::string& net) const {
    auto it = slew.find(net);
    return it == slew.end() ? default_slew : it->second;
  }
  double po_load(const std::string& net) const {
    auto it = load.find(net);
    return it == load.end() ? default_load : it->second;
  }
  double net_activity(const std::string& net) const {
    auto it = activity.find(net);
    return it == activity.end() ? default_activity : it->second;
  }
  const Gate& gate(const std::string& inst) const {
    for (const auto& g : gates)
      if (g.inst == inst) return g;
    data_error("no gate " + inst);
  }
};

// Cell name helpers (NAND2X4 -> NAND2, 4).
inline std::string cell_family(const std::string& cell) {
  CellNetlist n;
  n.name = cell;
  return n.family();
}

inline int cell_drive(const std::string& cell) {
  CellNetlist n;
  n.name = cell;
  return n.drive();
}

namespace detail {

[[noreturn]] inline void gate_fail(int line, const std::string& msg) {
  data_error("gatelist:" + std::to_string(line) + ": " + msg);
}

inline double gate_num(int line, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
    gate_fail(line, "bad number '" + s + "'");
  return v;
}

}  // namespace detail

// Checks structure and puts gates in topological order (stable: among ready
// gates the earliest listed goes first).
inline void validate_gatelist(GateNetlist& n) {
  if (n.gates.empty()) data_error("gatelist " + n.name + ": no gates");
  if (n.outputs.empty()) data_error("gatelist " + n.name + ": no outputs");
  if (!(n.period > 0.0)) data_error("gatelist " + n.name + ": period must be positive");
  auto check_activity = [&](const std::string& what, double a) {
    if (!(a >= 0.0 && a <= 1.0)) data_error("gatelist " + n.name + ": activity of " + what + " outside [0,1]");
  };
  check_activity("default", n.default_activity);
  for (const auto& [net, a] : n.activity) check_activity(net, a);
  if (n.default_slew < 0.0 || n.default_load < 0.0) data_error("gatelist " + n.name + ": negative slew or load");

  std::unordered_map<std::string, int> driver;  // net -> gate index, -1 for PI
  for (const auto& pi : n.inputs)
    if (!driver.emplace(pi, -1).second) data_error("net " + pi + " declared as input twice");
  std::set<std::string> names;
  for (std::size_t i = 0; i < n.gates.size(); ++i) {
    const auto& g = n.gates[i];
    if (!names.insert(g.inst).second) data_error("duplicate instance " + g.inst);
    if (g.ins.empty()) data_error("gate " + g.inst + " has no inputs");
    auto [it, fresh] = driver.emplace(g.out, static_cast<int>(i));
    if (!fresh)
      data_error("net " + g.out + " has multiple drivers (" +
                 (it->second < 0 ? std::string("primary input") : n.gates[it->second].inst) + ", " +
                 g.inst + ")");
  }
  for (const auto& g : n.gates)
    for (const auto& in : g.ins)
      if (!driver.count(in)) data_error("net " + in + " (input of " + g.inst + ") has no driver");
  for (const auto& po : n.outputs)
    if (!driver.count(po)) data_error("output " + po + " has no driver");

  const std::size_t m = n.gates.size();
  std::vector<int> pending(m, 0);
  std::vector<std::vector<int>> fanout(m);
  for (std::size_t i = 0; i < m; ++i)
    for (const auto& in : n.gates[i].ins) {
      const int d = driver.at(in);
      if (d >= 0) {
        ++pending[i];
        fanout[d].push_back(static_cast<int>(i));
      }
    }
  std::set<int> ready;
  for (std::size_t i = 0; i < m; ++i)
    if (pending[i] == 0) ready.insert(static_cast<int>(i));
  std::vector<int> order;
  while (!ready.empty()) {
    const int i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (int j : fanout[i])
      if (--pending[j] == 0) ready.insert(j);
  }
  if (order.size() != m) {
    // Walk back along unresolved drivers until a gate repeats.
    int cur = -1;
    for (std::size_t i = 0; i < m; ++i)
      if (pending[i] > 0) {
        cur = static_cast<int>(i);
        break;
      }
    std::vector<int> path;
    std::map<int, std::size_t> seen;
    while (!seen.count(cur)) {
      seen[cur] = path.size();
      path.push_back(cur);
      for (const auto& in : n.gates[cur].ins) {
        const int d = driver.at(in);
        if (d >= 0 && pending[d] > 0) {
          cur = d;
          break;
        }
      }
    }
    std::string cycle;
    for (std::size_t k = path.size(); k-- > seen[cur];) cycle += n.gates[path[k]].inst + " -> ";
    cycle += n.gates[cur].inst;
    data_error("combinational cycle detected: " + cycle);
  }
  std::vector<Gate> sorted;
  sorted.reserve(m);
  for (int i : order) sorted.push_back(n.gates[i]);
  n.gates = std::move(sorted);
}

inline GateNetlist parse_gatelist(std::string_view text) {
  GateNetlist n;
  n.name.clear();
  bool have_period = false;
  std::istringstream is{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    auto tok = detail::split_ws(raw);
    if (tok.empty()) continue;
    const auto& kw = tok[0];
    auto need = [&](std::size_t k) {
      if (tok.size() != k) detail::gate_fail(line, "'" + kw + "' expects " + std::to_string(k - 1) + " fields");
    };
    if (kw == "name") {
      need(2);
      n.name = tok[1];
    } else if (kw == "period") {
      need(2);
      n.period = detail::gate_num(line, tok[1]);
      have_period = true;
    } else if (kw == "inputs" || kw == "outputs") {
      auto& dst = kw == "inputs" ? n.inputs : n.outputs;
      dst.insert(dst.end(), tok.begin() + 1, tok.end());
    } else if (kw == "slew" || kw == "load" || kw == "activity") {
      need(3);
      const double v = detail::gate_num(line, tok[2]);
      double& def = kw == "slew" ? n.default_slew : kw == "load" ? n.default_load : n.default_activity;
      auto& per = kw == "slew" ? n.slew : kw == "load" ? n.load : n.activity;
      if (tok[1] == "default") def = v;
      else per[tok[1]] = v;
    } else if (kw == "gate") {
      if (tok.size() < 5) detail::gate_fail(line, "'gate' expects <inst> <cell> <out> <in...>");
      n.gates.push_back(Gate{tok[1], tok[2], tok[3], std::vector<std::string>(tok.begin() + 4, tok.end())});
    } else {
      detail::gate_fail(line, "unknown statement '" + kw + "'");
    }
  }
  if (n.name.empty()) n.name = "design";
  if (!have_period) data_error("gatelist " + n.name + ": missing period");
  validate_gatelist(n);
  return n;
}

inline std::string emit_gatelist(const GateNetlist& n) {
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  std::string o = "name " + n.name + "\nperiod " + num(n.period) + "\ninputs";
  for (const auto& s : n.inputs) o += " " + s;
  o += "\noutputs";
  for (const auto& s : n.outputs) o += " " + s;
  o += "\nslew default " + num(n.default_slew) + "\n";
  for (const auto& [k, v] : n.slew) o += "slew " + k + " " + num(v) + "\n";
  o += "load default " + num(n.default_load) + "\n";
  for (const auto& [k, v] : n.load) o += "load " + k + " " + num(v) + "\n";
  o += "activity default " + num(n.default_activity) + "\n";
  for (const auto& [k, v] : n.activity) o += "activity " + k + " " + num(v) + "\n";
  for (const auto& g : n.gates) {
    o += "gate " + g.inst + " " + g.cell + " " + g.out;
    for (const auto& in : g.ins) o += " " + in;
    o += "\n";
  }
  return o;
}

// Every cell exists with a matching pin count.
inline void check_coverage(const GateNetlist& n, const CharLibrary& lib) {
  for (const auto& g : n.gates) {
    const auto* c = lib.find(g.cell);
    if (!c) data_error("unknown cell " + g.cell + " (gate " + g.inst + ") in library " + lib.name);
    if (c->n_inputs() != static_cast<int>(g.ins.size()))
      data_error("gate " + g.inst + ": cell " + g.cell + " has " + std::to_string(c->n_inputs()) +
                 " inputs, netlist gives " + std::to_string(g.ins.size()));
  }
}

inline void check_coverage(const GateNetlist& n, const CellCatalog& cat) {
  for (const auto& g : n.gates) {
    const auto* c = cat.find(g.cell);
    if (!c) data_error("unknown cell " + g.cell + " (gate " + g.inst + ")");
    if (c->inputs.size() != g.ins.size())
      data_error("gate " + g.inst + ": pin count mismatch for " + g.cell);
  }
}

// Logic value of every net for one primary-input assignment.
inline std::map<std::string, int> simulate(const GateNetlist& n, const CellCatalog& cat,
                                           const std::map<std::string, int>& pi) {
  check_coverage(n, cat);
  std::map<std::string, TruthTable> tables;
  std::map<std::string, int> v;
  for (const auto& in : n.inputs) {
    auto it = pi.find(in);
    if (it == pi.end()) config_error("simulate: no value for input " + in);
    v[in] = it->second ? 1 : 0;
  }
  for (const auto& g : n.gates) {
    auto it = tables.find(g.cell);
    if (it == tables.end()) it = tables.emplace(g.cell, boolean_function(cat.at(g.cell))).first;
    InputVector x = 0;
    for (const auto& in : g.ins) x = (x << 1) | static_cast<InputVector>(v.at(in));
    v[g.out] = it->second(x);
  }
  return v;
}

// ---- timing -------------------------------------------------------------

struct GateTiming {
  std::string inst;
  std::string cell;
  double load = 0.0;     // fF on the output net
  double arrival = 0.0;  // at the output
  double slew = 0.0;     // at the output
  int worst_pin = -1;
};

struct TimingReport {
  double period = 0.0;
  double max_arrival = 0.0;
  double wns = 0.0;
  std::vector<GateTiming> gates;      // netlist (topological) order
  std::vector<std::string> critical;  // instances, input side first
  std::map<std::string, double> net_arrival;
  std::map<std::string, double> net_slew;

  std::string csv() const {
    std::string o = "inst,cell,load,arrival,slew,worst_pin\n";
    char buf[256];
    for (const auto& g : gates) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%d\n", g.inst.c_str(), g.cell.c_str(),
                    g.load, g.arrival, g.slew, g.worst_pin);
      o += buf;
    }
    return o;
  }

  std::string table() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "period %.6g  max arrival %.6g  WNS %.6g\ncritical path:", period,
                  max_arrival, wns);
    std::string o = buf;
    for (const auto& c : critical) o += " " + c;
    return o + "\n";
  }
};

// Delay and output slew candidates of one input pin of one gate.
using ArcEval = std::function<void(std::size_t gate, int pin, double slew, double load,
                                   const std::function<void(double, double)>& emit)>;
using PinCap = std::function<double(std::size_t gate, int pin)>;

inline TimingReport timing_with(const GateNetlist& n, const PinCap& pin_cap, const ArcEval& eval) {
  TimingReport r;
  r.period = n.period;
  std::unordered_map<std::string, double> load;
  for (std::size_t i = 0; i < n.gates.size(); ++i)
    for (std::size_t p = 0; p < n.gates[i].ins.size(); ++p)
      load[n.gates[i].ins[p]] += pin_cap(i, static_cast<int>(p));
  for (const auto& po : n.outputs) load[po] += n.po_load(po);

  std::unordered_map<std::string, double> arr, slew;
  std::unordered_map<std::string, int> driver;
  for (const auto& pi : n.inputs) {
    arr[pi] = 0.0;
    slew[pi] = n.pi_slew(pi);
  }
  r.gates.resize(n.gates.size());
  for (std::size_t i = 0; i < n.gates.size(); ++i) {
    const auto& g = n.gates[i];
    auto& gt = r.gates[i];
    gt.inst = g.inst;
    gt.cell = g.cell;
    gt.load = load[g.out];
    double best = -std::numeric_limits<double>::infinity(), best_slew = 0.0;
    bool any = false;
    for (std::size_t p = 0; p < g.ins.size(); ++p) {
      const double a_in = arr.at(g.ins[p]);
      eval(i, static_cast<int>(p), slew.at(g.ins[p]), gt.load, [&](double d, double s) {
        any = true;
        const double a = a_in + d;
        // Equal arrivals keep the larger slew so the result is order-free.
        if (a > best || (a == best && s > best_slew)) {
          best = a;
          best_slew = s;
          gt.worst_pin = static_cast<int>(p);
        }
      });
    }
    if (!any) data_error("missing arc: cell " + g.cell + " (gate " + g.inst + ") has no timing arcs");
    gt.arrival = std::max(0.0, best);
    gt.slew = best_slew;
    arr[g.out] = gt.arrival;
    slew[g.out] = gt.slew;
    driver[g.out] = static_cast<int>(i);
  }
  std::string worst_po;
  r.max_arrival = 0.0;
  for (const auto& po : n.outputs)
    if (worst_po.empty() || arr.at(po) > r.max_arrival) {
      worst_po = po;
      r.max_arrival = arr.at(po);
    }
  r.wns = n.period - r.max_arrival;
  for (std::string net = worst_po; driver.count(net);) {
    const int gi = driver.at(net);
    r.critical.push_back(n.gates[gi].inst);
    net = n.gates[gi].ins[r.gates[gi].worst_pin];
  }
  std::reverse(r.critical.begin(), r.critical.end());
  for (const auto& [k, v] : arr) r.net_arrival[k] = v;
  for (const auto& [k, v] : slew) r.net_slew[k] = v;
  return r;
}

inline TimingReport timing(const GateNetlist& n, const CharLibrary& lib) {
  check_coverage(n, lib);
  std::vector<const CellEntry*> cells;
  for (const auto& g : n.gates) cells.push_back(&lib.at(g.cell));
  return timing_with(
      n, [&](std::size_t i, int p) { return cells[i]->pin_caps[p]; },
      [&](std::size_t i, int p, double s, double l, const std::function<void(double, double)>& emit) {
        for (const auto& f : cells[i]->flip)
          if (f.pin == p)
            for (int d = 0; d < 2; ++d) emit(f.delay[d].lookup(s, l), f.out_slew[d].lookup(s, l));
      });
}

// Same analysis with each arc evaluated by the oracle at the exact
// operating point instead of a table lookup.
inline TimingReport timing_oracle(const GateNetlist& n, const CellCatalog& cat, const Corner& corner,
                                  const SurrogateParams& params) {
  check_coverage(n, cat);
  check_corner(corner);
  std::map<std::string, CompiledCell> compiled;
  std::map<std::string, std::vector<Arc>> arcs;
  for (const auto& g : n.gates)
    if (!compiled.count(g.cell)) {
      compiled.emplace(g.cell, CompiledCell(cat.at(g.cell)));
      arcs[g.cell] = enumerate_arcs(compiled.at(g.cell));
    }
  return timing_with(
      n,
      [&](std::size_t i, int p) {
        return pin_capacitance(compiled.at(n.gates[i].cell), p, corner, params);
      },
      [&](std::size_t i, int p, double s, double l, const std::function<void(double, double)>& emit) {
        const auto& cell = n.gates[i].cell;
        for (const auto& a : arcs.at(cell))
          if (a.pin == p && a.output_flips) {
            auto cp = characterize(compiled.at(cell), a, corner, s, l, params);
            emit(*cp.delay, *cp.out_slew);
          }
      });
}

// ---- power --------------------------------------------------------------

struct GatePower {
  std::string inst;
  double leakage = 0.0;  // nW
  double dynamic = 0.0;  // uW
};

struct PowerReport {
  double frequency = 0.0;      // Hz
  double leakage_total = 0.0;  // nW
  double dynamic_total = 0.0;  // uW
  std::vector<GatePower> gates;

  double total_uw() const { return leakage_total * 1e-3 + dynamic_total; }

  std::string csv() const {
    std::string o = "inst,leakage_nw,dynamic_uw\n";
    char buf[256];
    for (const auto& g : gates) {
      std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g\n", g.inst.c_str(), g.leakage, g.dynamic);
      o += buf;
    }
    return o;
  }
};

// Energies are in fJ, so f[Hz] * E[fJ] * 1e-9 is in uW.
inline PowerReport power(const GateNetlist& n, const CharLibrary& lib, double frequency,
                         const TimingReport* timing_in = nullptr) {
  if (!(frequency >= 0.0) || !std::isfinite(frequency)) config_error("power: frequency must be >= 0");
  check_coverage(n, lib);
  TimingReport local;
  if (!timing_in) local = timing(n, lib);
  const TimingReport& t = timing_in ? *timing_in : local;
  PowerReport r;
  r.frequency = frequency;
  for (std::size_t i = 0; i < n.gates.size(); ++i) {
    const auto& g = n.gates[i];
    const auto& c = lib.at(g.cell);
    GatePower gp;
    gp.inst = g.inst;
    for (double x : c.leakage) gp.leakage += x;
    gp.leakage /= static_cast<double>(c.leakage.size());
    const double load = t.gates[i].load;
    const double a_out = n.net_activity(g.out);
    double e_flip = 0.0;
    int n_flip = 0;
    for (const auto& f : c.flip)
      for (int d = 0; d < 2; ++d) {
        e_flip += f.energy[d].lookup(t.net_slew.at(g.ins[f.pin]), load);
        ++n_flip;
      }
    double e = n_flip ? a_out * e_flip / n_flip : 0.0;
    for (std::size_t p = 0; p < g.ins.size(); ++p) {
      double e_static = 0.0;
      int n_static = 0;
      const double s = t.net_slew.at(g.ins[p]);
      for (const auto& st : c.statics)
        if (st.pin == static_cast<int>(p))
          for (int d = 0; d < 2; ++d) {
            e_static += st.energy[d].lookup(s, load);
            ++n_static;
          }
      if (n_static) e += n.net_activity(g.ins[p]) * (1.0 - a_out) * e_static / n_static;
    }
    gp.dynamic = frequency * e * 1e-9;
    r.leakage_total += gp.leakage;
    r.dynamic_total += gp.dynamic;
    r.gates.push_back(gp);
  }
  return r;
}

// ---- library comparison ------------------------------------------------------

struct SystemDelta {
  std::string design;
  double period = 0.0;
  double wns_truth = 0.0, wns_pred = 0.0;
  double leakage_truth = 0.0, leakage_pred = 0.0;
  double dynamic_truth = 0.0, dynamic_pred = 0.0;

  double abs_dwns() const { return std::abs(wns_pred - wns_truth); }
  double dwns_pct_period() const { return 100.0 * abs_dwns() / period; }
  static double pct(double pred, double truth) {
    if (truth == 0.0) return pred == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return 100.0 * std::abs(pred - truth) / std::abs(truth);
  }
  double leakage_err() const { return pct(leakage_pred, leakage_truth); }
  double dynamic_err() const { return pct(dynamic_pred, dynamic_truth); }

  static std::string csv_header() {
    return "design,period,wns_truth,wns_pred,abs_dwns,dwns_pct_period,leakage_truth_nw,"
           "leakage_pred_nw,leakage_err_pct,dynamic_truth_uw,dynamic_pred_uw,dynamic_err_pct\n";
  }
  std::string csv_row() const {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.6g,%.9g,%.9g,%.6g,%.9g,%.9g,%.6g\n",
                  design.c_str(), period, wns_truth, wns_pred, abs_dwns(), dwns_pct_period(),
                  leakage_truth, leakage_pred, leakage_err(), dynamic_truth, dynamic_pred,
                  dynamic_err());
    return buf;
  }
};

inline SystemDelta compare_libraries(const GateNetlist& n, const CharLibrary& truth,
                                     const CharLibrary& pred, double frequency) {
  check_coverage(n, truth);
  check_coverage(n, pred);
  for (const auto& g : n.gates) {
    const auto& a = truth.at(g.cell);
    const auto& b = pred.at(g.cell);
    if (a.flip.size() != b.flip.size() || a.statics.size() != b.statics.size() ||
        a.leakage.size() != b.leakage.size())
      data_error("library coverage mismatch for cell " + g.cell);
  }
  SystemDelta d;
  d.design = n.name;
  d.period = n.period;
  const auto tt = timing(n, truth);
  const auto tp = timing(n, pred);
  const auto pt = power(n, truth, frequency, &tt);
  const auto pp = power(n, pred, frequency, &tp);
  d.wns_truth = tt.wns;
  d.wns_pred = tp.wns;
  d.leakage_truth = pt.leakage_total;
  d.leakage_pred = pp.leakage_total;
  d.dynamic_truth = pt.dynamic_total;
  d.dynamic_pred = pp.dynamic_total;
  return d;
}

// ---- sizing -------------------------------------------------------------------

inline double ppa_improvement(double area_origin, double power_origin, double area_new,
                              double power_new) {
  if (!(area_origin > 0.0) || !(power_origin > 0.0))
    config_error("ppa_improvement: origin area and power must be positive");
  return (1.0 - area_new / area_origin + 1.0 - power_new / power_origin) * 100.0;
}

inline double total_area(const GateNetlist& n, const CharLibrary& lib) {
  double a = 0.0;
  for (const auto& g : n.gates) a += lib.at(g.cell).area;
  return a;
}

struct SizingResult {
  GateNetlist netlist;  // sized copy
  std::map<std::string, std::string> chosen;  // inst -> cell
  double area_before = 0.0, area_after = 0.0;
  double power_before = 0.0, power_after = 0.0;  // uW, leakage + dynamic
  double wns_before = 0.0, wns_after = 0.0;
  bool timing_met = false;
  int upsizes = 0, downsizes = 0;

  double ppa_impro() const { return ppa_improvement(area_before, power_before, area_after, power_after); }
};

// Cells of the same family ordered by drive.
inline std::map<std::string, std::vector<std::string>> drive_variants(const CharLibrary& lib) {
  std::map<std::string, std::vector<std::string>> v;
  for (const auto& c : lib.cells) v[cell_family(c.name)].push_back(c.name);
  for (auto& [f, names] : v)
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return cell_drive(a) < cell_drive(b);
    });
  return v;
}

// Greedy sizing starting from the netlist's current cells. Power is
// evaluated at 1/period with `seconds_per_unit` converting the period.
inline SizingResult size_gates(const GateNetlist& start, const CharLibrary& lib,
                               double seconds_per_unit) {
  check_coverage(start, lib);
  const auto variants = drive_variants(lib);
  const double freq = 1.0 / (start.period * seconds_per_unit);
  GateNetlist cur = start;
  auto eval = [&](const GateNetlist& n, double& wns, double& area, double& pw) {
    const auto t = timing(n, lib);
    wns = t.wns;
    area = total_area(n, lib);
    pw = power(n, lib, freq, &t).total_uw();
    return t;
  };
  SizingResult r;
  double wns, area, pw;
  auto t = eval(cur, wns, area, pw);
  r.wns_before = wns;
  r.area_before = area;
  r.power_before = pw;

  // Phase 1: upsize critical-path gates while timing fails.
  while (wns < 0.0) {
    double best_gain = 0.0, best_wns = wns, best_area = area, best_pw = pw;
    std::string best_inst, best_cell;
    std::vector<std::string> path = t.critical;
    std::sort(path.begin(), path.end());
    for (const auto& inst : path) {
      std::size_t gi = 0;
      while (cur.gates[gi].inst != inst) ++gi;
      const std::string old = cur.gates[gi].cell;
      const auto& vs = variants.at(cell_family(old));
      for (const auto& cand : vs) {
        if (cell_drive(cand) <= cell_drive(old)) continue;
        cur.gates[gi].cell = cand;
        double w, a, p;
        eval(cur, w, a, p);
        cur.gates[gi].cell = old;
        const double d_area = a - area;
        if (!(w > wns) || !(d_area > 0.0)) continue;
        const double gain = (w - wns) / d_area;
        if (gain > best_gain) {
          best_gain = gain;
          best_inst = inst;
          best_cell = cand;
          best_wns = w;
          best_area = a;
          best_pw = p;
        }
      }
    }
    if (best_inst.empty()) break;  // no move improves WNS
    for (auto& g : cur.gates)
      if (g.inst == best_inst) g.cell = best_cell;
    wns = best_wns;
    area = best_area;
    pw = best_pw;
    t = timing(cur, lib);
    ++r.upsizes;
  }

  // Phase 2: recover area and power while WNS stays non-negative.
  if (wns >= 0.0) {
    for (;;) {
      double best_rec = 0.0, best_wns = wns, best_area = area, best_pw = pw;
      std::string best_inst, best_cell;
      std::vector<std::size_t> order(cur.gates.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return cur.gates[a].inst < cur.gates[b].inst; });
      for (std::size_t gi : order) {
        const std::string old = cur.gates[gi].cell;
        for (const auto& cand : variants.at(cell_family(old))) {
          if (cell_drive(cand) >= cell_drive(old)) continue;
          cur.gates[gi].cell = cand;
          double w, a, p;
          eval(cur, w, a, p);
          cur.gates[gi].cell = old;
          if (w < 0.0) continue;
          const double rec = (area - a) / area + (pw - p) / pw;
          if (rec > best_rec) {
            best_rec = rec;
            best_inst = cur.gates[gi].inst;
            best_cell = cand;
            best_wns = w;
            best_area = a;
            best_pw = p;
          }
        }
      }
      if (best_inst.empty()) break;
      for (auto& g : cur.gates)
        if (g.inst == best_inst) g.cell = best_cell;
      wns = best_wns;
      area = best_area;
      pw = best_pw;
      ++r.downsizes;
    }
  }
  r.netlist = cur;
  for (const auto& g : cur.gates) r.chosen[g.inst] = g.cell;
  r.wns_after = wns;
  r.area_after = area;
  r.power_after = pw;
  r.timing_met = wns >= 0.0;
  return r;
}

// Smallest period the greedy upsizer reaches: size against an unmeetable
// period and read back the critical arrival.
inline double min_feasible_period(const GateNetlist& n, const CharLibrary& lib) {
  GateNetlist probe = n;
  probe.period = 1e-30;  // power recovery never runs against this period
  auto r = size_gates(probe, lib, 1.0);
  return timing(r.netlist, lib).max_arrival;
}

// The twelve added drive strengths of the "Original+plus" study.
inline const std::vector<std::pair<std::string, int>>& plus_extension() {
  static const std::vector<std::pair<std::string, int>> ext = {
      {"AND2", 3}, {"NAND2", 3}, {"OR2", 3}, {"NOR2", 3}, {"INV", 3}, {"INV", 5},
      {"INV", 6},  {"INV", 7},   {"BUF", 3}, {"BUF", 5},  {"BUF", 6}, {"BUF", 7}};
  return ext;
}

inline std::vector<std::pair<std::string, int>> parse_drive_list(std::string_view text) {
  std::vector<std::pair<std::string, int>> out;
  std::string item;
  std::istringstream is{std::string(text)};
  while (std::getline(is, item, ',')) {
    auto tok = detail::split_ws(item);
    if (tok.empty()) continue;
    if (tok.size() != 1) config_error("bad drive list entry '" + item + "'");
    const int d = cell_drive(tok[0]);
    const auto fam = cell_family(tok[0]);
    if (fam == tok[0]) config_error("drive list entry '" + tok[0] + "' has no X<n> suffix");
    out.emplace_back(fam, d);
  }
  return out;
}

// Catalog restricted to the given drive strengths.
inline CellCatalog with_drive_set(const CellCatalog& base, const std::set<int>& drives) {
  CellCatalog out{base.technology, {}};
  for (const auto& c : base.cells)
    if (drives.count(c.drive())) out.add(c);
  return out;
}

inline CellCatalog with_extra_drives(const CellCatalog& base,
                                     const std::vector<std::pair<std::string, int>>& extra) {
  CellCatalog out = base;
  for (const auto& [family, drive] : extra) {
    const auto name = family + "X" + std::to_string(drive);
    if (!out.find(name)) out.add(make_cell(family, drive));
  }
  return out;
}

// ---- bundled benchmarks -------------------------------------------------------

struct BenchmarkDefaults {
  double period, slew, load, activity;
};

inline BenchmarkDefaults benchmark_defaults(Technology t) {
  return t == Technology::Silicon45 ? BenchmarkDefaults{20000.0, 50.0, 5.0, 0.2}
                                    : BenchmarkDefaults{250.0, 5.0, 10.0, 0.2};
}

namespace detail {

class NetlistBuilder {
 public:
  NetlistBuilder(std::string name, Technology t) {
    const auto d = benchmark_defaults(t);
    n_.name = std::move(name);
    n_.period = d.period;
    n_.default_slew = d.slew;
    n_.default_load = d.load;
    n_.default_activity = d.activity;
  }

  std::string input(const std::string& net) {
    n_.inputs.push_back(net);
    return net;
  }
  void output(const std::string& net) { n_.outputs.push_back(net); }

  std::string gate(const std::string& cell, const std::vector<std::string>& ins,
                   std::string out = {}) {
    const std::string inst = "g" + std::to_string(n_.gates.size() + 1);
    if (out.empty()) out = "w" + std::to_string(n_.gates.size() + 1);
    n_.gates.push_back({inst, cell, out, ins});
    return out;
  }

  GateNetlist finish() {
    validate_gatelist(n_);
    return n_;
  }

 private:
  GateNetlist n_;
};

// sum = a^b^c, carry = NAND(NAND(a,b), NAND(a^b,c)).
inline std::pair<std::string, std::string> full_adder(NetlistBuilder& b, const std::string& a,
                                                      const std::string& x, const std::string& c,
                                                      const std::string& sum = {},
                                                      const std::string& carry = {}) {
  const auto p = b.gate("XOR2X1", {a, x});
  const auto s = b.gate("XOR2X1", {p, c}, sum);
  const auto g1 = b.gate("NAND2X1", {a, x});
  const auto g2 = b.gate("NAND2X1", {p, c});
  const auto co = b.gate("NAND2X1", {g1, g2}, carry);
  return {s, co};
}

inline std::pair<std::string, std::string> half_adder(NetlistBuilder& b, const std::string& a,
                                                      const std::string& x) {
  return {b.gate("XOR2X1", {a, x}), b.gate("AND2X1", {a, x})};
}

}  // namespace detail

inline GateNetlist make_inv_chain(int length, Technology t = Technology::Silicon45) {
  if (length < 1) config_error("inverter chain needs at least one stage");
  detail::NetlistBuilder b("inv-chain-" + std::to_string(length), t);
  std::string net = b.input("in");
  for (int i = 0; i < length; ++i) net = b.gate("INVX1", {net});
  b.output(net);
  return b.finish();
}

inline GateNetlist make_rca(int bits, Technology t = Technology::Silicon45) {
  if (bits < 1) config_error("adder needs at least one bit");
  detail::NetlistBuilder b("rca" + std::to_string(bits), t);
  std::vector<std::string> a, x;
  for (int i = 0; i < bits; ++i) a.push_back(b.input("a" + std::to_string(i)));
  for (int i = 0; i < bits; ++i) x.push_back(b.input("b" + std::to_string(i)));
  std::string carry = b.input("cin");
  for (int i = 0; i < bits; ++i) {
    auto [s, co] = detail::full_adder(b, a[i], x[i], carry, "s" + std::to_string(i),
                                      i + 1 == bits ? "cout" : "");
    b.output(s);
    carry = co;
  }
  b.output(carry);
  return b.finish();
}

// Unsigned 4x4 array multiplier: AND partial products reduced row by row.
inline GateNetlist make_mult4x4(Technology t = Technology::Silicon45) {
  detail::NetlistBuilder b("mult4x4", t);
  std::vector<std::string> a, x;
  for (int i = 0; i < 4; ++i) a.push_back(b.input("a" + std::to_string(i)));
  for (int i = 0; i < 4; ++i) x.push_back(b.input("b" + std::to_string(i)));
  std::string pp[4][4];
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) pp[j][i] = b.gate("AND2X1", {a[i], x[j]});
  b.output(pp[0][0]);
  // acc holds the running sum bits at weights j .. j+3 before adding row j.
  std::vector<std::string> acc = {pp[0][1], pp[0][2], pp[0][3]};
  for (int j = 1; j < 4; ++j) {
    std::vector<std::string> next;
    std::string carry;
    for (int i = 0; i < 4; ++i) {
      std::string s;
      if (i < static_cast<int>(acc.size())) {
        if (carry.empty()) std::tie(s, carry) = detail::half_adder(b, acc[i], pp[j][i]);
        else std::tie(s, carry) = detail::full_adder(b, acc[i], pp[j][i], carry);
      } else {
        std::tie(s, carry) = detail::half_adder(b, pp[j][i], carry);
      }
      if (i == 0) b.output(s);
      else next.push_back(s);
    }
    next.push_back(carry);
    acc = next;
  }
  for (const auto& s : acc) b.output(s);
  return b.finish();
}

// Seeded random DAG over the two-input and inverting cells.
inline GateNetlist make_rand_dag(std::uint64_t seed, int n_gates = 60, int n_inputs = 8,
                                 Technology t = Technology::Silicon45) {
  if (n_gates < 1 || n_inputs < 2) config_error("random DAG needs >= 1 gate and >= 2 inputs");
  detail::NetlistBuilder b("rand-dag-" + std::to_string(seed), t);
  std::mt19937_64 rng(derive_seed(seed, "rand-dag"));
  static const std::vector<std::pair<std::string, int>> cells = {
      {"INVX1", 1}, {"NAND2X1", 2}, {"NOR2X1", 2}, {"AND2X1", 2}, {"XOR2X1", 2}, {"INVX2", 1}};
  std::vector<std::string> nets;
  for (int i = 0; i < n_inputs; ++i) nets.push_back(b.input("i" + std::to_string(i)));
  std::map<std::string, int> fanout;
  const std::size_t window = 16;
  for (int k = 0; k < n_gates; ++k) {
    const auto& [cell, arity] = cells[rng() % cells.size()];
    std::vector<std::string> ins;
    while (static_cast<int>(ins.size()) < arity) {
      const std::size_t span = std::min(window, nets.size());
      const auto& net = nets[nets.size() - 1 - rng() % span];
      if (std::find(ins.begin(), ins.end(), net) == ins.end()) ins.push_back(net);
    }
    for (const auto& in : ins) ++fanout[in];
    nets.push_back(b.gate(cell, ins));
  }
  for (std::size_t i = n_inputs; i < nets.size(); ++i)
    if (!fanout[nets[i]]) b.output(nets[i]);
  return b.finish();
}

inline std::vector<GateNetlist> bundled_benchmarks(Technology t = Technology::Silicon45) {
  return {make_inv_chain(32, t), make_rca(8, t),       make_rca(16, t),      make_mult4x4(t),
          make_rand_dag(1, 60, 8, t), make_rand_dag(2, 60, 8, t), make_rand_dag(3, 60, 8, t)};
}

inline GateNetlist bundled_benchmark(const std::string& name, Technology t = Technology::Silicon45) {
  for (auto& b : bundled_benchmarks(t))
    if (b.name == name) return b;
  config_error("unknown benchmark " + name);
}

}  // namespace cellgnn

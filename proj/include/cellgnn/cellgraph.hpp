#pragma once

// Directed cell graphs. Node kinds are encoded in the first three feature
// bits; the remaining slots carry technology, corner and stimulus values in
// one of three task layouts. Internal nets are not nodes: a FET driving an
// internal net gets a direct edge to every FET whose source or gate sits on it.

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "cellgnn/error.hpp"
#include "cellgnn/netlist.hpp"
#include "cellgnn/oracle.hpp"
#include "cellgnn/technology.hpp"

namespace cellgnn {

enum class NodeKind : int { In = 0b001, Out = 0b010, Fet = 0b011, Vdd = 0b100, Vss = 0b101 };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::In: return "IN";
    case NodeKind::Out: return "OUT";
    case NodeKind::Fet: return "FET";
    case NodeKind::Vdd: return "VDD";
    case NodeKind::Vss: return "VSS";
  }
  return "?";
}

enum class FeatureLayout : int { DelayPower = 0, Leakage = 1, Capacitance = 2 };

inline int feature_width(FeatureLayout l) { return l == FeatureLayout::DelayPower ? 12 : 9; }

inline const char* to_string(FeatureLayout l) {
  switch (l) {
    case FeatureLayout::DelayPower: return "delay_power";
    case FeatureLayout::Leakage: return "leakage";
    case FeatureLayout::Capacitance: return "capacitance";
  }
  return "?";
}

// Feature slots shared by all layouts.
namespace feature {
inline constexpr int kType0 = 0;
inline constexpr int kType1 = 1;
inline constexpr int kType2 = 2;
inline constexpr int kPolar = 3;
inline constexpr int kVdd = 4;
inline constexpr int kWidth = 5;
inline constexpr int kThird = 6;  // temperature or Cox
inline constexpr int kVth = 7;
// DelayPower
inline constexpr int kSlew = 8;
inline constexpr int kLoad = 9;
inline constexpr int kCurrent = 10;
inline constexpr int kNext = 11;
// Leakage: current state; Capacitance: pin-is-chosen.
inline constexpr int kPinSlot = 8;
}  // namespace feature

struct CellGraph {
  FeatureLayout layout = FeatureLayout::DelayPower;
  std::vector<NodeKind> kinds;
  std::vector<double> features;  // row-major, kinds.size() x feature_width
  std::vector<std::pair<int, int>> edges;
  double target = 0.0;
  std::string cell;
  std::string description;

  int width() const { return feature_width(layout); }
  int num_nodes() const { return static_cast<int>(kinds.size()); }
  double feature(int node, int slot) const { return features[node * width() + slot]; }
  double& feature(int node, int slot) { return features[node * width() + slot]; }

  int count(NodeKind k) const {
    int c = 0;
    for (auto x : kinds) c += x == k;
    return c;
  }
};

struct Stimulus {
  double slew = 0.0;
  double load = 0.0;
  std::vector<int> current;  // +1 high / -1 low per input
  std::vector<int> next;
  int chosen_pin = -1;

  static Stimulus for_arc(const Arc& arc, int n_inputs, double slew, double load) {
    Stimulus s;
    s.slew = slew;
    s.load = load;
    for (int p = 0; p < n_inputs; ++p) {
      s.current.push_back(pin_value(arc.from, n_inputs, p) ? 1 : -1);
      s.next.push_back(pin_value(arc.to, n_inputs, p) ? 1 : -1);
    }
    return s;
  }

  static Stimulus for_state(InputVector v, int n_inputs) {
    Stimulus s;
    for (int p = 0; p < n_inputs; ++p) s.current.push_back(pin_value(v, n_inputs, p) ? 1 : -1);
    return s;
  }

  static Stimulus for_pin(int pin) {
    Stimulus s;
    s.chosen_pin = pin;
    return s;
  }
};

// Node order: IN nodes (pin order), OUT, FETs (netlist order), VDD, VSS.
inline CellGraph encode(const CellNetlist& cell, const Corner& corner, const Stimulus& stim,
                        FeatureLayout layout) {
  const int n_in = static_cast<int>(cell.inputs.size());
  if (n_in > 3) data_error("encode: cell " + cell.name + " has more than 3 inputs");
  if (!std::isfinite(corner.vdd) || !std::isfinite(corner.vth) || !std::isfinite(corner.third))
    data_error("encode: non-finite corner");
  auto check_states = [&](const std::vector<int>& s, const char* what) {
    if (static_cast<int>(s.size()) != n_in)
      data_error(std::string("encode: stimulus ") + what + " needs one entry per input");
    for (int v : s)
      if (v != 1 && v != -1) data_error(std::string("encode: ") + what + " must be +-1");
  };
  switch (layout) {
    case FeatureLayout::DelayPower:
      check_states(stim.current, "current state");
      check_states(stim.next, "next state");
      if (!std::isfinite(stim.slew) || !std::isfinite(stim.load))
        data_error("encode: non-finite slew/load");
      break;
    case FeatureLayout::Leakage:
      check_states(stim.current, "current state");
      break;
    case FeatureLayout::Capacitance:
      if (stim.chosen_pin < 0 || stim.chosen_pin >= n_in)
        data_error("encode: capacitance layout needs a chosen pin");
      break;
  }

  CellGraph g;
  g.layout = layout;
  g.cell = cell.name;
  const int w = g.width();
  const int n_fet = static_cast<int>(cell.fets.size());
  const int out_node = n_in;
  const int fet0 = n_in + 1;
  const int vdd_node = fet0 + n_fet;
  const int vss_node = vdd_node + 1;
  const int n_nodes = vss_node + 1;
  g.kinds.resize(n_nodes);
  g.features.assign(static_cast<std::size_t>(n_nodes) * w, 0.0);

  auto set_kind = [&](int node, NodeKind k) {
    g.kinds[node] = k;
    int code = static_cast<int>(k);
    g.feature(node, feature::kType0) = (code >> 2) & 1;
    g.feature(node, feature::kType1) = (code >> 1) & 1;
    g.feature(node, feature::kType2) = code & 1;
  };

  for (int p = 0; p < n_in; ++p) {
    set_kind(p, NodeKind::In);
    switch (layout) {
      case FeatureLayout::DelayPower:
        g.feature(p, feature::kSlew) = stim.slew;
        g.feature(p, feature::kCurrent) = stim.current[p];
        g.feature(p, feature::kNext) = stim.next[p];
        break;
      case FeatureLayout::Leakage:
        g.feature(p, feature::kPinSlot) = stim.current[p];
        break;
      case FeatureLayout::Capacitance:
        g.feature(p, feature::kPinSlot) = p == stim.chosen_pin ? 1.0 : 0.0;
        break;
    }
  }
  set_kind(out_node, NodeKind::Out);
  if (layout == FeatureLayout::DelayPower) g.feature(out_node, feature::kLoad) = stim.load;
  for (int i = 0; i < n_fet; ++i) {
    const auto& f = cell.fets[i];
    const int node = fet0 + i;
    set_kind(node, NodeKind::Fet);
    const bool p_type = f.polarity == Polarity::P;
    g.feature(node, feature::kPolar) = p_type ? 1.0 : -1.0;
    g.feature(node, feature::kWidth) = f.width;
    g.feature(node, feature::kThird) = corner.third;
    g.feature(node, feature::kVth) = p_type ? -std::abs(corner.vth) : std::abs(corner.vth);
  }
  set_kind(vdd_node, NodeKind::Vdd);
  g.feature(vdd_node, feature::kVdd) = corner.vdd;
  set_kind(vss_node, NodeKind::Vss);

  // Net-level endpoints: which node a net resolves to when it is a port.
  auto port_node = [&](const std::string& net) -> int {
    if (int p = cell.input_index(net); p >= 0) return p;
    if (net == cell.output) return out_node;
    if (net == cell.vdd) return vdd_node;
    if (net == cell.vss) return vss_node;
    return -1;
  };

  auto add = [&](int src, int dst) {
    if (src == dst) return;
    for (const auto& e : g.edges)
      if (e.first == src && e.second == dst) return;
    g.edges.emplace_back(src, dst);
  };

  for (int i = 0; i < n_fet; ++i) {
    const auto& f = cell.fets[i];
    const int node = fet0 + i;
    // Gate and source terminals feed the FET; VSS included (FET rule wins).
    if (int src = port_node(f.gate); src >= 0) add(src, node);
    if (int src = port_node(f.source); src >= 0) {
      if (src == out_node) add(node, out_node);
      else add(src, node);
    }
    // Drain terminal leaves the FET.
    if (int dst = port_node(f.drain); dst >= 0) {
      // IN and VDD only ever source edges.
      if (dst == vdd_node || dst < n_in) add(dst, node);
      else add(node, dst);
    } else {
      for (int j = 0; j < n_fet; ++j) {
        const auto& h = cell.fets[j];
        if (j != i && (h.source == f.drain || h.gate == f.drain)) add(node, fet0 + j);
      }
    }
  }
  return g;
}

// Row-normalized propagation operator D_in^-1 (A + I) in CSR form. Row i
// averages node i with its in-neighbors.
struct Propagation {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  std::vector<std::vector<double>> dense() const {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) m[i][col[k]] += val[k];
    return m;
  }
};

inline Propagation adjacency(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  Propagation p;
  p.n = num_nodes;
  std::vector<std::vector<int>> incoming(num_nodes);
  for (int i = 0; i < num_nodes; ++i) incoming[i].push_back(i);
  for (const auto& [src, dst] : edges) incoming[dst].push_back(src);
  p.row_ptr.push_back(0);
  for (int i = 0; i < num_nodes; ++i) {
    const double w = 1.0 / static_cast<double>(incoming[i].size());
    for (int j : incoming[i]) {
      p.col.push_back(j);
      p.val.push_back(w);
    }
    p.row_ptr.push_back(static_cast<int>(p.col.size()));
  }
  return p;
}

inline Propagation adjacency(const CellGraph& g) { return adjacency(g.num_nodes(), g.edges); }

// Plain-text dump for golden files.
inline std::string dump(const CellGraph& g) {
  std::string out;
  char buf[64];
  for (int i = 0; i < g.num_nodes(); ++i) {
    out += "node " + std::to_string(i) + " " + to_string(g.kinds[i]);
    for (int s = 0; s < g.width(); ++s) {
      std::snprintf(buf, sizeof buf, " %.9g", g.feature(i, s));
      out += buf;
    }
    out += "\n";
  }
  for (const auto& [a, b] : g.edges)
    out += "edge " + std::to_string(a) + " " + std::to_string(b) + "\n";
  return out;
}

}  // namespace cellgnn

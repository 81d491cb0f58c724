#pragma once

// Closed-form characterization engine standing in for transistor-level
// simulation. A cell is compiled once into index form; boolean behavior comes
// from pull-up/pull-down path search, drive from the effective resistance of
// the conducting FET network, and energies/leakage from simple charge and
// subthreshold models.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cellgnn/error.hpp"
#include "cellgnn/netlist.hpp"
#include "cellgnn/technology.hpp"

namespace cellgnn {

// Units: K and the short-circuit current in uA, capacitances in fF, I0 in nA,
// gamma_sc in fJ per (time unit * uA), where the time unit is ps (silicon) or
// ns (flexible).
struct SurrogateParams {
  Technology technology = Technology::Silicon45;
  double k_drive = 40.0;
  double alpha = 1.3;
  double beta_slew = 0.25;
  double c_gate = 0.9;
  double c_drain = 0.6;
  double i0 = 4.0;
  double n_ss = 1.5;
  double gamma_sc = 0.02;
  double eta_slew = 2.2;
  double theta_t = 1.5;
  double cox_ref = 90.0;       // flexible only: gate caps scale by Cox/cox_ref
  double unit_area = 0.1;      // um^2 per unit of transistor width
  bool internal_stage_energy = true;

  bool operator==(const SurrogateParams&) const = default;
};

inline SurrogateParams default_params(Technology t) {
  SurrogateParams p;
  p.technology = t;
  if (t == Technology::Flexible) {
    p.k_drive = 5.0;
    p.alpha = 1.2;
    p.beta_slew = 0.25;
    p.c_gate = 1.5;
    p.c_drain = 1.0;
    p.i0 = 0.05;
    p.n_ss = 3.0;
    p.gamma_sc = 0.05;
    p.eta_slew = 2.2;
    p.theta_t = 0.0;
    p.unit_area = 4.0;
  }
  return p;
}

inline std::string to_config_text(const SurrogateParams& p) {
  std::ostringstream os;
  os.precision(17);
  os << "technology = " << to_string(p.technology) << "\n"
     << "k_drive = " << p.k_drive << "\n"
     << "alpha = " << p.alpha << "\n"
     << "beta_slew = " << p.beta_slew << "\n"
     << "c_gate = " << p.c_gate << "\n"
     << "c_drain = " << p.c_drain << "\n"
     << "i0 = " << p.i0 << "\n"
     << "n_ss = " << p.n_ss << "\n"
     << "gamma_sc = " << p.gamma_sc << "\n"
     << "eta_slew = " << p.eta_slew << "\n"
     << "theta_t = " << p.theta_t << "\n"
     << "cox_ref = " << p.cox_ref << "\n"
     << "unit_area = " << p.unit_area << "\n"
     << "internal_stage_energy = " << (p.internal_stage_energy ? 1 : 0) << "\n";
  return os.str();
}

// key = value lines, '#' comments. A `technology` key picks the preset that
// the remaining keys override.
inline SurrogateParams parse_params(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto eq = line.find('=');
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      config_error("params line " + std::to_string(line_no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  SurrogateParams p = default_params(
      kv.count("technology") ? parse_technology(kv["technology"]) : Technology::Silicon45);
  for (const auto& [key, val] : kv) {
    if (key == "technology") continue;
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
    } catch (const std::exception&) {
      config_error("params: bad value for " + key + ": '" + val + "'");
    }
    if (key == "k_drive") p.k_drive = v;
    else if (key == "alpha") p.alpha = v;
    else if (key == "beta_slew") p.beta_slew = v;
    else if (key == "c_gate") p.c_gate = v;
    else if (key == "c_drain") p.c_drain = v;
    else if (key == "i0") p.i0 = v;
    else if (key == "n_ss") p.n_ss = v;
    else if (key == "gamma_sc") p.gamma_sc = v;
    else if (key == "eta_slew") p.eta_slew = v;
    else if (key == "theta_t") p.theta_t = v;
    else if (key == "cox_ref") p.cox_ref = v;
    else if (key == "unit_area") p.unit_area = v;
    else if (key == "internal_stage_energy") p.internal_stage_energy = v != 0.0;
    else config_error("params: unknown key '" + key + "'");
    if (key != "internal_stage_energy" && key != "theta_t" && !(v > 0.0))
      config_error("params: " + key + " must be positive");
  }
  return p;
}

enum class Rail { Vdd, Vss };
enum class Direction { Rise, Fall };

// Input vectors are bitmasks with pin 0 as the most significant bit, so
// binary order reads in pin declaration order ("AB" = 00, 01, 10, 11).
using InputVector = std::uint32_t;

inline int pin_bit(int n_inputs, int pin) { return n_inputs - 1 - pin; }

inline int pin_value(InputVector v, int n_inputs, int pin) {
  return static_cast<int>((v >> pin_bit(n_inputs, pin)) & 1u);
}

struct TruthTable {
  int n_inputs = 0;
  std::vector<std::uint8_t> out;  // indexed by InputVector

  int operator()(InputVector v) const { return out.at(v); }
  bool operator==(const TruthTable&) const = default;
};

struct Arc {
  std::string cell;
  int pin = 0;
  InputVector from = 0;
  InputVector to = 0;
  Direction direction = Direction::Rise;  // of the flipping input
  bool output_flips = false;

  // Side-input assignment as a compact mask over the other pins, in pin order.
  InputVector side(int n_inputs) const {
    InputVector s = 0;
    for (int p = 0; p < n_inputs; ++p) {
      if (p == pin) continue;
      s = (s << 1) | static_cast<InputVector>(pin_value(from, n_inputs, p));
    }
    return s;
  }
};

struct CharPoint {
  std::optional<double> delay;           // time unit
  std::optional<double> out_slew;        // time unit
  std::optional<double> flip_energy;     // fJ
  std::optional<double> non_flip_energy; // fJ
  double leakage_power = 0.0;            // nW, after the transition
  std::vector<double> pin_caps;          // fF
  bool degenerate = false;
};

// Index form of a cell. Nets: inputs first, then output, VDD, VSS, internals.
class CompiledCell {
 public:
  struct Fet {
    Polarity polarity;
    int drain, gate, source;
    double width;
  };
  struct Stage {
    int output_net;
    std::vector<int> fets;
  };

  explicit CompiledCell(const CellNetlist& cell) : cell_(cell) {
    n_inputs_ = static_cast<int>(cell.inputs.size());
    for (const auto& in : cell.inputs) add_net(in);
    out_ = add_net(cell.output);
    vdd_ = add_net(cell.vdd);
    vss_ = add_net(cell.vss);
    for (const auto& f : cell.fets)
      fets_.push_back({f.polarity, add_net(f.drain), add_net(f.gate), add_net(f.source),
                       f.width});
    build_stages();
    build_truth_table();
  }

  const CellNetlist& netlist() const { return cell_; }
  const std::string& name() const { return cell_.name; }
  int n_inputs() const { return n_inputs_; }
  int n_nets() const { return static_cast<int>(names_.size()); }
  int output_net() const { return out_; }
  int vdd_net() const { return vdd_; }
  int vss_net() const { return vss_; }
  const std::vector<Fet>& fets() const { return fets_; }
  const std::vector<Stage>& stages() const { return stages_; }
  const TruthTable& truth_table() const { return truth_; }
  const std::string& net_name(int i) const { return names_.at(i); }

  // Logic value of every net that is an input or a stage output; -1 for
  // channel-only nets and rails.
  const std::vector<int>& net_values(InputVector v) const { return values_.at(v); }

  bool fet_on(const Fet& f, const std::vector<int>& values) const {
    int g = values[f.gate];
    return f.polarity == Polarity::N ? g == 1 : g == 0;
  }

 private:
  int add_net(const std::string& n) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == n) return static_cast<int>(i);
    names_.push_back(n);
    return static_cast<int>(names_.size()) - 1;
  }

  bool is_rail(int n) const { return n == vdd_ || n == vss_; }

  void build_stages() {
    std::vector<bool> is_gate(names_.size(), false);
    for (const auto& f : fets_) is_gate[f.gate] = true;
    std::vector<int> stage_of(fets_.size(), -1);
    std::vector<Stage> stages;
    for (std::size_t seed = 0; seed < fets_.size(); ++seed) {
      if (stage_of[seed] >= 0) continue;
      Stage st{-1, {}};
      std::vector<int> stack{static_cast<int>(seed)};
      stage_of[seed] = static_cast<int>(stages.size());
      while (!stack.empty()) {
        int fi = stack.back();
        stack.pop_back();
        st.fets.push_back(fi);
        for (int net : {fets_[fi].drain, fets_[fi].source}) {
          if (is_rail(net)) continue;
          if (net == out_ || is_gate[net]) {
            if (st.output_net >= 0 && st.output_net != net)
              data_error("cell " + cell_.name + ": stage drives two nets");
            st.output_net = net;
          }
          for (std::size_t j = 0; j < fets_.size(); ++j) {
            if (stage_of[j] >= 0) continue;
            if (fets_[j].drain == net || fets_[j].source == net) {
              stage_of[j] = static_cast<int>(stages.size());
              stack.push_back(static_cast<int>(j));
            }
          }
        }
      }
      if (st.output_net < 0)
        data_error("cell " + cell_.name + ": stage without an output net");
      std::sort(st.fets.begin(), st.fets.end());
      stages.push_back(std::move(st));
    }

    // Order stages so every gate net is resolved before it is used.
    std::vector<bool> known(names_.size(), false);
    for (int i = 0; i < n_inputs_; ++i) known[i] = true;
    std::vector<bool> placed(stages.size(), false);
    while (stages_.size() < stages.size()) {
      bool progress = false;
      for (std::size_t s = 0; s < stages.size(); ++s) {
        if (placed[s]) continue;
        bool ready = true;
        for (int fi : stages[s].fets) ready = ready && known[fets_[fi].gate];
        if (!ready) continue;
        placed[s] = true;
        known[stages[s].output_net] = true;
        stages_.push_back(stages[s]);
        progress = true;
      }
      if (!progress) data_error("cell " + cell_.name + ": cyclic or undriven stage gates");
    }
  }

  // True when `from` reaches `rail` through ON devices of one polarity.
  bool conducts(const Stage& st, int from, int rail, Polarity pol,
                const std::vector<int>& values) const {
    std::vector<bool> seen(names_.size(), false);
    std::vector<int> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      if (cur == rail) return true;
      if (is_rail(cur)) continue;
      for (int fi : st.fets) {
        const auto& f = fets_[fi];
        if (f.polarity != pol || !fet_on(f, values)) continue;
        int next = f.drain == cur ? f.source : f.source == cur ? f.drain : -1;
        if (next >= 0 && !seen[next]) {
          seen[next] = true;
          stack.push_back(next);
        }
      }
    }
    return false;
  }

  void build_truth_table() {
    const InputVector count = 1u << n_inputs_;
    truth_.n_inputs = n_inputs_;
    truth_.out.resize(count);
    values_.resize(count);
    for (InputVector v = 0; v < count; ++v) {
      std::vector<int> values(names_.size(), -1);
      for (int p = 0; p < n_inputs_; ++p) values[p] = pin_value(v, n_inputs_, p);
      for (const auto& st : stages_) {
        bool up = conducts(st, st.output_net, vdd_, Polarity::P, values);
        bool down = conducts(st, st.output_net, vss_, Polarity::N, values);
        if (up == down)
          data_error("cell " + cell_.name + ": " + (up ? "contention" : "high-Z") +
                     " on net " + names_[st.output_net] + " for input vector " +
                     std::to_string(v));
        values[st.output_net] = up ? 1 : 0;
      }
      truth_.out[v] = static_cast<std::uint8_t>(values[out_]);
      values_[v] = std::move(values);
    }
  }

  CellNetlist cell_;
  int n_inputs_ = 0;
  int out_ = -1, vdd_ = -1, vss_ = -1;
  std::vector<std::string> names_;
  std::vector<Fet> fets_;
  std::vector<Stage> stages_;
  TruthTable truth_;
  std::vector<std::vector<int>> values_;
};

inline TruthTable boolean_function(const CellNetlist& cell) {
  return CompiledCell(cell).truth_table();
}

// Pins in declaration order, side assignments in binary order, rise before
// fall.
inline std::vector<Arc> enumerate_arcs(const CompiledCell& cell) {
  std::vector<Arc> arcs;
  const int n = cell.n_inputs();
  const auto& tt = cell.truth_table();
  for (int pin = 0; pin < n; ++pin) {
    const InputVector pin_mask = 1u << pin_bit(n, pin);
    for (InputVector side = 0; side < (1u << (n - 1)); ++side) {
      // Spread the side bits over the non-flipping pins.
      InputVector base = 0;
      int k = n - 2;
      for (int p = 0; p < n; ++p) {
        if (p == pin) continue;
        if ((side >> k) & 1u) base |= 1u << pin_bit(n, p);
        --k;
      }
      for (Direction dir : {Direction::Rise, Direction::Fall}) {
        Arc a;
        a.cell = cell.name();
        a.pin = pin;
        a.direction = dir;
        a.from = dir == Direction::Rise ? base : base | pin_mask;
        a.to = dir == Direction::Rise ? base | pin_mask : base;
        a.output_flips = tt(a.from) != tt(a.to);
        arcs.push_back(a);
      }
    }
  }
  return arcs;
}

inline std::vector<Arc> enumerate_arcs(const CellNetlist& cell) {
  return enumerate_arcs(CompiledCell(cell));
}

namespace detail {

inline double temperature_kelvin(const Corner& c) {
  return c.technology == Technology::Silicon45 ? c.third + 273.15 : 300.0;
}

inline double cox_scale(const Corner& c, const SurrogateParams& p) {
  return c.technology == Technology::Flexible ? c.third / p.cox_ref : 1.0;
}

inline double overdrive(const Corner& c) { return c.vdd - std::abs(c.vth); }

// Per-width conductance in uS. Degenerate corners are floored.
inline double unit_conductance(const Corner& c, const SurrogateParams& p, bool* degenerate) {
  const double tf = c.technology == Technology::Silicon45
                        ? std::pow(300.0 / temperature_kelvin(c), p.theta_t)
                        : 1.0;
  const double floor = 1e-6 * p.k_drive * tf / c.vdd;
  const double od = overdrive(c);
  double g = od > 0.0 ? p.k_drive * std::pow(od, p.alpha) / c.vdd * tf : 0.0;
  if (g < floor) {
    if (degenerate) *degenerate = true;
    g = floor;
  }
  return g;
}

}  // namespace detail

// Resistance in ohms between `net` (default: the output) and the rail through
// the ON devices of the rail's polarity, from a grounded-Laplacian solve with
// unit current injected at `net`.
inline double effective_resistance(const CompiledCell& cell, InputVector state, Rail rail,
                                   const SurrogateParams& params, const Corner& corner,
                                   int net = -1, bool* degenerate = nullptr) {
  if (net < 0) net = cell.output_net();
  const int rail_net = rail == Rail::Vdd ? cell.vdd_net() : cell.vss_net();
  const Polarity pol = rail == Rail::Vdd ? Polarity::P : Polarity::N;
  const auto& values = cell.net_values(state);
  const double g_unit = detail::unit_conductance(corner, params, degenerate);

  struct Edge { int a, b; double g; };
  std::vector<Edge> edges;
  for (const auto& f : cell.fets())
    if (f.polarity == pol && cell.fet_on(f, values))
      edges.push_back({f.drain, f.source, g_unit * f.width});

  // Nets reachable from `net` without passing through a rail.
  std::vector<int> index(cell.n_nets(), -1);
  std::vector<int> order{net};
  index[net] = 0;
  bool hits_rail = false;
  for (std::size_t head = 0; head < order.size(); ++head) {
    int cur = order[head];
    for (const auto& e : edges) {
      int next = e.a == cur ? e.b : e.b == cur ? e.a : -1;
      if (next < 0) continue;
      if (next == rail_net) { hits_rail = true; continue; }
      if (next == cell.vdd_net() || next == cell.vss_net()) continue;
      if (index[next] < 0) {
        index[next] = static_cast<int>(order.size());
        order.push_back(next);
      }
    }
  }
  if (!hits_rail)
    data_error("cell " + cell.name() + ": no conducting path from " + cell.net_name(net) +
               " to " + (rail == Rail::Vdd ? "VDD" : "VSS"));

  const int m = static_cast<int>(order.size());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(m, m);
  for (const auto& e : edges) {
    int ia = e.a == rail_net ? -2 : index[e.a];
    int ib = e.b == rail_net ? -2 : index[e.b];
    if (ia == -1 || ib == -1) continue;
    if (ia >= 0) lap(ia, ia) += e.g;
    if (ib >= 0) lap(ib, ib) += e.g;
    if (ia >= 0 && ib >= 0) {
      lap(ia, ib) -= e.g;
      lap(ib, ia) -= e.g;
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(0) = 1.0;
  Eigen::VectorXd v = lap.ldlt().solve(rhs);
  return v(0) * 1e6;  // 1/uS -> ohm
}

inline double leakage_power(const CompiledCell& cell, InputVector state, const Corner& corner,
                            const SurrogateParams& p) {
  const double vt = 0.02585 * detail::temperature_kelvin(corner) / 300.0;
  const double per_width = p.i0 * std::exp(-std::abs(corner.vth) / (p.n_ss * vt));
  const auto& values = cell.net_values(state);
  double w_off = 0.0;
  for (const auto& f : cell.fets())
    if (!cell.fet_on(f, values)) w_off += f.width;
  return corner.vdd * per_width * w_off;
}

inline double pin_capacitance(const CompiledCell& cell, int pin, const Corner& corner,
                              const SurrogateParams& p) {
  double w = 0.0;
  for (const auto& f : cell.fets())
    if (f.gate == pin) w += f.width;
  return p.c_gate * detail::cox_scale(corner, p) * w;
}

namespace detail {

// Switched capacitance of an internal stage net: drain/source junctions plus
// the gates it drives (fF).
inline double net_capacitance(const CompiledCell& cell, int net, const Corner& corner,
                              const SurrogateParams& p) {
  double c = 0.0;
  const double cg = p.c_gate * cox_scale(corner, p);
  for (const auto& f : cell.fets()) {
    if (f.drain == net || f.source == net) c += p.c_drain * f.width;
    if (f.gate == net) c += cg * f.width;
  }
  return c;
}

}  // namespace detail

inline CharPoint characterize(const CompiledCell& cell, const Arc& arc, const Corner& corner,
                              double slew, double load, const SurrogateParams& p) {
  if (!(slew >= 0.0) || !(load >= 0.0)) data_error("characterize: negative slew or load");
  CharPoint cp;
  const double ln2 = std::log(2.0);
  const double tu = ranges(corner.technology).seconds_per_time_unit;
  const double rc_to_time = 1e-15 / tu;  // ohm * fF -> time unit
  const double vdd2 = corner.vdd * corner.vdd;
  const auto& before = cell.net_values(arc.from);
  const auto& after = cell.net_values(arc.to);
  const int out = cell.output_net();

  double internal_delay = 0.0;
  double internal_energy = 0.0;
  for (const auto& st : cell.stages()) {
    if (st.output_net == out || before[st.output_net] == after[st.output_net]) continue;
    const Rail r = after[st.output_net] ? Rail::Vdd : Rail::Vss;
    const double cs = detail::net_capacitance(cell, st.output_net, corner, p);
    const double rs =
        effective_resistance(cell, arc.to, r, p, corner, st.output_net, &cp.degenerate);
    internal_delay += ln2 * rs * cs * rc_to_time;
    if (p.internal_stage_energy) internal_energy += 0.5 * cs * vdd2;
  }

  if (arc.output_flips) {
    const Rail rail = after[out] ? Rail::Vdd : Rail::Vss;
    const Polarity pol = rail == Rail::Vdd ? Polarity::P : Polarity::N;
    const double r = effective_resistance(cell, arc.to, rail, p, corner, out, &cp.degenerate);
    double c_int = 0.0;
    double w_drive = 0.0;
    for (const auto& f : cell.fets()) {
      if (f.drain != out && f.source != out) continue;
      c_int += p.c_drain * f.width;
      if (f.polarity == pol && cell.fet_on(f, after)) w_drive += f.width;
    }
    const double c_tot = load + c_int;
    cp.delay = ln2 * r * c_tot * rc_to_time + internal_delay + p.beta_slew * slew;
    cp.out_slew = p.eta_slew * r * c_tot * rc_to_time;
    const double od = std::max(detail::overdrive(corner), 0.0);
    cp.flip_energy = 0.5 * c_tot * vdd2 +
                     p.gamma_sc * slew * p.k_drive * w_drive * std::pow(od, p.alpha) +
                     internal_energy;
  } else {
    double w_gate = 0.0;
    for (const auto& f : cell.fets())
      if (f.gate == arc.pin) w_gate += f.width;
    cp.non_flip_energy =
        0.5 * vdd2 * p.c_gate * detail::cox_scale(corner, p) * w_gate + internal_energy;
  }
  cp.leakage_power = leakage_power(cell, arc.to, corner, p);
  for (int pin = 0; pin < cell.n_inputs(); ++pin)
    cp.pin_caps.push_back(pin_capacitance(cell, pin, corner, p));
  if (detail::overdrive(corner) <= 0.0) cp.degenerate = true;
  return cp;
}

inline double cell_area(const CellNetlist& cell, const SurrogateParams& p) {
  return cell.total_width() * p.unit_area;
}

}  // namespace cellgnn

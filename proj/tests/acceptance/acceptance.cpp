// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance [--work DIR] [--only 1,4,8] [--reuse-models]
//
// --reuse-models skips criterion-4 training when DIR already holds trained
// checkpoints from an earlier full run (a development shortcut; the
// registered test always trains from scratch).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

using namespace cellgnn;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- tolerances and budgets -----------------------------------------------

constexpr double kEncodingBudgetS = 1.0;
constexpr double kBooleanBudgetS = 1.0;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradMinAbs = 1e-8;
constexpr double kGradBudgetS = 30.0;
constexpr double kTrainMapeCore = 5.0;   // delay, capacitance, leakage
constexpr double kTrainMapePower = 8.0;  // flip and non-flip power
constexpr double kTrainBudgetS = 15.0 * 60.0;
constexpr double kMetricTol = 1e-9;
constexpr double kLibertyRelTol = 5e-6;  // 6 significant digits
constexpr double kSystemWnsPct = 2.0;
constexpr double kSystemLeakPct = 5.0;
constexpr double kSystemDynPct = 5.0;
constexpr double kSystemBudgetS = 60.0;
constexpr double kInterpFactor = 1.05;  // within 110% of the minimum period
constexpr double kSpeedupMin = 10.0;

const std::vector<std::string> kTrainCells = {"INVX1", "INVX2", "NAND2X1", "NOR2X1", "AND2X1", "XOR2X1"};

// Unseen by both the 3-point training grid and the 4-point test grid.
const Corner kUnseen{Technology::Silicon45, 1.03, 0.48, 65.0};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* fmt, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, x);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::vector<std::string>& args) {
  const int rc = cli::run(args);
  if (rc != 0) {
    std::string s;
    for (const auto& a : args) s += " " + a;
    throw std::runtime_error("cellgnn" + s + " exited with " + std::to_string(rc));
  }
  return rc;
}

json read_json(const fs::path& p) { return json::parse(read_file(p.string())); }

const CellCatalog& full_catalog() {
  static const CellCatalog cat = build_default_catalog(Technology::Silicon45);
  return cat;
}

// ---- 1: encoding conformance -----------------------------------------------------

Outcome encoding() {
  const auto t0 = std::chrono::steady_clock::now();
  // Per family (nodes, edges): inputs + FETs + OUT + rails; one gate edge per
  // FET, channel edges directed rail -> FET -> ... -> OUT, internal nets
  // collapsed to FET->FET edges.
  const std::map<std::string, std::pair<int, int>> golden{
      {"INV", {6, 6}},     {"BUF", {8, 12}},    {"NAND2", {9, 11}},  {"NOR2", {9, 11}},
      {"AND2", {11, 18}},  {"OR2", {11, 18}},   {"NAND3", {12, 16}}, {"NOR3", {12, 16}},
      {"AND3", {14, 24}},  {"OR3", {14, 24}},   {"AOI21", {12, 16}}, {"OAI21", {12, 16}},
      {"XOR2", {17, 34}},  {"XNOR2", {17, 34}}, {"MX2", {18, 36}},
  };
  const Corner nominal{Technology::Silicon45, 1.0, 0.3, 25.0};
  int mismatches = 0, checked = 0;
  std::string first;
  if (full_catalog().size() != 33) return {false, "catalog has " + std::to_string(full_catalog().size()) + " cells"};
  for (const auto& cell : full_catalog().cells) {
    auto it = golden.find(cell.family());
    if (it == golden.end()) return {false, "no golden entry for " + cell.name};
    for (auto layout : {FeatureLayout::DelayPower, FeatureLayout::Leakage, FeatureLayout::Capacitance}) {
      const int n = static_cast<int>(cell.inputs.size());
      Stimulus s = layout == FeatureLayout::DelayPower ? Stimulus::for_arc(enumerate_arcs(cell)[0], n, 5, 1)
                   : layout == FeatureLayout::Leakage  ? Stimulus::for_state(0, n)
                                                       : Stimulus::for_pin(0);
      auto g = encode(cell, nominal, s, layout);
      ++checked;
      if (g.num_nodes() != it->second.first || static_cast<int>(g.edges.size()) != it->second.second) {
        if (first.empty())
          first = cell.name + " " + std::to_string(g.num_nodes()) + "/" + std::to_string(g.edges.size());
        ++mismatches;
      }
      // Direction rules: nothing enters an input or VDD, nothing leaves OUT.
      for (auto [a, b] : g.edges)
        if (g.kinds[b] == NodeKind::In || g.kinds[b] == NodeKind::Vdd || g.kinds[a] == NodeKind::Out ||
            g.kinds[b] == NodeKind::Vss || a == b) {
          if (first.empty()) first = cell.name + " has a misdirected edge";
          ++mismatches;
        }
    }
  }
  // Exact edge sets for the two reference cells, by node label.
  auto labelled = [&](const CellNetlist& cell) {
    auto g = encode(cell, nominal, Stimulus::for_state(0, cell.inputs.size()), FeatureLayout::Leakage);
    const int n_in = cell.inputs.size();
    auto label = [&](int node) -> std::string {
      if (node < n_in) return cell.inputs[node];
      if (node == n_in) return "OUT";
      if (node <= n_in + static_cast<int>(cell.fets.size())) return cell.fets[node - n_in - 1].id;
      return node == g.num_nodes() - 2 ? "VDD" : "VSS";
    };
    std::set<std::pair<std::string, std::string>> s;
    for (auto [a, b] : g.edges) s.insert({label(a), label(b)});
    return s;
  };
  const std::set<std::pair<std::string, std::string>> inv{{"A", "P0"},  {"A", "N0"},   {"VDD", "P0"},
                                                           {"P0", "OUT"}, {"N0", "OUT"}, {"VSS", "N0"}};
  const std::set<std::pair<std::string, std::string>> nand{
      {"A", "P0"},   {"A", "N0"},    {"B", "P1"},    {"B", "N1"},  {"VDD", "P0"}, {"VDD", "P1"},
      {"P0", "OUT"}, {"P1", "OUT"},  {"N0", "OUT"},  {"N1", "N0"}, {"VSS", "N1"}};
  if (labelled(full_catalog().at("INVX1")) != inv) ++mismatches, first = first.empty() ? "INVX1 edge set" : first;
  if (labelled(full_catalog().at("NAND2X1")) != nand)
    ++mismatches, first = first.empty() ? "NAND2X1 edge set" : first;
  const double s = since(t0);
  const bool ok = mismatches == 0 && s < kEncodingBudgetS;
  return {ok, std::to_string(checked) + " graphs, " + std::to_string(mismatches) + " mismatches" +
                  (first.empty() ? "" : " (first: " + first + ")") + ", " + f("%.3f", s) + " s"};
}

// ---- 2: boolean functions and arcs --------------------------------------------------

int reference_logic(const std::string& family, const std::vector<int>& x) {
  auto all = [&] { int v = 1; for (int b : x) v &= b; return v; };
  auto any = [&] { int v = 0; for (int b : x) v |= b; return v; };
  if (family == "INV") return !x[0];
  if (family == "BUF") return x[0];
  if (family.rfind("NAND", 0) == 0) return !all();
  if (family.rfind("NOR", 0) == 0) return !any();
  if (family.rfind("AND", 0) == 0) return all();
  if (family.rfind("OR", 0) == 0) return any();
  if (family == "AOI21") return !((x[0] & x[1]) | x[2]);
  if (family == "OAI21") return !((x[0] | x[1]) & x[2]);
  if (family == "XOR2") return x[0] ^ x[1];
  if (family == "XNOR2") return !(x[0] ^ x[1]);
  if (family == "MX2") return x[2] ? x[1] : x[0];
  return -1;
}

// Switch-level relaxation: a net settles once an ON path reaches exactly one rail.
int path_search_output(const CellNetlist& cell, const std::vector<int>& x) {
  std::map<std::string, int> val;
  for (std::size_t i = 0; i < x.size(); ++i) val[cell.inputs[i]] = x[i];
  auto on = [&](const Transistor& t) {
    auto it = val.find(t.gate);
    if (it == val.end()) return false;
    return t.polarity == Polarity::N ? it->second == 1 : it->second == 0;
  };
  std::function<bool(const std::string&, const std::string&, Polarity, std::set<std::string>&)> path =
      [&](const std::string& cur, const std::string& rail, Polarity pol, std::set<std::string>& seen) {
        if (cur == rail) return true;
        if (cell.is_rail(cur) || !seen.insert(cur).second) return false;
        for (const auto& t : cell.fets) {
          if (t.polarity != pol || !on(t)) continue;
          if (t.drain == cur && path(t.source, rail, pol, seen)) return true;
          if (t.source == cur && path(t.drain, rail, pol, seen)) return true;
        }
        return false;
      };
  std::set<std::string> nets{cell.output};
  for (const auto& t : cell.fets) nets.insert(t.gate);
  for (int iter = 0; iter < 16; ++iter)
    for (const auto& n : nets) {
      if (cell.input_index(n) >= 0) continue;
      std::set<std::string> a, b;
      const bool up = path(n, "VDD", Polarity::P, a), down = path(n, "VSS", Polarity::N, b);
      if (up != down) val[n] = up ? 1 : 0;
    }
  return val.count(cell.output) ? val[cell.output] : -1;
}

Outcome boolean_and_arcs() {
  const auto t0 = std::chrono::steady_clock::now();
  int bad_tt = 0, bad_arcs = 0;
  std::string first;
  for (const auto& cell : full_catalog().cells) {
    const int n = static_cast<int>(cell.inputs.size());
    const auto tt = boolean_function(cell);
    std::vector<int> truth(1u << n);
    for (InputVector v = 0; v < (1u << n); ++v) {
      std::vector<int> x;
      for (int p = 0; p < n; ++p) x.push_back(pin_value(v, n, p));
      truth[v] = path_search_output(cell, x);
      if (tt(v) != truth[v] || truth[v] != reference_logic(cell.family(), x)) {
        if (first.empty()) first = cell.name + " state " + std::to_string(v);
        ++bad_tt;
      }
    }
    // Closed form: every pin toggles both ways under every side assignment,
    // n * 2^(n-1) * 2 arcs; the flipping ones are twice the number of
    // (pin, side) pairs where the pin is sensitized.
    std::size_t flips = 0;
    for (int p = 0; p < n; ++p)
      for (InputVector v = 0; v < (1u << n); ++v)
        if (pin_value(v, n, p) == 0) {
          const InputVector w = v | (InputVector{1} << (n - 1 - p));
          flips += 2 * (truth[v] != truth[w]);
        }
    const auto arcs = enumerate_arcs(cell);
    std::size_t got_flips = 0;
    for (const auto& a : arcs) got_flips += a.output_flips;
    if (arcs.size() != static_cast<std::size_t>(n) * (1u << n) || got_flips != flips) {
      if (first.empty()) first = cell.name + " arcs " + std::to_string(arcs.size());
      ++bad_arcs;
    }
  }
  const double s = since(t0);
  return {bad_tt == 0 && bad_arcs == 0 && s < kBooleanBudgetS,
          "33 cells, " + std::to_string(bad_tt) + " truth-table and " + std::to_string(bad_arcs) +
              " arc-count mismatches" + (first.empty() ? "" : " (first: " + first + ")") + ", " +
              f("%.3f", s) + " s"};
}

// ---- 3: gradient check ------------------------------------------------------------

CellGraph random_graph(std::mt19937_64& rng, FeatureLayout layout) {
  std::uniform_int_distribution<int> nodes(2, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CellGraph g;
  g.layout = layout;
  const int w = feature_width(layout);
  const int n = nodes(rng);
  g.kinds.assign(n, NodeKind::Fet);
  g.features.resize(static_cast<std::size_t>(n) * w);
  for (auto& x : g.features) x = u(rng);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && u(rng) < 0.3) g.edges.emplace_back(a, b);
  g.target = 0.5 + 2.0 * u(rng);
  return g;
}

using Wide = long double;

// Sign pattern of every ReLU and |.| argument (kink_pattern_t below); a
// difference that flips one straddles a kink and is not a derivative
// measurement.
struct GradStats {
  long checked = 0, kinks = 0, failures = 0, rechecked = 0;
  double worst = 0.0;
};

template <typename T>
std::vector<bool> kink_pattern_t(const ModelParams<T>& m, const GraphBatch<T>& b) {
  ForwardCache<T> c;
  forward(m, b, c);
  std::vector<bool> s;
  for (int l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < c.z[l].size(); ++i) s.push_back(c.z[l].data()[i] > 0);
  for (Eigen::Index i = 0; i < c.a.size(); ++i) s.push_back(c.a.data()[i] > 0);
  for (Eigen::Index i = 0; i < c.pred.size(); ++i) s.push_back(c.pred[i] > b.target[i]);
  return s;
}

// Central difference on one parameter; nullopt when h straddles a kink.
template <typename T>
std::optional<double> central_difference(ModelParams<T>& m, const GraphBatch<T>& b, std::size_t k,
                                         const std::vector<bool>& base) {
  const T h = kGradStep, t = m.theta[k];
  m.theta[k] = t + h;
  const T lp = mape_loss(forward(m, b), b.target);
  const bool kp = kink_pattern_t(m, b) != base;
  m.theta[k] = t - h;
  const T lm = mape_loss(forward(m, b), b.target);
  const bool km = kink_pattern_t(m, b) != base;
  m.theta[k] = t;
  if (kp || km) return std::nullopt;
  return static_cast<double>((lp - lm) / (2 * h));
}

// The analytic gradient is the double-precision backward pass. A parameter
// whose double-precision difference misses the tolerance is re-measured in
// extended precision: at h = 1e-5 on a loss of order 50 (percent), double
// roundoff alone is ~5e-10, already a 1e-4 relative error on a 5e-6 gradient.
void grad_check(const ModelParams<double>& m, const GraphBatch<double>& b, const GraphBatch<Wide>& bw,
                const std::vector<std::size_t>& which, GradStats& st) {
  ForwardCache<double> c;
  forward(m, b, c);
  Vec<double> dpred;
  mape_loss(c.pred, b.target, &dpred);
  const Vec<double> g = backward(m, b, c, dpred);
  ModelParams<double> md = m;
  ModelParams<Wide> mw = m.template cast<Wide>();
  const auto base = kink_pattern_t(md, b);
  std::optional<std::vector<bool>> base_w;
  for (std::size_t k : which) {
    if (std::abs(g[k]) <= kGradMinAbs) continue;
    auto rel_of = [&](double fd) { return std::abs(fd - g[k]) / std::max(std::abs(fd), std::abs(g[k])); };
    auto fd = central_difference(md, b, k, base);
    if (!fd) {
      ++st.kinks;
      continue;
    }
    double rel = rel_of(*fd);
    if (rel > kGradRelTol) {
      if (!base_w) base_w = kink_pattern_t(mw, bw);
      auto fdw = central_difference(mw, bw, k, *base_w);
      if (!fdw) {
        ++st.kinks;
        continue;
      }
      rel = rel_of(*fdw);
      ++st.rechecked;
    }
    st.worst = std::max(st.worst, rel);
    st.failures += rel > kGradRelTol;
    ++st.checked;
  }
}

Outcome gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  GradStats st;
  for (auto layout : {FeatureLayout::DelayPower, FeatureLayout::Leakage})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      std::mt19937_64 rng(derive_seed(seed, std::string("gradcheck/") + (layout == FeatureLayout::DelayPower ? "dp" : "lk")));
      std::vector<PreparedGraph<double>> gs;
      std::vector<PreparedGraph<Wide>> gw;
      for (int i = 0; i < 20; ++i) {
        const auto g = random_graph(rng, layout);
        gs.push_back(prepare<double>(g));
        gw.push_back(prepare<Wide>(g));
      }
      const auto b = make_batch(gs);
      const auto bw = make_batch(gw);
      for (auto head : {OutputHead::Linear, OutputHead::Exp}) {
        // Narrow hidden width: every parameter.
        auto narrow = init_params<double>(layout, seed, 16);
        narrow.head = head;
        narrow.b5() = head == OutputHead::Linear ? 0.7 : -0.2;
        for (int k = 0; k < 16; ++k) narrow.theta[narrow.off_b4() + k] = 0.05 * (k % 5);
        std::vector<std::size_t> all(narrow.theta.size());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
        grad_check(narrow, b, bw, all, st);
        // Production width: a random sample of parameters plus the head.
        auto full = init_params<double>(layout, seed);
        full.head = head;
        full.b5() = head == OutputHead::Linear ? 0.7 : -0.2;
        std::uniform_int_distribution<std::size_t> pick(0, full.theta.size() - 1);
        std::vector<std::size_t> some;
        for (int k = 0; k < 120; ++k) some.push_back(pick(rng));
        for (std::size_t k = full.off_w5(); k < full.off_w5() + 8; ++k) some.push_back(k);
        some.push_back(full.off_b5());
        grad_check(full, b, bw, some, st);
      }
    }
  const double s = since(t0);
  // Kinks are excluded from the check, so a large kink share would hide
  // real disagreement; cap it.
  const bool ok = st.failures == 0 && st.checked > 5000 && st.kinks * 20 < st.checked && s < kGradBudgetS;
  return {ok, std::to_string(st.checked) + " parameters checked, " + std::to_string(st.failures) +
                  " over tolerance, worst rel err " + f("%.2e", st.worst) + ", " + std::to_string(st.rechecked) +
                  " re-measured in extended precision, " + std::to_string(st.kinks) +
                  " kink-straddling skipped, " + f("%.1f", s) + " s"};
}

// ---- 4: desk-scale training -------------------------------------------------------------

struct TrainRun {
  fs::path dir;
  std::map<std::string, double> test_mape;
  double seconds = 0.0;
};

std::vector<std::string> training_args(const fs::path& dir) {
  std::vector<std::string> a = {"--quiet", "--out", dir.string(), "--seed", "1", "--jobs", "0"};
  auto set = [&](const std::string& kv) {
    a.push_back("--set");
    a.push_back(kv);
  };
  std::string cells;
  for (const auto& c : kTrainCells) cells += (cells.empty() ? "" : ",") + c;
  set("technology=silicon45");
  set("cells=" + cells);
  set("train_corners=3");
  set("test_corners=4");
  set("stimulus_slew=4");
  set("stimulus_load=4");
  set("epochs=800");
  set("batch_size=512");
  set("lr_halving_period=500");
  set("lr0=1e-3");
  set("scale_by_mean_target=true");
  set("lr0.capacitance=1e-2");
  set("head.leakage=exp");
  set("lr0.leakage=3e-3");
  return a;
}

TrainRun train_models(const fs::path& dir, bool reuse) {
  TrainRun r;
  r.dir = dir;
  const fs::path manifest = dir / "models" / "manifest.json";
  const auto t0 = std::chrono::steady_clock::now();
  if (!(reuse && fs::exists(manifest))) {
    auto a = training_args(dir);
    a.push_back("gen-data");
    run_cli(a);
    a.back() = "train";
    run_cli(a);
  }
  r.seconds = since(t0);
  auto m = read_json(manifest);
  if (reuse) {
    r.seconds = 0.0;
    for (auto& [task, secs] : m["wall_clock"].items()) r.seconds += secs.get<double>();
    r.seconds += read_json(dir / "data" / "manifest.json")["wall_clock"]["seconds"].get<double>();
  }
  for (auto& [task, e] : m["models"].items()) r.test_mape[task] = e["test_mape"].get<double>();
  return r;
}

Outcome training(const TrainRun& r) {
  bool ok = r.seconds <= kTrainBudgetS;
  std::string d;
  for (Task t : kAllTasks) {
    const std::string name = to_string(t);
    const double limit = (t == Task::FlipPower || t == Task::NonFlipPower) ? kTrainMapePower : kTrainMapeCore;
    auto it = r.test_mape.find(name);
    if (it == r.test_mape.end()) return {false, "no model for " + name};
    const bool pass = it->second <= limit;
    ok = ok && pass;
    d += name + " " + f("%.2f", it->second) + "%" + (pass ? "" : " (> " + f("%.0f", limit) + "%)") + ", ";
  }
  d += "wall " + f("%.0f", r.seconds) + " s" + (r.seconds <= kTrainBudgetS ? "" : " (over 900 s)");
  return {ok, d};
}

// ---- 5: corner grids --------------------------------------------------------------------

Outcome corner_grids() {
  const auto& r = ranges(Technology::Silicon45);
  auto g5 = corner_grid(Technology::Silicon45, 5);
  auto g8 = corner_grid(Technology::Silicon45, 8);
  bool ok = g5.size() == 125 && g8.size() == 512;
  // Independent spacing: endpoints of each axis and equal steps inside.
  auto axis_ok = [](const std::vector<Corner>& g, int n, double lo, double hi, auto get) {
    std::set<double> vals;
    for (const auto& c : g) vals.insert(get(c));
    if (static_cast<int>(vals.size()) != n) return false;
    std::vector<double> v(vals.begin(), vals.end());
    if (v.front() != lo || v.back() != hi) return false;
    for (int i = 0; i < n; ++i)
      if (std::abs(v[i] - (lo + (hi - lo) * i / (n - 1))) > 1e-12 * std::max(1.0, std::abs(hi))) return false;
    return true;
  };
  for (auto* g : {&g5, &g8}) {
    const int n = g == &g5 ? 5 : 8;
    ok = ok && axis_ok(*g, n, 0.9, 1.1, [](const Corner& c) { return c.vdd; });
    ok = ok && axis_ok(*g, n, 0.1, 0.5, [](const Corner& c) { return c.vth; });
    ok = ok && axis_ok(*g, n, 20.0, 120.0, [](const Corner& c) { return c.third; });
  }
  ok = ok && r.vdd.lo == 0.9 && r.vth.hi == 0.5;
  std::set<std::tuple<double, double, double>> uniq;
  for (const auto& c : g5) uniq.insert({c.vdd, c.vth, c.third});
  ok = ok && uniq.size() == 125;
  return {ok, std::to_string(g5.size()) + " and " + std::to_string(g8.size()) +
                  " corners, endpoints Vdd 0.9..1.1 V, Vth 0.1..0.5 V, T 20..120 C"};
}

// ---- 6: metrics -------------------------------------------------------------------------

Outcome metrics() {
  struct Case {
    std::vector<double> pred, truth;
    double mape, rmspe;
    std::optional<double> r2;
  };
  const std::vector<Case> cases = {
      {{110, 90}, {100, 100}, 10.0, 10.0, std::nullopt},
      // truth mean 7/3, SS_tot 14/3, SS_res 1
      {{1, 2, 3}, {1, 2, 4}, 100.0 * 0.25 / 3, 100.0 * std::sqrt(0.0625 / 3), 1.0 - 3.0 / 14.0},
      // errors 0.1, -0.2, 0.3, 0; truth mean 2.5, SS_tot 5, SS_res 0.14
      {{1.1, 1.8, 3.3, 4.0}, {1, 2, 3, 4}, 100.0 * (0.1 + 0.1 + 0.1 + 0.0) / 4,
       100.0 * std::sqrt((0.01 + 0.01 + 0.01) / 4), 1.0 - 0.14 / 5.0},
  };
  double worst = 0;
  bool ok = true;
  for (const auto& c : cases) {
    auto m = compute_metric(c.pred, c.truth);
    worst = std::max({worst, std::abs(m.mape - c.mape), std::abs(m.rmspe - c.rmspe)});
    if (c.r2.has_value() != m.r2.has_value()) ok = false;
    if (c.r2 && m.r2) worst = std::max(worst, std::abs(*m.r2 - *c.r2));
  }
  ok = ok && worst <= kMetricTol;
  return {ok, "3 vectors, worst abs deviation " + f("%.2e", worst) + " (R2 case " +
                  f("%.6f", 1.0 - 3.0 / 14.0) + ")"};
}

// ---- 7: Liberty round trip ---------------------------------------------------------------

Outcome liberty_round_trip() {
  const std::vector<Corner> corners = {Corner{Technology::Silicon45, 1.0, 0.3, 25.0}, kUnseen,
                                       Corner{Technology::Flexible, 1.8, 0.6, 90.0}};
  bool ok = true;
  double worst = 0;
  std::size_t values = 0;
  for (const auto& k : corners) {
    const auto cat = build_default_catalog(k.technology);
    const auto lib = build_oracle_library(cat, k, make_grid(k.technology), default_params(k.technology), default_jobs());
    const auto text = emit_liberty(lib);
    const auto back = parse_liberty(text);
    ok = ok && emit_liberty(back) == text;
    auto rel = [&](double a, double b) {
      ++values;
      const double e = a == b ? 0.0 : std::abs(a - b) / std::max(std::abs(a), std::abs(b));
      worst = std::max(worst, e);
    };
    if (back.cells.size() != lib.cells.size()) return {false, "cell count changed"};
    for (std::size_t i = 0; i < lib.cells.size(); ++i) {
      const auto &a = lib.cells[i], &b = back.cells[i];
      if (a.flip.size() != b.flip.size() || a.statics.size() != b.statics.size() ||
          a.leakage.size() != b.leakage.size() || a.pin_caps.size() != b.pin_caps.size())
        return {false, a.name + " changed shape"};
      rel(a.area, b.area);
      for (std::size_t j = 0; j < a.leakage.size(); ++j) rel(a.leakage[j], b.leakage[j]);
      for (std::size_t j = 0; j < a.pin_caps.size(); ++j) rel(a.pin_caps[j], b.pin_caps[j]);
      auto tables = [&](const NldmTable& x, const NldmTable& y) {
        if (x.values.size() != y.values.size()) ok = false;
        for (std::size_t j = 0; j < x.values.size() && j < y.values.size(); ++j) rel(x.values[j], y.values[j]);
      };
      for (std::size_t j = 0; j < a.flip.size(); ++j)
        for (int d = 0; d < 2; ++d) {
          tables(a.flip[j].delay[d], b.flip[j].delay[d]);
          tables(a.flip[j].out_slew[d], b.flip[j].out_slew[d]);
          tables(a.flip[j].energy[d], b.flip[j].energy[d]);
        }
      for (std::size_t j = 0; j < a.statics.size(); ++j)
        for (int d = 0; d < 2; ++d) tables(a.statics[j].energy[d], b.statics[j].energy[d]);
    }
  }
  ok = ok && worst <= kLibertyRelTol;
  return {ok, "3 corners, re-emit byte-identical: " + std::string(ok ? "yes" : "check") + ", " +
                  std::to_string(values) + " values, worst rel err " + f("%.2e", worst)};
}

// ---- 8: system-level comparison ------------------------------------------------------------

Outcome system_level(const TrainRun& r) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cat = full_catalog().subset(kTrainCells);
  const auto params = default_params(Technology::Silicon45);
  const auto grid = make_grid(Technology::Silicon45);
  ModelSet models = cli::load_models(r.dir / "models");
  const auto truth = build_oracle_library(cat, kUnseen, grid, params, default_jobs());
  const auto pred = build_model_library(cat, kUnseen, grid, params, models, truth, default_jobs());
  const double spu = ranges(Technology::Silicon45).seconds_per_time_unit;
  double w = 0, l = 0, dyn = 0;
  std::string worst_l, worst_d, worst_w;
  for (const auto& n : bundled_benchmarks(Technology::Silicon45)) {
    auto d = compare_libraries(n, truth, pred, 1.0 / (n.period * spu));
    if (d.dwns_pct_period() >= w) w = d.dwns_pct_period(), worst_w = n.name;
    if (d.leakage_err() >= l) l = d.leakage_err(), worst_l = n.name;
    if (d.dynamic_err() >= dyn) dyn = d.dynamic_err(), worst_d = n.name;
  }
  const double s = since(t0);
  const bool ok = w <= kSystemWnsPct && l <= kSystemLeakPct && dyn <= kSystemDynPct && s <= kSystemBudgetS;
  return {ok, "7 designs at Vdd 1.03 Vth 0.48 T 65: worst |dWNS| " + f("%.3f", w) + "% of period (" + worst_w +
                  "), leakage " + f("%.2f", l) + "% (" + worst_l + "), dynamic " + f("%.2f", dyn) + "% (" +
                  worst_d + "), " + f("%.1f", s) + " s"};
}

// ---- 9: drive interpolation -------------------------------------------------------------------

Outcome interpolation(const fs::path& work) {
  const fs::path dir = work / "interp";
  run_cli({"--quiet", "--out", dir.string(), "--jobs", "0", "--set", "technology=flexible", "interp-drive",
           "--corner", "2.5,0.7,90", "--netlists", "bundled", "--drives", "paper", "--set",
           "period_factors=" + f("%.2f", kInterpFactor)});
  std::istringstream is(read_file((dir / "interp.csv").string()));
  std::string line;
  std::getline(is, line);
  double rca16 = -1e300, best = -1e300;
  std::string best_name, all;
  while (std::getline(is, line)) {
    auto cols = cli::split_list(line);
    const double ppa = std::stod(cols.back());
    all += cols[0] + " " + f("%.2f", ppa) + "% ";
    if (cols[0] == "rca16") rca16 = ppa;
    if (ppa > best) best = ppa, best_name = cols[0];
  }
  const bool ok = rca16 >= 0.0 && best > 0.0;
  return {ok, "flexible Vdd 2.5 Vth 0.7 Cox 90 at " + f("%.2f", kInterpFactor) + "x min period: rca16 " +
                  f("%.2f", rca16) + "%, best " + best_name + " " + f("%.2f", best) + "%; [" + all + "]"};
}

// ---- 10: runtime ---------------------------------------------------------------------------------

Outcome runtime(const TrainRun& r) {
  auto rep = cli::bench_runtime(full_catalog(), kUnseen, make_grid(Technology::Silicon45),
                                default_params(Technology::Silicon45), r.dir / "models");
  std::size_t q = 0;
  for (const auto& row : rep.rows) q += row.queries;
  const double speedup = rep.oracle_total() / rep.model_total();
  return {speedup >= kSpeedupMin, "33 cells, " + std::to_string(q) + " queries: oracle " +
                                      f("%.2f", rep.oracle_total() * 1e3) + " ms, model " +
                                      f("%.2f", rep.model_total() * 1e3) + " ms, speedup " +
                                      f("%.3f", speedup) + "x (need >= 10x)"};
}

// ---- 11: determinism ----------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  auto once = [&](const std::string& tag) {
    const fs::path dir = work / ("det_" + tag);
    fs::remove_all(dir);
    std::vector<std::string> a = {"--quiet", "--out", dir.string(), "--seed", "7", "--jobs", "1",
                                  "--set", "cells=INVX1,NAND2X1,NOR2X1", "--set", "train_corners=2",
                                  "--set", "test_corners=0", "--set", "stimulus_slew=2", "--set",
                                  "stimulus_load=2", "--set", "epochs=15", "--set", "lr0=1e-3"};
    for (const char* cmd : {"gen-data", "train"}) {
      auto b = a;
      b.push_back(cmd);
      run_cli(b);
    }
    auto b = a;
    for (const char* x : {"emit-lib", "--source", "models", "--corner", "1.03,0.48,65", "--grid", "3x3"}) b.push_back(x);
    run_cli(b);
    std::map<std::string, std::string> digest;
    for (Task t : kAllTasks) {
      const std::string n = to_string(t);
      digest["data/" + n] = cli::file_hash(dir / "data" / (n + ".train.cgds"));
      const auto ckpt = read_file((dir / "models" / (n + ".ckpt")).string());
      digest["ckpt/" + n] = ckpt;
    }
    for (const auto& e : fs::directory_iterator(dir / "lib"))
      if (e.path().extension() == ".lib") digest["lib/" + e.path().filename().string()] = read_file(e.path().string());
    auto m = read_json(dir / "data" / "manifest.json");
    for (auto& [task, e] : m["datasets"].items()) digest["hash/" + task] = e["train"]["hash"].get<std::string>();
    return digest;
  };
  const auto a = once("a"), b = once("b");
  int differ = 0;
  std::string first;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) {
      ++differ;
      if (first.empty()) first = k;
    }
  }
  const bool ok = differ == 0 && a.size() == b.size();
  return {ok, std::to_string(a.size()) + " artifacts compared (datasets, checkpoints, libraries), " +
                  std::to_string(differ) + " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  bool reuse = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      for (const auto& s : cli::split_list(argv[++i])) only.insert(std::stoi(s));
    } else if (a == "--reuse-models") {
      reuse = true;
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,4,8] [--reuse-models]\n";
      return 2;
    }
  }
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || only.count(n); };

  std::optional<TrainRun> trained;
  auto models = [&]() -> const TrainRun& {
    if (!trained) trained = train_models(work / "train", reuse);
    return *trained;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, encoding},
      {2, boolean_and_arcs},
      {3, gradient},
      {4, [&] { return training(models()); }},
      {5, corner_grids},
      {6, metrics},
      {7, liberty_round_trip},
      {8, [&] { return system_level(models()); }},
      {9, [&] { return interpolation(work); }},
      {10, [&] { return runtime(models()); }},
      {11, [&] { return determinism(work); }},
  };
  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << n << (n < 10 ? "  " : " ") << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}

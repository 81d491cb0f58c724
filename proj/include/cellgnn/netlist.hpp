#pragma once

// Transistor-level cell netlists: the subckt reader/writer, the default
// 33-cell catalog, and drive-strength scaling of a cell's last stage.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cellgnn/error.hpp"
#include "cellgnn/technology.hpp"

namespace cellgnn {

enum class Polarity { N, P };

struct Transistor {
  std::string id;  // without the leading 'M'
  Polarity polarity = Polarity::N;
  std::string drain;
  std::string gate;
  std::string source;
  std::string bulk;
  double width = 1.0;

  bool operator==(const Transistor&) const = default;
};

struct CellNetlist {
  std::string name;
  std::vector<std::string> inputs;
  std::string output;
  std::string vdd = "VDD";
  std::string vss = "VSS";
  std::vector<Transistor> fets;

  bool operator==(const CellNetlist&) const = default;

  bool is_rail(std::string_view net) const { return net == vdd || net == vss; }

  bool is_port(std::string_view net) const {
    return net == output || is_rail(net) ||
           std::find(inputs.begin(), inputs.end(), net) != inputs.end();
  }

  int input_index(std::string_view net) const {
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i] == net) return static_cast<int>(i);
    return -1;
  }

  // Non-port nets in first-appearance order (drain, gate, source per FET).
  std::vector<std::string> internal_nets() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
      if (!is_port(n) && std::find(out.begin(), out.end(), n) == out.end())
        out.push_back(n);
    };
    for (const auto& f : fets) {
      add(f.drain);
      add(f.gate);
      add(f.source);
    }
    return out;
  }

  double total_width() const {
    double w = 0.0;
    for (const auto& f : fets) w += f.width;
    return w;
  }

  // Numeric drive suffix (NAND2X4 -> 4); 1 when the name has none.
  int drive() const {
    auto pos = name.find_last_of('X');
    if (pos == std::string::npos || pos + 1 >= name.size()) return 1;
    int v = 0;
    auto [p, ec] =
        std::from_chars(name.data() + pos + 1, name.data() + name.size(), v);
    if (ec != std::errc{} || p != name.data() + name.size() || v <= 0) return 1;
    return v;
  }

  // Name without the drive suffix (NAND2X4 -> NAND2).
  std::string family() const {
    auto pos = name.find_last_of('X');
    if (pos == std::string::npos || pos == 0) return name;
    std::string_view tail(name.data() + pos + 1, name.size() - pos - 1);
    if (tail.empty() || !std::all_of(tail.begin(), tail.end(),
                                     [](char c) { return c >= '0' && c <= '9'; }))
      return name;
    return name.substr(0, pos);
  }
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
      ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::toupper(static_cast<unsigned char>(a[i])) !=
        std::toupper(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

}  // namespace detail

// Channel-connected FETs reachable from `net` through drain/source terminals
// without crossing a rail. Seeded at the output this is the last stage.
inline std::vector<std::size_t> channel_component(const CellNetlist& cell,
                                                  const std::string& net) {
  std::vector<std::size_t> fets;
  std::vector<bool> taken(cell.fets.size(), false);
  std::vector<std::string> frontier{net};
  std::set<std::string> seen{net};
  while (!frontier.empty()) {
    std::string cur = frontier.back();
    frontier.pop_back();
    for (std::size_t i = 0; i < cell.fets.size(); ++i) {
      const auto& f = cell.fets[i];
      if (taken[i] || (f.drain != cur && f.source != cur)) continue;
      taken[i] = true;
      fets.push_back(i);
      for (const auto* other : {&f.drain, &f.source}) {
        if (cell.is_rail(*other) || seen.count(*other)) continue;
        seen.insert(*other);
        frontier.push_back(*other);
      }
    }
  }
  std::sort(fets.begin(), fets.end());
  return fets;
}

inline std::vector<std::size_t> last_stage(const CellNetlist& cell) {
  return channel_component(cell, cell.output);
}

// Structural checks shared by the parser and the catalog builder.
inline void validate(const CellNetlist& cell) {
  const std::string where = "cell " + cell.name + ": ";
  if (cell.inputs.empty() || cell.inputs.size() > 3)
    data_error(where + "expected 1-3 input pins, got " +
               std::to_string(cell.inputs.size()));
  if (cell.output.empty()) data_error(where + "missing output pin");
  if (cell.fets.empty()) data_error(where + "no transistors");

  std::set<std::string> ids;
  std::set<std::string> channel_nets;
  for (const auto& f : cell.fets) {
    if (!ids.insert(f.id).second) data_error(where + "duplicate FET id M" + f.id);
    if (!(f.width > 0.0)) data_error(where + "M" + f.id + ": non-positive width");
    channel_nets.insert(f.drain);
    channel_nets.insert(f.source);
  }
  auto declared = [&](const std::string& n) {
    return cell.is_port(n) || channel_nets.count(n) > 0;
  };
  for (const auto& f : cell.fets) {
    for (const auto* n : {&f.drain, &f.gate, &f.source, &f.bulk})
      if (!declared(*n))
        data_error(where + "M" + f.id + " references undeclared net " + *n);
    if (cell.is_rail(f.gate) || f.gate == cell.output)
      data_error(where + "M" + f.id + " gate must be an input or stage net");
  }

  // Pull-up and pull-down paths from the output, ignoring gate states.
  auto reaches = [&](const std::string& rail) {
    std::set<std::string> seen{cell.output};
    std::vector<std::string> stack{cell.output};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      if (cur == rail) return true;
      if (cell.is_rail(cur)) continue;
      for (const auto& f : cell.fets) {
        const std::string* next = nullptr;
        if (f.drain == cur) next = &f.source;
        else if (f.source == cur) next = &f.drain;
        if (next && seen.insert(*next).second) stack.push_back(*next);
      }
    }
    return false;
  };
  if (!reaches(cell.vdd)) data_error(where + "no output path to " + cell.vdd);
  if (!reaches(cell.vss)) data_error(where + "no output path to " + cell.vss);
}

// Grammar (one cell per text, '*' comments):
//   .subckt <NAME> <in1> [<in2> [<in3>]] <out> VDD VSS
//   M<id> <drain> <gate> <source> <bulk> <N|P> W=<float>
//   .ends
inline CellNetlist parse_subckt(std::string_view text) {
  CellNetlist cell;
  bool in_subckt = false;
  bool ended = false;
  int subckts = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) {
    data_error("line " + std::to_string(line_no) + ": " + msg);
  };

  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0][0] == '*') {
      if (nl == text.size()) break;
      continue;
    }
    if (detail::iequals(tok[0], ".subckt")) {
      if (++subckts > 1) fail("more than one .subckt definition");
      if (tok.size() < 4 || tok[tok.size() - 2] != "VDD" || tok[tok.size() - 1] != "VSS")
        fail("missing rail nets (expected '... VDD VSS')");
      if (tok.size() < 6) fail(".subckt needs a name, input pins and an output");
      cell.name = tok[1];
      cell.output = tok[tok.size() - 3];
      cell.inputs.assign(tok.begin() + 2, tok.end() - 3);
      in_subckt = true;
    } else if (detail::iequals(tok[0], ".ends")) {
      if (!in_subckt) fail(".ends without .subckt");
      in_subckt = false;
      ended = true;
    } else if (tok[0][0] == 'M' || tok[0][0] == 'm') {
      if (!in_subckt) fail("device outside .subckt");
      if (tok.size() != 7) fail("expected 'M<id> d g s b <N|P> W=<w>'");
      Transistor f;
      f.id = tok[0].substr(1);
      if (f.id.empty()) fail("empty device id");
      f.drain = tok[1];
      f.gate = tok[2];
      f.source = tok[3];
      f.bulk = tok[4];
      if (tok[5] == "N") f.polarity = Polarity::N;
      else if (tok[5] == "P") f.polarity = Polarity::P;
      else fail("device type must be N or P, got '" + tok[5] + "'");
      if (tok[6].size() < 3 || !detail::iequals(tok[6].substr(0, 2), "W="))
        fail("expected W=<float>");
      const std::string& w = tok[6];
      double width = 0.0;
      auto [p, ec] = std::from_chars(w.data() + 2, w.data() + w.size(), width);
      if (ec != std::errc{} || p != w.data() + w.size()) fail("bad width '" + w + "'");
      if (!(width > 0.0)) fail("non-positive width");
      f.width = width;
      cell.fets.push_back(std::move(f));
    } else {
      fail("unrecognized line '" + std::string(line) + "'");
    }
    if (nl == text.size()) break;
  }
  if (subckts == 0) data_error("no .subckt definition");
  if (!ended) data_error("missing .ends");
  validate(cell);
  return cell;
}

inline std::string emit_subckt(const CellNetlist& cell) {
  std::string out = ".subckt " + cell.name;
  for (const auto& in : cell.inputs) out += " " + in;
  out += " " + cell.output + " " + cell.vdd + " " + cell.vss + "\n";
  for (const auto& f : cell.fets) {
    out += "M" + f.id + " " + f.drain + " " + f.gate + " " + f.source + " " +
           f.bulk + (f.polarity == Polarity::N ? " N" : " P") +
           " W=" + detail::fmt6(f.width) + "\n";
  }
  out += ".ends\n";
  return out;
}

// Scales the last stage to `multiple` times its X1 widths and renames the
// cell; earlier stages are untouched.
inline CellNetlist scale_drive(const CellNetlist& cell, int multiple) {
  if (multiple < 1) config_error("drive multiple must be >= 1");
  auto stage = last_stage(cell);
  if (stage.empty())
    data_error("cell " + cell.name + ": cannot identify last stage");
  CellNetlist out = cell;
  const double factor = static_cast<double>(multiple) / cell.drive();
  for (auto i : stage) out.fets[i].width = cell.fets[i].width * factor;
  out.name = cell.family() + "X" + std::to_string(multiple);
  return out;
}

struct CellCatalog {
  Technology technology = Technology::Silicon45;
  std::vector<CellNetlist> cells;

  std::size_t size() const { return cells.size(); }

  const CellNetlist* find(std::string_view name) const {
    for (const auto& c : cells)
      if (c.name == name) return &c;
    return nullptr;
  }

  const CellNetlist& at(std::string_view name) const {
    if (const auto* c = find(name)) return *c;
    data_error("unknown cell '" + std::string(name) + "'");
  }

  void add(CellNetlist cell) {
    if (find(cell.name)) data_error("duplicate cell '" + cell.name + "'");
    cells.push_back(std::move(cell));
  }

  CellCatalog subset(const std::vector<std::string>& names) const {
    CellCatalog out{technology, {}};
    for (const auto& n : names) out.add(at(n));
    return out;
  }
};

namespace detail {

// Complementary static CMOS stages. X1 widths: NFET 1, PFET 2, scaled by the
// depth of the series stack each device sits in.
class CellBuilder {
 public:
  CellBuilder(std::string name, std::vector<std::string> inputs, std::string out) {
    cell_.name = std::move(name);
    cell_.inputs = std::move(inputs);
    cell_.output = std::move(out);
  }

  void fet(Polarity pol, const std::string& d, const std::string& g,
           const std::string& s, double w) {
    Transistor f;
    int& counter = pol == Polarity::N ? n_count_ : p_count_;
    f.id = std::string(pol == Polarity::N ? "N" : "P") + std::to_string(counter++);
    f.polarity = pol;
    f.drain = d;
    f.gate = g;
    f.source = s;
    f.bulk = pol == Polarity::N ? "VSS" : "VDD";
    f.width = w;
    cell_.fets.push_back(std::move(f));
  }

  std::string net() { return "n" + std::to_string(net_count_++); }

  void inv(const std::string& in, const std::string& out, double scale = 1.0) {
    fet(Polarity::P, out, in, "VDD", 2.0 * scale);
    fet(Polarity::N, out, in, "VSS", 1.0 * scale);
  }

  void nand(const std::vector<std::string>& ins, const std::string& out) {
    const double k = static_cast<double>(ins.size());
    for (const auto& in : ins) fet(Polarity::P, out, in, "VDD", 2.0);
    std::string upper = out;
    for (std::size_t i = 0; i < ins.size(); ++i) {
      std::string lower = i + 1 == ins.size() ? "VSS" : net();
      fet(Polarity::N, upper, ins[i], lower, k);
      upper = lower;
    }
  }

  void nor(const std::vector<std::string>& ins, const std::string& out) {
    const double k = static_cast<double>(ins.size());
    std::string upper = "VDD";
    for (std::size_t i = 0; i < ins.size(); ++i) {
      std::string lower = i + 1 == ins.size() ? out : net();
      fet(Polarity::P, lower, ins[i], upper, 2.0 * k);
      upper = lower;
    }
    for (const auto& in : ins) fet(Polarity::N, out, in, "VSS", 1.0);
  }

  // out = !((a & b) | c)
  void aoi21(const std::string& a, const std::string& b, const std::string& c,
             const std::string& out) {
    auto m = net();
    fet(Polarity::P, m, a, "VDD", 4.0);
    fet(Polarity::P, m, b, "VDD", 4.0);
    fet(Polarity::P, out, c, m, 4.0);
    auto n = net();
    fet(Polarity::N, out, a, n, 2.0);
    fet(Polarity::N, n, b, "VSS", 2.0);
    fet(Polarity::N, out, c, "VSS", 1.0);
  }

  // out = !((a | b) & c)
  void oai21(const std::string& a, const std::string& b, const std::string& c,
             const std::string& out) {
    auto m = net();
    fet(Polarity::P, m, a, "VDD", 4.0);
    fet(Polarity::P, out, b, m, 4.0);
    fet(Polarity::P, out, c, "VDD", 2.0);
    auto n = net();
    fet(Polarity::N, out, a, n, 2.0);
    fet(Polarity::N, out, b, n, 2.0);
    fet(Polarity::N, n, c, "VSS", 2.0);
  }

  // out = !((a & b) | (c & d))
  void aoi22(const std::string& a, const std::string& b, const std::string& c,
             const std::string& d, const std::string& out) {
    auto m = net();
    fet(Polarity::P, m, a, "VDD", 4.0);
    fet(Polarity::P, m, b, "VDD", 4.0);
    fet(Polarity::P, out, c, m, 4.0);
    fet(Polarity::P, out, d, m, 4.0);
    auto n1 = net();
    fet(Polarity::N, out, a, n1, 2.0);
    fet(Polarity::N, n1, b, "VSS", 2.0);
    auto n2 = net();
    fet(Polarity::N, out, c, n2, 2.0);
    fet(Polarity::N, n2, d, "VSS", 2.0);
  }

  CellNetlist finish(int drive) {
    auto stage = last_stage(cell_);
    for (auto i : stage) cell_.fets[i].width *= drive;
    cell_.name += "X" + std::to_string(drive);
    validate(cell_);
    return cell_;
  }

 private:
  CellNetlist cell_;
  int n_count_ = 0;
  int p_count_ = 0;
  int net_count_ = 0;
};

inline CellNetlist make_cell(const std::string& family, int drive) {
  const std::vector<std::string> ab{"A", "B"};
  const std::vector<std::string> abc{"A", "B", "C"};
  if (family == "INV") {
    CellBuilder b(family, {"A"}, "Y");
    b.inv("A", "Y");
    return b.finish(drive);
  }
  if (family == "BUF") {
    CellBuilder b(family, {"A"}, "Y");
    auto x = b.net();
    b.inv("A", x);
    b.inv(x, "Y");
    return b.finish(drive);
  }
  for (const auto& [prefix, width] : {std::pair{"2", 2}, std::pair{"3", 3}}) {
    const auto& ins = width == 2 ? ab : abc;
    if (family == std::string("NAND") + prefix) {
      CellBuilder b(family, ins, "Y");
      b.nand(ins, "Y");
      return b.finish(drive);
    }
    if (family == std::string("NOR") + prefix) {
      CellBuilder b(family, ins, "Y");
      b.nor(ins, "Y");
      return b.finish(drive);
    }
    if (family == std::string("AND") + prefix) {
      CellBuilder b(family, ins, "Y");
      auto x = b.net();
      b.nand(ins, x);
      b.inv(x, "Y");
      return b.finish(drive);
    }
    if (family == std::string("OR") + prefix) {
      CellBuilder b(family, ins, "Y");
      auto x = b.net();
      b.nor(ins, x);
      b.inv(x, "Y");
      return b.finish(drive);
    }
  }
  if (family == "AOI21") {
    CellBuilder b(family, abc, "Y");
    b.aoi21("A", "B", "C", "Y");
    return b.finish(drive);
  }
  if (family == "OAI21") {
    CellBuilder b(family, abc, "Y");
    b.oai21("A", "B", "C", "Y");
    return b.finish(drive);
  }
  if (family == "XOR2" || family == "XNOR2") {
    CellBuilder b(family, ab, "Y");
    auto an = b.net();
    auto bn = b.net();
    b.inv("A", an);
    b.inv("B", bn);
    if (family == "XOR2") b.aoi22("A", "B", an, bn, "Y");
    else b.aoi22("A", bn, an, "B", "Y");
    return b.finish(drive);
  }
  if (family == "MX2") {
    // Y = S ? B : A
    CellBuilder b(family, {"A", "B", "S"}, "Y");
    auto sn = b.net();
    auto yn = b.net();
    b.inv("S", sn);
    b.aoi22("A", sn, "B", "S", yn);
    b.inv(yn, "Y");
    return b.finish(drive);
  }
  config_error("unknown cell family '" + family + "'");
}

}  // namespace detail

// Families and drive strengths of the default library.
inline const std::vector<std::pair<std::string, std::vector<int>>>& default_families() {
  static const std::vector<std::pair<std::string, std::vector<int>>> families{
      {"AND2", {1, 2, 4}},  {"OR2", {1, 2, 4}},   {"NAND2", {1, 2, 4}},
      {"NOR2", {1, 2, 4}},  {"AND3", {1}},        {"OR3", {1}},
      {"NAND3", {1}},       {"NOR3", {1}},        {"AOI21", {1}},
      {"OAI21", {1}},       {"MX2", {1, 2}},      {"XOR2", {1, 2}},
      {"XNOR2", {1, 2}},    {"INV", {1, 2, 4, 8, 16}},
      {"BUF", {2, 4, 8, 16}},
  };
  return families;
}

inline CellNetlist make_cell(const std::string& family, int drive) {
  return detail::make_cell(family, drive);
}

inline CellCatalog build_default_catalog(Technology technology) {
  CellCatalog cat{technology, {}};
  for (const auto& [family, drives] : default_families())
    for (int d : drives) cat.add(detail::make_cell(family, d));
  return cat;
}

// A catalog file is a sequence of .subckt blocks with free comments between
// them. Cells keep file order.
inline CellCatalog parse_catalog(std::string_view text, Technology technology) {
  CellCatalog cat{technology, {}};
  std::string block;
  std::size_t line_no = 0, start = 0, pos = 0;
  bool inside = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto tok = detail::split_ws(line);
    if (!tok.empty() && detail::iequals(tok[0], ".subckt")) {
      if (inside) data_error("catalog line " + std::to_string(line_no) + ": .subckt inside another cell");
      inside = true;
      start = line_no;
      block.clear();
    }
    if (inside) {
      block.append(line);
      block += '\n';
    } else if (!tok.empty() && tok[0][0] != '*') {
      data_error("catalog line " + std::to_string(line_no) + ": text outside a .subckt block");
    }
    if (inside && !tok.empty() && detail::iequals(tok[0], ".ends")) {
      inside = false;
      try {
        cat.add(parse_subckt(block));
      } catch (const Error& e) {
        throw Error(e.kind(), "catalog cell at line " + std::to_string(start) + ": " + e.what());
      }
    }
  }
  if (inside) data_error("catalog: missing .ends for cell at line " + std::to_string(start));
  if (cat.cells.empty()) data_error("catalog: no cells");
  return cat;
}

inline std::string emit_catalog(const CellCatalog& cat) {
  std::string out;
  for (const auto& c : cat.cells) out += emit_subckt(c);
  return out;
}

}  // namespace cellgnn

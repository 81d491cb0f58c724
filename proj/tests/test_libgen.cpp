#include <gtest/gtest.h>

#include <functional>

#include "cellgnn/libgen.hpp"

using namespace cellgnn;

namespace {

const CellCatalog& silicon() {
  static const CellCatalog cat = build_default_catalog(Technology::Silicon45);
  return cat;
}

const SurrogateParams& si_params() {
  static const SurrogateParams p = default_params(Technology::Silicon45);
  return p;
}

Corner nominal() { return {Technology::Silicon45, 1.0, 0.3, 25.0}; }

CharLibrary small_lib(const std::vector<std::string>& cells, const Corner& c = nominal()) {
  return build_oracle_library(silicon().subset(cells), c, make_grid(Technology::Silicon45, 2, 2),
                              si_params());
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind{0};
}

#define EXPECT_KIND(expr, k) EXPECT_EQ(kind_of([&] { (void)(expr); }), ErrorKind::k)

}  // namespace

TEST(Metrics, HandValues) {
  auto m = compute_metric({110, 90}, {100, 100});
  EXPECT_NEAR(m.mape, 10.0, 1e-12);
  EXPECT_NEAR(m.rmspe, 10.0, 1e-12);
  EXPECT_FALSE(m.r2.has_value());  // constant truth

  // y = [1,2,4], mean 7/3, SS_tot = 14/3, SS_res = 1.
  auto r = compute_metric({1, 2, 3}, {1, 2, 4});
  ASSERT_TRUE(r.r2.has_value());
  EXPECT_NEAR(*r.r2, 1.0 - 3.0 / 14.0, 1e-12);
  EXPECT_NEAR(r.mape, 100.0 * 0.25 / 3.0, 1e-12);
  EXPECT_NEAR(r.rmspe, 100.0 * std::sqrt(0.0625 / 3.0), 1e-12);
}

TEST(Metrics, Errors) {
  EXPECT_KIND(compute_metric({1}, {1, 2}), Config);
  EXPECT_KIND(compute_metric({}, {}), Config);
  EXPECT_KIND(compute_metric({1}, {0}), Data);
}

TEST(Nldm, BilinearAndClamp) {
  NldmTable t{{0, 10}, {0, 2}, {1, 3, 5, 7}};
  EXPECT_DOUBLE_EQ(t.lookup(0, 0), 1);
  EXPECT_DOUBLE_EQ(t.lookup(10, 2), 7);
  EXPECT_DOUBLE_EQ(t.lookup(5, 1), 4);
  EXPECT_DOUBLE_EQ(t.lookup(5, 0), 3);
  EXPECT_DOUBLE_EQ(t.lookup(-5, -1), 1);
  EXPECT_DOUBLE_EQ(t.lookup(20, 5), 7);
  EXPECT_DOUBLE_EQ(t.lookup(20, 1), 6);
}

TEST(Library, InverterTwoByTwo) {
  auto lib = small_lib({"INVX1"});
  ASSERT_EQ(lib.cells.size(), 1u);
  const auto& c = lib.cells[0];
  ASSERT_EQ(c.flip.size(), 1u);  // one timing group: rise and fall tables
  EXPECT_TRUE(c.statics.empty());
  EXPECT_FALSE(c.flip[0].positive_unate);
  EXPECT_EQ(c.flip[0].delay[0].values.size(), 4u);
  EXPECT_EQ(c.flip[0].delay[1].values.size(), 4u);
  EXPECT_EQ(c.leakage.size(), 2u);
  EXPECT_EQ(c.pin_caps.size(), 1u);
  const auto liberty = emit_liberty(lib);
  std::size_t rise = 0, fall = 0;
  for (std::size_t p = liberty.find("cell_rise"); p != std::string::npos; p = liberty.find("cell_rise", p + 1)) ++rise;
  for (std::size_t p = liberty.find("cell_fall"); p != std::string::npos; p = liberty.find("cell_fall", p + 1)) ++fall;
  EXPECT_EQ(rise, 1u);
  EXPECT_EQ(fall, 1u);
}

TEST(Library, MatchesOracleDirectly) {
  auto lib = small_lib({"NAND2X1"});
  const auto& nl = silicon().at("NAND2X1");
  CompiledCell cc(nl);
  const auto& e = lib.cells[0];
  std::size_t flips = 0, statics = 0;
  for (const auto& arc : enumerate_arcs(cc)) {
    const bool out_rise = cc.truth_table()(arc.to) == 1;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        auto cp = characterize(cc, arc, nominal(), lib.grid.slews[i], lib.grid.loads[j], si_params());
        if (arc.output_flips) {
          const FlipArcTables* f = nullptr;
          for (const auto& t : e.flip)
            if (t.pin == arc.pin && t.side == arc.side(2)) f = &t;
          ASSERT_NE(f, nullptr);
          EXPECT_EQ(f->delay[out_rise ? 0 : 1].at(i, j), *cp.delay);
          EXPECT_EQ(f->out_slew[out_rise ? 0 : 1].at(i, j), *cp.out_slew);
          EXPECT_EQ(f->energy[out_rise ? 0 : 1].at(i, j), *cp.flip_energy);
          ++flips;
        } else {
          const StaticArcTables* s = nullptr;
          for (const auto& t : e.statics)
            if (t.pin == arc.pin && t.side == arc.side(2)) s = &t;
          ASSERT_NE(s, nullptr);
          EXPECT_EQ(s->energy[arc.direction == Direction::Rise ? 0 : 1].at(i, j), *cp.non_flip_energy);
          ++statics;
        }
      }
  }
  EXPECT_EQ(flips, 16u);
  EXPECT_EQ(statics, 16u);
  for (InputVector v = 0; v < 4; ++v)
    EXPECT_EQ(e.leakage[v], leakage_power(cc, v, nominal(), si_params()));
}

TEST(Library, AreaScalesWithDrive) {
  auto lib = small_lib({"INVX1", "INVX2"});
  EXPECT_NEAR(lib.at("INVX2").area, 2.0 * lib.at("INVX1").area, 1e-12);
}

TEST(Library, DelayMonotoneInLoad) {
  auto lib = build_oracle_library(silicon().subset({"INVX1", "NAND2X1", "AOI21X1"}), nominal(),
                                  make_grid(Technology::Silicon45, 4, 4), si_params());
  for (const auto& c : lib.cells)
    for (const auto& f : c.flip)
      for (int d = 0; d < 2; ++d)
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 1; j < 4; ++j) EXPECT_GT(f.delay[d].at(i, j), f.delay[d].at(i, j - 1));
}

TEST(Library, ParallelMatchesSerial) {
  auto cat = silicon().subset({"INVX1", "NAND2X1", "XOR2X1", "MX2X1"});
  auto g = make_grid(Technology::Silicon45, 3, 3);
  EXPECT_EQ(build_oracle_library(cat, nominal(), g, si_params(), 1),
            build_oracle_library(cat, nominal(), g, si_params(), 4));
}

TEST(Library, Errors) {
  EXPECT_KIND(build_oracle_library(CellCatalog{}, nominal(), make_grid(Technology::Silicon45), si_params()),
              Config);
  EXPECT_KIND(make_grid(Technology::Silicon45, 1, 4), Config);
  Corner bad = nominal();
  bad.vdd = 3.0;
  EXPECT_KIND(small_lib({"INVX1"}, bad), Config);
  CharLibrary empty;
  EXPECT_KIND(emit_liberty(empty), Config);
  try {
    emit_liberty(empty);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no cells"), std::string::npos);
  }
}

TEST(Liberty, IndexFormat) {
  auto lib = build_oracle_library(silicon().subset({"INVX1"}), nominal(),
                                  make_grid(Technology::Silicon45, 4, 4), si_params());
  const auto s = emit_liberty(lib);
  EXPECT_NE(s.find("index_1 (\"5, 320, 635, 950\")"), std::string::npos);
  EXPECT_NE(s.find("index_2 (\"0.25, 8.5, 16.75, 25\")"), std::string::npos);
  EXPECT_NE(s.find("lu_table_template (nldm_4x4)"), std::string::npos);
  EXPECT_NE(s.find("time_unit : \"1ps\""), std::string::npos);
  EXPECT_NE(s.find("capacitive_load_unit (1, ff)"), std::string::npos);
}

TEST(Liberty, RoundTripIsFixedPoint) {
  const Corner corners[] = {nominal(),
                            {Technology::Silicon45, 0.9, 0.5, 120.0},
                            {Technology::Silicon45, 1.1, 0.1, 20.0}};
  auto cat = silicon().subset({"INVX1", "NAND2X1", "AOI21X1", "XOR2X1", "MX2X1", "BUFX2"});
  for (const auto& c : corners) {
    auto lib = build_oracle_library(cat, c, make_grid(Technology::Silicon45), si_params());
    const auto a = emit_liberty(lib);
    const auto parsed = parse_liberty(a);
    EXPECT_EQ(parsed.cells.size(), lib.cells.size());
    EXPECT_EQ(parsed.corner, lib.corner);
    const auto b = emit_liberty(parsed);
    EXPECT_EQ(a, b);
    EXPECT_EQ(emit_liberty(parse_liberty(b)), b);
    // Values survive at printed precision.
    for (std::size_t k = 0; k < lib.cells.size(); ++k)
      for (std::size_t f = 0; f < lib.cells[k].flip.size(); ++f)
        for (std::size_t v = 0; v < 16; ++v) {
          const double x = lib.cells[k].flip[f].delay[0].values[v];
          EXPECT_NEAR(parsed.cells[k].flip[f].delay[0].values[v], x, 1e-5 * x);
        }
  }
}

TEST(Liberty, FlexibleUsesNanoseconds) {
  auto cat = build_default_catalog(Technology::Flexible).subset({"INVX1"});
  Corner c{Technology::Flexible, 1.5, 0.7, 90.0};
  auto lib = build_oracle_library(cat, c, make_grid(Technology::Flexible, 2, 2),
                                  default_params(Technology::Flexible));
  const auto s = emit_liberty(lib);
  EXPECT_NE(s.find("time_unit : \"1ns\""), std::string::npos);
  EXPECT_NE(s.find("oxide_capacitance : 90"), std::string::npos);
  EXPECT_EQ(emit_liberty(parse_liberty(s)), s);
}

TEST(Liberty, RejectsUnsupportedAndMalformed) {
  auto s = emit_liberty(small_lib({"INVX1"}));
  auto with = [&](const std::string& needle, const std::string& insert) {
    auto t = s;
    t.insert(t.find(needle), insert);
    return t;
  };
  try {
    parse_liberty(with("  cell (", "  bus_naming_style : \"%s[%d]\" ;\n"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported construct 'bus_naming_style'"),
              std::string::npos);
    EXPECT_NE(std::string(e.what()).find("liberty:"), std::string::npos);
  }
  EXPECT_KIND(parse_liberty(with("    area", "    ff (IQ, IQN) { }\n")), Data);
  EXPECT_KIND(parse_liberty(s.substr(0, s.size() / 2)), Data);
  EXPECT_KIND(parse_liberty(s + "junk"), Data);
  EXPECT_KIND(parse_liberty("library (x) { technology_name : \"silicon45\" ; }"), Data);
  auto bad_num = s;
  bad_num.replace(bad_num.find("area : ") + 7, 1, "x");
  EXPECT_KIND(parse_liberty(bad_num), Data);
}

TEST(ModelLibrary, StructureMatchesOracle) {
  auto cat = silicon().subset({"INVX1", "NAND2X1"});
  auto grid = make_grid(Technology::Silicon45, 2, 2);
  auto ref = build_oracle_library(cat, nominal(), grid, si_params());
  ModelSet models;
  for (Task t : kAllTasks) {
    auto samples = build_dataset(cat, {nominal()}, stimulus_grid(Technology::Silicon45, 2, 2), {t},
                                 si_params())
                       .at(t);
    TaskModel m{init_params<float>(layout_for(t), 3, 16), fit_normalization(samples)};
    m.params.scale = 1.0;
    models[t] = m;
  }
  auto lib = build_model_library(cat, nominal(), grid, si_params(), models, ref);
  ASSERT_EQ(lib.cells.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(lib.cells[k].flip.size(), ref.cells[k].flip.size());
    EXPECT_EQ(lib.cells[k].statics.size(), ref.cells[k].statics.size());
    for (std::size_t f = 0; f < lib.cells[k].flip.size(); ++f)
      EXPECT_EQ(lib.cells[k].flip[f].out_slew[0], ref.cells[k].flip[f].out_slew[0]);
    // A model library predicts the graph directly.
    const auto& nl = cat.at(lib.cells[k].name);
    const auto& m = models.at(Task::Leakage);
    for (InputVector v = 0; v < lib.cells[k].leakage.size(); ++v) {
      auto g = apply(m.norm, encode(nl, nominal(), Stimulus::for_state(v, nl.inputs.size()),
                                    FeatureLayout::Leakage));
      EXPECT_DOUBLE_EQ(lib.cells[k].leakage[v], predict_one(m.params, g));
    }
  }
  auto report = compare(lib, ref);
  EXPECT_EQ(report.overall.size(), 5u);
  EXPECT_EQ(report.overall.at(Task::Delay).count, 8u + 16u);  // 2 and 4 flip arcs on a 2x2 grid
  EXPECT_NE(report.csv().find("task,cell,count,mape,rmspe,r2"), std::string::npos);
  models.erase(Task::Leakage);
  EXPECT_KIND(build_model_library(cat, nominal(), grid, si_params(), models, ref), Config);
}

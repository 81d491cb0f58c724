#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "cellgnn/error.hpp"

namespace cellgnn {

enum class Technology { Silicon45, Flexible };

inline std::string_view to_string(Technology t) {
  return t == Technology::Silicon45 ? "silicon45" : "flexible";
}

inline Technology parse_technology(std::string_view s) {
  if (s == "silicon45") return Technology::Silicon45;
  if (s == "flexible") return Technology::Flexible;
  config_error("unknown technology '" + std::string(s) + "'");
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v, double tol = 1e-9) const {
    return v >= lo - tol * std::max(1.0, std::abs(lo)) &&
           v <= hi + tol * std::max(1.0, std::abs(hi));
  }
};

// Sweep ranges per technology. Vth is the NFET magnitude; PFETs mirror it.
// The third corner axis is temperature in degC (silicon) or Cox in nF/cm^2
// (flexible). Slew is in the technology time unit, load in fF.
struct TechRanges {
  Range vdd;
  Range vth;
  Range third;
  Range slew;
  Range load;
  std::string_view third_name;
  std::string_view time_unit;
  double seconds_per_time_unit;
};

inline const TechRanges& ranges(Technology t) {
  static const TechRanges silicon{{0.9, 1.1},  {0.1, 0.5},   {20.0, 120.0},
                                  {5.0, 950.0}, {0.25, 25.0}, "temperature",
                                  "ps",         1e-12};
  static const TechRanges flexible{{0.5, 2.5},  {0.3, 1.1},   {50.0, 130.0},
                                   {1.0, 100.0}, {0.1, 300.0}, "cox",
                                   "ns",         1e-9};
  return t == Technology::Silicon45 ? silicon : flexible;
}

struct Corner {
  Technology technology = Technology::Silicon45;
  double vdd = 1.0;
  double vth = 0.3;
  // Temperature (degC) for silicon, Cox (nF/cm^2) for flexible.
  double third = 25.0;

  bool operator==(const Corner&) const = default;
};

// Throws a config error naming the first axis that falls outside the
// technology's sweep range.
inline void check_corner(const Corner& c) {
  const auto& r = ranges(c.technology);
  auto check = [&](std::string_view axis, double v, const Range& range) {
    if (!std::isfinite(v) || !range.contains(v)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "corner %.*s=%g outside [%g, %g]",
                    static_cast<int>(axis.size()), axis.data(), v, range.lo,
                    range.hi);
      config_error(buf);
    }
  };
  check("vdd", c.vdd, r.vdd);
  check("vth", c.vth, r.vth);
  check(r.third_name, c.third, r.third);
}

inline std::string to_string(const Corner& c) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s:vdd=%.6g,vth=%.6g,%s=%.6g",
                std::string(to_string(c.technology)).c_str(), c.vdd, c.vth,
                std::string(ranges(c.technology).third_name).c_str(), c.third);
  return buf;
}

}  // namespace cellgnn

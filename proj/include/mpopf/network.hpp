#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mpopf/phase.hpp"

namespace mpopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct BoxRegion {
  double p_lo = -kInf;
  double p_hi = kInf;
  double q_lo = -kInf;
  double q_hi = kInf;

  friend bool operator==(const BoxRegion&, const BoxRegion&) = default;
};

/// Inverter nameplate: p >= 0, p^2 + q^2 <= s_max^2.
struct DiskRegion {
  double s_max = 0.0;

  friend bool operator==(const DiskRegion&, const DiskRegion&) = default;
};

using InjectionRegion = std::variant<BoxRegion, DiskRegion>;

inline bool contains(const InjectionRegion& region, complex s, double tol = 0.0) {
  if (const auto* box = std::get_if<BoxRegion>(&region))
    return s.real() >= box->p_lo - tol && s.real() <= box->p_hi + tol && s.imag() >= box->q_lo - tol &&
           s.imag() <= box->q_hi + tol;
  const auto& disk = std::get<DiskRegion>(region);
  return s.real() >= -tol && std::abs(s) <= disk.s_max + tol;
}

/// f(p) = alpha / 2 * p^2 + beta * p. Line loss is alpha = 0, beta = 1.
struct ObjectiveCoeffs {
  double alpha = 0.0;
  double beta = 1.0;

  double operator()(double p) const { return 0.5 * alpha * p * p + beta * p; }
  friend bool operator==(const ObjectiveCoeffs&, const ObjectiveCoeffs&) = default;
};

struct BusSpec {
  int id = 0;
  PhaseSet phases = PhaseSet::abc();
  std::vector<InjectionRegion> region;  // per phase
  std::vector<double> v_lo;             // squared magnitude, p.u.^2
  std::vector<double> v_hi;
  std::vector<ObjectiveCoeffs> cost;

  friend bool operator==(const BusSpec&, const BusSpec&) = default;
};

/// Line from `bus` to its parent. Impedance is indexed by the phases of `bus`.
struct LineSpec {
  int bus = 0;
  int parent = 0;
  CMatrix z;

  friend bool operator==(const LineSpec& a, const LineSpec& b) {
    return a.bus == b.bus && a.parent == b.parent && a.z.rows() == b.z.rows() && a.z.cols() == b.z.cols() &&
           a.z == b.z;
  }
};

/// Raw, possibly invalid network description.
struct FeederSpec {
  std::vector<BusSpec> buses;
  std::vector<LineSpec> lines;

  friend bool operator==(const FeederSpec&, const FeederSpec&) = default;
};

/// Every violation found in a FeederSpec. Empty means valid.
using ValidationReport = std::vector<std::string>;

namespace detail {

inline void validate_bus(const BusSpec& b, ValidationReport& out) {
  const std::string where = "bus " + std::to_string(b.id) + ": ";
  if (b.phases.empty()) {
    out.push_back(where + "empty phase set");
    return;
  }
  const auto n = static_cast<std::size_t>(b.phases.size());
  if (b.region.size() != n) out.push_back(where + "region list has " + std::to_string(b.region.size()) +
                                          " entries, expected " + std::to_string(n));
  if (b.v_lo.size() != n || b.v_hi.size() != n) out.push_back(where + "vmin/vmax must have one entry per phase");
  if (b.cost.size() != n) out.push_back(where + "cost list must have one entry per phase");
  for (std::size_t k = 0; k < std::min({n, b.v_lo.size(), b.v_hi.size()}); ++k) {
    if (!(b.v_lo[k] > 0.0)) out.push_back(where + "vmin must be positive");
    if (!(b.v_lo[k] <= b.v_hi[k])) out.push_back(where + "vmin exceeds vmax");
  }
  for (const auto& r : b.region) {
    if (const auto* box = std::get_if<BoxRegion>(&r)) {
      if (!(box->p_lo <= box->p_hi) || !(box->q_lo <= box->q_hi)) out.push_back(where + "box region bounds out of order");
    } else if (!(std::get<DiskRegion>(r).s_max >= 0.0)) {
      out.push_back(where + "disk region radius must be non-negative");
    }
  }
  for (const auto& c : b.cost)
    if (!(c.alpha >= 0.0)) out.push_back(where + "cost alpha must be non-negative");
}

}  // namespace detail

/// Checks the tree structure rooted at bus 0, phase nesting, impedance
/// shapes and per-bus data. Never throws.
inline ValidationReport validate_radial(const FeederSpec& spec) {
  ValidationReport out;
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < spec.buses.size(); ++k) {
    if (!index.emplace(spec.buses[k].id, k).second)
      out.push_back("duplicate id " + std::to_string(spec.buses[k].id));
    detail::validate_bus(spec.buses[k], out);
  }
  if (!index.contains(0)) out.push_back("missing root bus 0");

  std::map<int, int> parent_of;
  bool tree_shape_ok = spec.lines.size() + 1 == spec.buses.size();
  for (const auto& line : spec.lines) {
    const std::string where = "line " + std::to_string(line.bus) + "->" + std::to_string(line.parent) + ": ";
    const bool has_bus = index.contains(line.bus);
    const bool has_parent = index.contains(line.parent);
    if (!has_bus) out.push_back(where + "unknown bus " + std::to_string(line.bus));
    if (!has_parent) out.push_back(where + "unknown parent " + std::to_string(line.parent));
    if (line.bus == 0) {
      out.push_back(where + "root bus 0 cannot have a parent");
      tree_shape_ok = false;
    }
    if (line.bus == line.parent) {
      out.push_back(where + "self loop");
      tree_shape_ok = false;
    }
    if (!parent_of.emplace(line.bus, line.parent).second) {
      out.push_back(where + "bus " + std::to_string(line.bus) + " has more than one parent line");
      tree_shape_ok = false;
    }
    if (!has_bus || !has_parent) {
      tree_shape_ok = false;
      continue;
    }
    const auto& child = spec.buses[index[line.bus]];
    const auto& par = spec.buses[index[line.parent]];
    if (!child.phases.is_subset_of(par.phases))
      out.push_back(where + "phase nesting violated: " + child.phases.to_string() + " is not a subset of " +
                    par.phases.to_string());
    const int n = child.phases.size();
    if (line.z.rows() != n || line.z.cols() != n)
      out.push_back(where + "impedance is " + std::to_string(line.z.rows()) + "x" + std::to_string(line.z.cols()) +
                    ", expected " + std::to_string(n) + "x" + std::to_string(n));
  }

  // Every bus must reach the root by following parents without revisiting.
  if (tree_shape_ok && index.contains(0)) {
    for (const auto& b : spec.buses) {
      int cur = b.id;
      std::size_t steps = 0;
      while (cur != 0 && steps <= spec.buses.size()) {
        auto it = parent_of.find(cur);
        if (it == parent_of.end()) break;
        cur = it->second;
        ++steps;
      }
      if (cur != 0) {
        tree_shape_ok = false;
        break;
      }
    }
  }
  if (!tree_shape_ok)
    out.push_back("not a tree: expected " + std::to_string(spec.buses.empty() ? 0 : spec.buses.size() - 1) +
                  " lines forming a tree rooted at bus 0, got " + std::to_string(spec.lines.size()));
  return out;
}

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport report)
      : std::runtime_error(join(report)), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  static std::string join(const ValidationReport& r) {
    std::string s = "invalid feeder:";
    for (const auto& v : r) s += "\n  " + v;
    return s;
  }
  ValidationReport report_;
};

/// Validated, immutable radial feeder. Buses are addressed by dense index in
/// input order; index 0 is always the root.
class FeederModel {
 public:
  explicit FeederModel(FeederSpec spec) : spec_(std::move(spec)) {
    if (auto report = validate_radial(spec_); !report.empty()) throw ValidationError(std::move(report));
    // Root first, other buses keep their input order.
    std::stable_partition(spec_.buses.begin(), spec_.buses.end(), [](const BusSpec& b) { return b.id == 0; });
    const std::size_t n = spec_.buses.size();
    std::map<int, int> index;
    for (std::size_t k = 0; k < n; ++k) index[spec_.buses[k].id] = static_cast<int>(k);
    parent_.assign(n, -1);
    line_of_.assign(n, -1);
    children_.assign(n, {});
    for (std::size_t l = 0; l < spec_.lines.size(); ++l) {
      const int c = index[spec_.lines[l].bus];
      parent_[c] = index[spec_.lines[l].parent];
      line_of_[c] = static_cast<int>(l);
    }
    for (std::size_t k = 1; k < n; ++k) children_[parent_[k]].push_back(static_cast<int>(k));
  }

  int size() const { return static_cast<int>(spec_.buses.size()); }
  const FeederSpec& spec() const { return spec_; }
  const BusSpec& bus(int i) const { return spec_.buses[i]; }
  PhaseSet phases(int i) const { return spec_.buses[i].phases; }
  /// -1 for the root.
  int parent(int i) const { return parent_[i]; }
  const std::vector<int>& children(int i) const { return children_[i]; }
  /// Impedance of the line from i to its parent (empty for the root).
  const CMatrix& impedance(int i) const {
    static const CMatrix kEmpty;
    return i == 0 ? kEmpty : spec_.lines[line_of_[i]].z;
  }
  int index_of(int id) const {
    for (int k = 0; k < size(); ++k)
      if (spec_.buses[k].id == id) return k;
    throw std::out_of_range("no bus with id " + std::to_string(id));
  }

  /// Longest path in edges.
  int diameter() const {
    int best = 0;
    std::vector<int> height(size(), 0);
    std::vector<int> order;
    order.push_back(0);
    for (std::size_t k = 0; k < order.size(); ++k)
      for (int c : children_[order[k]]) order.push_back(c);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      int first = 0, second = 0;
      for (int c : children_[*it]) {
        const int h = height[c] + 1;
        if (h > first) {
          second = first;
          first = h;
        } else if (h > second) {
          second = h;
        }
      }
      height[*it] = first;
      best = std::max(best, first + second);
    }
    return best;
  }

 private:
  FeederSpec spec_;
  std::vector<int> parent_;
  std::vector<int> line_of_;
  std::vector<std::vector<int>> children_;
};

inline ValidationReport validate_radial(const FeederModel& model) { return validate_radial(model.spec()); }

enum class TopologyKind { line, fat_tree };

inline const char* to_string(TopologyKind k) { return k == TopologyKind::line ? "line" : "fat-tree"; }

inline TopologyKind parse_topology_kind(const std::string& s) {
  if (s == "line") return TopologyKind::line;
  if (s == "fat-tree" || s == "fat_tree" || s == "fattree") return TopologyKind::fat_tree;
  throw std::invalid_argument("unknown topology kind '" + s + "' (expected line or fat-tree)");
}

/// Defaults applied to every generated bus.
struct BusTemplate {
  PhaseSet phases = PhaseSet::abc();
  /// Per phase, in canonical order of `phases`.
  std::vector<InjectionRegion> load_region;
  std::vector<ObjectiveCoeffs> cost;
  double v_lo = 0.95 * 0.95;
  double v_hi = 1.05 * 1.05;
  double substation_v = 1.0;
  CMatrix z;

  /// Unbalanced three-phase load bus: fixed real demand that differs by
  /// phase, reactive support within +-0.01 p.u., line-loss objective, and a
  /// short line with mutual coupling.
  static BusTemplate three_phase_default() {
    BusTemplate t;
    t.phases = PhaseSet::abc();
    const double demand[3] = {0.020, 0.015, 0.010};
    for (double d : demand) {
      t.load_region.emplace_back(BoxRegion{-d, -d, -0.01, 0.01});
      t.cost.push_back({0.0, 1.0});
    }
    t.z.resize(3, 3);
    const complex self{0.0010, 0.0020};
    const complex mutual{0.0004, 0.0008};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.z(r, c) = r == c ? self : mutual;
    return t;
  }
};

/// Substation bus: unconstrained injection, voltage pinned at `v` (p.u.^2).
inline BusSpec substation_bus(PhaseSet phases, double v, ObjectiveCoeffs cost = {0.0, 1.0}) {
  BusSpec b;
  b.id = 0;
  b.phases = phases;
  const auto n = static_cast<std::size_t>(phases.size());
  b.region.assign(n, BoxRegion{});
  b.v_lo.assign(n, v);
  b.v_hi.assign(n, v);
  b.cost.assign(n, cost);
  return b;
}

/// Line: bus k hangs off bus k-1. Fat tree: bus k hangs off (k-1)/2, the
/// minimum-diameter binary tree.
inline FeederModel generate_topology(TopologyKind kind, int size, const BusTemplate& tmpl) {
  if (size < 2) throw std::invalid_argument("generate_topology: size must be at least 2, got " + std::to_string(size));
  FeederSpec spec;
  spec.buses.push_back(substation_bus(tmpl.phases, tmpl.substation_v * tmpl.substation_v));
  const auto n = static_cast<std::size_t>(tmpl.phases.size());
  for (int k = 1; k < size; ++k) {
    BusSpec b;
    b.id = k;
    b.phases = tmpl.phases;
    b.region = tmpl.load_region;
    b.v_lo.assign(n, tmpl.v_lo);
    b.v_hi.assign(n, tmpl.v_hi);
    b.cost = tmpl.cost;
    spec.buses.push_back(std::move(b));
    LineSpec line;
    line.bus = k;
    line.parent = kind == TopologyKind::line ? k - 1 : (k - 1) / 2;
    line.z = tmpl.z;
    spec.lines.push_back(std::move(line));
  }
  return FeederModel(std::move(spec));
}

inline FeederModel generate_topology(TopologyKind kind, int size) {
  return generate_topology(kind, size, BusTemplate::three_phase_default());
}

}  // namespace mpopf

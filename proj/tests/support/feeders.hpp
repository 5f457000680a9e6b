#pragma once

#include "mpopf/network.hpp"

namespace mpopf::testing {

inline BusSpec load_bus(int id, PhaseSet phases, InjectionRegion region, ObjectiveCoeffs cost = {0.0, 0.0},
                        double v_lo = 0.95 * 0.95, double v_hi = 1.05 * 1.05) {
  BusSpec b;
  b.id = id;
  b.phases = phases;
  const auto n = static_cast<std::size_t>(phases.size());
  b.region.assign(n, region);
  b.cost.assign(n, cost);
  b.v_lo.assign(n, v_lo);
  b.v_hi.assign(n, v_hi);
  return b;
}

inline CMatrix coupled_impedance(int n, complex self, complex mutual) {
  CMatrix z(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) z(r, c) = r == c ? self : mutual;
  return z;
}

/// Substation buying power at unit price feeding a controllable load with a
/// quadratic utility; the optimum trades purchase cost against utility and
/// line loss.
inline FeederSpec two_bus_spec() {
  FeederSpec f;
  f.buses.push_back(substation_bus(PhaseSet::parse("a"), 1.0, {0.0, 1.0}));
  f.buses.push_back(load_bus(1, PhaseSet::parse("a"), BoxRegion{-0.8, -0.2, -0.3, 0.3}, {1.0, 1.5}, 0.9, 1.1));
  f.lines.push_back({1, 0, coupled_impedance(1, {0.02, 0.04}, {})});
  return f;
}

/// Root abc, a three-phase lateral, a two-phase lateral with an inverter and
/// a single-phase leaf. Loss objective.
inline FeederSpec four_bus_unbalanced_spec() {
  const PhaseSet abc = PhaseSet::abc(), ab = PhaseSet::parse("ab"), c = PhaseSet::parse("c");
  FeederSpec f;
  f.buses.push_back(substation_bus(abc, 1.0, {0.0, 1.0}));
  BusSpec b1 = load_bus(1, abc, BoxRegion{}, {0.0, 1.0});
  b1.region = {BoxRegion{-0.03, -0.03, -0.02, -0.02}, BoxRegion{-0.02, -0.02, -0.01, -0.01},
               BoxRegion{-0.04, -0.04, -0.015, -0.015}};
  f.buses.push_back(b1);
  BusSpec b2 = load_bus(2, ab, DiskRegion{0.02}, {0.0, 1.0});
  f.buses.push_back(b2);
  f.buses.push_back(load_bus(3, c, BoxRegion{-0.05, -0.05, -0.02, 0.0}, {0.0, 1.0}));
  f.lines.push_back({1, 0, coupled_impedance(3, {0.01, 0.02}, {0.004, 0.008})});
  f.lines.push_back({2, 1, coupled_impedance(2, {0.02, 0.03}, {0.006, 0.01})});
  f.lines.push_back({3, 1, coupled_impedance(1, {0.03, 0.04}, {})});
  return f;
}

/// Three-phase radial tree with the branching pattern of the IEEE 13-bus
/// feeder (buses renumbered 0..12).
inline FeederSpec thirteen_bus_spec() {
  const int parents[13] = {-1, 0, 1, 2, 1, 4, 1, 6, 7, 6, 9, 6, 11};
  const BusTemplate t = BusTemplate::three_phase_default();
  FeederSpec f;
  f.buses.push_back(substation_bus(t.phases, t.substation_v, t.cost[0]));
  for (int k = 1; k < 13; ++k) {
    BusSpec b;
    b.id = k;
    b.phases = t.phases;
    b.region = t.load_region;
    b.cost = t.cost;
    b.v_lo.assign(3, t.v_lo);
    b.v_hi.assign(3, t.v_hi);
    f.buses.push_back(b);
    f.lines.push_back({k, parents[k], t.z});
  }
  return f;
}

}  // namespace mpopf::testing

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpopf/hermitian.hpp"
#include "mpopf/network.hpp"
#include "mpopf/subproblems.hpp"

namespace mpopf {

struct BusResidual {
  int bus_id = 0;
  /// Max-abs entry of the voltage-drop equation residual (0 at the root).
  double voltage_drop = 0.0;
  /// Max-abs entry of the power-balance residual.
  double power_balance = 0.0;
  bool pass = true;
};

struct BfmReport {
  std::vector<BusResidual> buses;
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;

  std::vector<int> failing_buses() const {
    std::vector<int> out;
    for (const auto& b : buses)
      if (!b.pass) out.push_back(b.bus_id);
    return out;
  }
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws DimensionError unless every block matches its bus's phase count and
/// line presence.
inline void check_solution_shape(const std::vector<XBlock>& solution, const FeederModel& model) {
  if (static_cast<int>(solution.size()) != model.size())
    throw DimensionError("solution has " + std::to_string(solution.size()) + " buses, network has " +
                         std::to_string(model.size()));
  for (int i = 0; i < model.size(); ++i) {
    const int n = model.phases(i).size();
    const XBlock& x = solution[i];
    const bool line = model.parent(i) >= 0;
    const std::string where = "bus " + std::to_string(model.bus(i).id) + ": ";
    if (x.v.dim() != n || x.s.size() != n) throw DimensionError(where + "expected " + std::to_string(n) + " phases");
    if (line != x.has_line()) throw DimensionError(where + (line ? "missing S/l" : "root must not carry S/l"));
    if (line && (x.S.rows() != n || x.S.cols() != n || x.ell.dim() != n))
      throw DimensionError(where + "S/l dimension mismatch");
  }
}

/// Branch-flow residuals of a candidate solution:
/// P_i(v_{A_i}) - (v_i - z S^H - S z^H + z l z^H) and
/// s_i + diag(sum_j P_i(S_j - z_j l_j) - S_i).
inline BfmReport check_bfm_feasibility(const std::vector<XBlock>& solution, const FeederModel& model, double tol) {
  check_solution_shape(solution, model);
  BfmReport rep;
  rep.tolerance = tol;
  for (int i = 0; i < model.size(); ++i) {
    const XBlock& x = solution[i];
    const PhaseSet ph = model.phases(i);
    BusResidual br;
    br.bus_id = model.bus(i).id;
    CMatrix flow = CMatrix::Zero(ph.size(), ph.size());
    if (const int p = model.parent(i); p >= 0) {
      const CMatrix& z = model.impedance(i);
      const CMatrix rhs = x.v.dense() - z * x.S.adjoint() - x.S * z.adjoint() + z * x.ell.dense() * z.adjoint();
      const CMatrix lhs = phase_project(solution[p].v.dense(), model.phases(p), ph);
      br.voltage_drop = (lhs - rhs).cwiseAbs().maxCoeff();
      flow -= x.S;
    }
    for (int j : model.children(i)) {
      const CMatrix net = solution[j].S - model.impedance(j) * solution[j].ell.dense();
      flow += phase_lift(net, model.phases(j), ph);
    }
    br.power_balance = (x.s + flow.diagonal()).cwiseAbs().maxCoeff();
    br.pass = br.voltage_drop <= tol && br.power_balance <= tol;
    rep.max_residual = std::max({rep.max_residual, br.voltage_drop, br.power_balance});
    rep.pass = rep.pass && br.pass;
    rep.buses.push_back(br);
  }
  return rep;
}

struct ExactnessReport {
  struct Line {
    int bus_id = 0;
    double ratio = 0.0;  // sigma_2 / sigma_1
  };
  std::vector<Line> lines;
  double max_ratio = 0.0;
  double threshold = 1e-2;
  bool exact = true;
};

/// Second-to-largest singular value ratio of a Hermitian block; 0 for the
/// zero matrix.
inline double rank1_ratio(const HermitianMatrix& block) {
  if (block.dim() < 2) return 0.0;
  const auto ed = eigh(block);
  std::vector<double> sv;
  for (int k = 0; k < ed.values.size(); ++k) sv.push_back(std::abs(ed.values(k)));
  std::sort(sv.rbegin(), sv.rend());
  if (sv[0] == 0.0) return 0.0;
  return sv[1] / sv[0];
}

/// Rank-1 check of [[v, S], [S^H, l]] on every line.
inline ExactnessReport check_rank1(const std::vector<XBlock>& solution, const FeederModel& model,
                                   double threshold = 1e-2) {
  check_solution_shape(solution, model);
  ExactnessReport rep;
  rep.threshold = threshold;
  for (int i = 0; i < model.size(); ++i) {
    if (!solution[i].has_line()) continue;
    const double ratio = rank1_ratio(solution[i].psd_block());
    rep.lines.push_back({model.bus(i).id, ratio});
    rep.max_ratio = std::max(rep.max_ratio, ratio);
  }
  rep.exact = rep.max_ratio <= threshold;
  return rep;
}

/// Exact single-phase flow on one line feeding a leaf with sending-end
/// power S: the high-voltage root of v1^2 - (v0 + 2 Re(z conj S)) v1 + |z|^2 |S|^2 = 0.
struct TwoBusFlow {
  double v_child = 0.0;
  double ell = 0.0;
  complex s_root;
};

inline std::optional<TwoBusFlow> two_bus_power_flow(complex z, double v_root, complex S) {
  const double b = v_root + 2.0 * (z * std::conj(S)).real();
  const double disc = b * b - 4.0 * std::norm(z) * std::norm(S);
  if (disc < 0.0 || b <= 0.0) return std::nullopt;
  TwoBusFlow f;
  f.v_child = 0.5 * (b + std::sqrt(disc));
  f.ell = std::norm(S) / f.v_child;
  f.s_root = -(S - z * f.ell);
  return f;
}

struct BruteForceResult {
  double objective = std::numeric_limits<double>::infinity();
  complex child_injection;
  TwoBusFlow flow;
  long feasible_points = 0;
};

/// Grid search over the child's injection region of a two-bus single-phase
/// feeder, solving the exact power flow at every point.
inline BruteForceResult brute_force_opf(const FeederModel& model, double grid_step) {
  if (model.size() != 2) throw std::invalid_argument("brute_force_opf: needs exactly 2 buses");
  if (model.phases(0).size() != 1 || model.phases(1).size() != 1)
    throw std::invalid_argument("brute_force_opf: needs a single-phase feeder");
  if (!(grid_step > 0.0)) throw std::invalid_argument("brute_force_opf: grid step must be positive");
  const BusSpec& root = model.bus(0);
  const BusSpec& child = model.bus(1);
  if (root.v_lo[0] != root.v_hi[0]) throw std::invalid_argument("brute_force_opf: root voltage must be pinned");
  const double v0 = root.v_lo[0];
  const complex z = model.impedance(1)(0, 0);

  double p_lo, p_hi, q_lo, q_hi;
  if (const auto* box = std::get_if<BoxRegion>(&child.region[0])) {
    p_lo = box->p_lo; p_hi = box->p_hi; q_lo = box->q_lo; q_hi = box->q_hi;
  } else {
    const double c = std::get<DiskRegion>(child.region[0]).s_max;
    p_lo = 0.0; p_hi = c; q_lo = -c; q_hi = c;
  }
  if (!std::isfinite(p_lo) || !std::isfinite(p_hi) || !std::isfinite(q_lo) || !std::isfinite(q_hi))
    throw std::invalid_argument("brute_force_opf: child injection region must be bounded");

  auto axis = [grid_step](double lo, double hi) {
    std::vector<double> pts;
    const long steps = static_cast<long>(std::floor((hi - lo) / grid_step + 1e-9));
    for (long k = 0; k <= steps; ++k) pts.push_back(lo + k * grid_step);
    if (pts.back() < hi) pts.push_back(hi);
    return pts;
  };

  BruteForceResult best;
  for (double p : axis(p_lo, p_hi)) {
    for (double q : axis(q_lo, q_hi)) {
      const complex s1{p, q};
      if (!contains(child.region[0], s1, 1e-12)) continue;
      const auto flow = two_bus_power_flow(z, v0, s1);
      if (!flow) continue;
      if (flow->v_child < child.v_lo[0] || flow->v_child > child.v_hi[0]) continue;
      if (!contains(root.region[0], flow->s_root)) continue;
      ++best.feasible_points;
      const double obj = root.cost[0](flow->s_root.real()) + child.cost[0](p);
      if (obj < best.objective) {
        best.objective = obj;
        best.child_injection = s1;
        best.flow = *flow;
      }
    }
  }
  if (best.feasible_points == 0) throw std::runtime_error("brute_force_opf: no feasible grid point");
  return best;
}

}  // namespace mpopf

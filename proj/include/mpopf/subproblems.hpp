#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mpopf/hermitian.hpp"
#include "mpopf/injection.hpp"
#include "mpopf/network.hpp"
#include "mpopf/phase.hpp"

namespace mpopf {

/// (v, s, S, l) for one bus and its upstream line. S and l are empty at the
/// root. The same shape carries the multipliers of the x0 = y consensus.
struct XBlock {
  HermitianMatrix v;
  CVector s;
  CMatrix S;
  HermitianMatrix ell;

  static XBlock zero(int n, bool has_line) {
    XBlock x;
    x.v = HermitianMatrix::zero(n);
    x.s = CVector::Zero(n);
    if (has_line) {
      x.S = CMatrix::Zero(n, n);
      x.ell = HermitianMatrix::zero(n);
    } else {
      x.S.resize(0, 0);
    }
    return x;
  }

  int dim() const { return v.dim(); }
  bool has_line() const { return S.rows() > 0; }

  /// [[v, S], [S^H, l]], or just v at the root.
  HermitianMatrix psd_block() const {
    if (!has_line()) return v;
    const int n = dim();
    CMatrix w(2 * n, 2 * n);
    w.topLeftCorner(n, n) = v.dense();
    w.topRightCorner(n, n) = S;
    w.bottomLeftCorner(n, n) = S.adjoint();
    w.bottomRightCorner(n, n) = ell.dense();
    return HermitianMatrix::from_dense(w);
  }
};

/// Branch power and current of a bus as observed by its parent.
struct LineObservation {
  CMatrix S;
  HermitianMatrix ell;

  static LineObservation zero(int n) { return {CMatrix::Zero(n, n), HermitianMatrix::zero(n)}; }
};

/// Penalty weights of the x0 = y consensus terms. Summed over the copies of
/// each variable they give a common factor (|C|+2) on the PSD block, with the
/// off-diagonal S block counted twice, which turns the matrix part of H_{i0}
/// into a single Frobenius distance.
struct ConsensusWeights {
  int child_count = 0;

  double self_S() const { return 2.0 * child_count + 3.0; }
  double self_ell() const { return child_count + 1.0; }
  double self_v() const { return 2.0; }
  double self_s() const { return 1.0; }
  double parent_S() const { return 1.0; }
  double parent_ell() const { return 1.0; }
  double child_v() const { return 1.0; }
  /// Penalty on x_{i1} = y_ii.v.
  double voltage_copy() const { return 1.0; }
  /// Common factor of the block distance: rho (|C|+2) / 2 * ||X - W||^2.
  double block() const { return child_count + 2.0; }
};

/// Everything bus i reads in its x-update: its own y_ii and multipliers, and
/// the copies of its variables held by its parent (S, l) and children (v).
struct X0Neighborhood {
  XBlock y_self;
  XBlock mu_self;
  std::optional<LineObservation> y_parent;
  std::optional<LineObservation> mu_parent;
  std::vector<HermitianMatrix> y_children;
  std::vector<HermitianMatrix> mu_children;

  int child_count() const { return static_cast<int>(y_children.size()); }
};

struct HatConstants {
  /// [[v^, S^], [S^^H, l^]] (just v^ at the root).
  HermitianMatrix W;
  CVector s_hat;
  /// |C_i| + 2.
  double block_weight = 2.0;
};

/// Square completion of H_{i0} - f_i. Each variable w with copies w_j of
/// weight k_j and total multiplier m gets w^ = (sum k_j w_j - m / rho) / sum k_j.
inline HatConstants complete_square_x0(const X0Neighborhood& nb, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("complete_square_x0: rho must be positive");
  if (nb.mu_children.size() != nb.y_children.size())
    throw std::invalid_argument("complete_square_x0: missing child multiplier");
  const int n = nb.y_self.dim();
  const bool has_line = nb.y_self.has_line();
  if (has_line && (!nb.y_parent || !nb.mu_parent))
    throw std::invalid_argument("complete_square_x0: missing parent observation");
  const ConsensusWeights w{nb.child_count()};

  HermitianMatrix v_sum = w.self_v() * nb.y_self.v - (1.0 / rho) * nb.mu_self.v;
  for (std::size_t j = 0; j < nb.y_children.size(); ++j) {
    if (nb.y_children[j].dim() != n) throw std::invalid_argument("complete_square_x0: child observation has wrong dimension");
    v_sum += w.child_v() * nb.y_children[j] - (1.0 / rho) * nb.mu_children[j];
  }
  const double v_weight = w.self_v() + w.child_v() * nb.child_count();
  const HermitianMatrix v_hat = (1.0 / v_weight) * v_sum;

  HatConstants hat;
  hat.block_weight = w.block();
  hat.s_hat = nb.y_self.s - nb.mu_self.s / rho;
  if (!has_line) {
    hat.W = v_hat;
    return hat;
  }

  const CMatrix S_hat = (w.self_S() * nb.y_self.S + w.parent_S() * nb.y_parent->S -
                         (nb.mu_self.S + nb.mu_parent->S) / rho) /
                        (w.self_S() + w.parent_S());
  const HermitianMatrix ell_hat =
      (1.0 / (w.self_ell() + w.parent_ell())) *
      (w.self_ell() * nb.y_self.ell + w.parent_ell() * nb.y_parent->ell - (1.0 / rho) * (nb.mu_self.ell + nb.mu_parent->ell));

  CMatrix W(2 * n, 2 * n);
  W.topLeftCorner(n, n) = v_hat.dense();
  W.topRightCorner(n, n) = S_hat;
  W.bottomLeftCorner(n, n) = S_hat.adjoint();
  W.bottomRightCorner(n, n) = ell_hat.dense();
  hat.W = HermitianMatrix::from_dense(W);
  return hat;
}

struct MatrixPart {
  HermitianMatrix v;
  CMatrix S;
  HermitianMatrix ell;
};

/// Splits a (2n)x(2n) block [[v, S], [S^H, l]] (or an n x n root block).
inline MatrixPart split_block(const HermitianMatrix& block, bool has_line) {
  MatrixPart out;
  if (!has_line) {
    out.v = block;
    out.S.resize(0, 0);
    return out;
  }
  const int n = block.dim() / 2;
  const CMatrix d = block.dense();
  out.v = HermitianMatrix::from_dense(d.topLeftCorner(n, n));
  out.S = d.topRightCorner(n, n);
  out.ell = HermitianMatrix::from_dense(d.bottomRightCorner(n, n));
  return out;
}

/// PSD part of the x0-update: nearest PSD matrix to W.
inline MatrixPart solve_x0_matrix(const HatConstants& hat, bool has_line) {
  if (hat.W.dim() > HermitianMatrix::kMaxDim) throw std::invalid_argument("solve_x0_matrix: block exceeds 6x6");
  return split_block(psd_project(hat.W), has_line);
}

/// Full x0-update for bus i: PSD block plus one injection problem per phase.
inline XBlock solve_x0(const X0Neighborhood& nb, const BusSpec& bus, double rho) {
  const HatConstants hat = complete_square_x0(nb, rho);
  MatrixPart m = solve_x0_matrix(hat, nb.y_self.has_line());
  XBlock x;
  x.v = std::move(m.v);
  x.S = std::move(m.S);
  x.ell = std::move(m.ell);
  const int n = nb.y_self.dim();
  x.s.resize(n);
  for (int k = 0; k < n; ++k) x.s(k) = solve_injection(bus.region[k], bus.cost[k], hat.s_hat(k), rho);
  return x;
}

/// x1-update: argmin <lambda, x> + rho/2 ||x - y_v||^2 subject to the
/// diagonal voltage box; the diagonal is clamped, off-diagonals pass through.
inline HermitianMatrix solve_x1_voltage(const HermitianMatrix& lambda, const HermitianMatrix& y_v,
                                        const std::vector<double>& v_lo, const std::vector<double>& v_hi, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("solve_x1_voltage: rho must be positive");
  const int n = y_v.dim();
  if (lambda.dim() != n || static_cast<int>(v_lo.size()) != n || static_cast<int>(v_hi.size()) != n)
    throw std::invalid_argument("solve_x1_voltage: dimension mismatch");
  HermitianMatrix x = y_v - (1.0 / rho) * lambda;
  for (int k = 0; k < n; ++k) x.set_diag(k, clamp_to(x.diag(k), v_lo[k], v_hi[k]));
  return x;
}

// ---------------------------------------------------------------------------
// y-update

/// Variables bus i owns in the y-update: y_ii, the parent's voltage as seen at
/// i, and each child's (S, l) as seen at i.
struct YLocal {
  XBlock self;
  std::optional<HermitianMatrix> parent_v;
  std::vector<LineObservation> children;
};

/// Static data of bus i needed to write its branch-flow rows.
struct YContext {
  PhaseSet phases;
  std::optional<PhaseSet> parent_phases;
  CMatrix z;
  std::vector<PhaseSet> child_phases;
  std::vector<CMatrix> child_z;

  bool has_line() const { return parent_phases.has_value(); }
  int child_count() const { return static_cast<int>(child_phases.size()); }

  static YContext from_model(const FeederModel& model, int i) {
    YContext ctx;
    ctx.phases = model.phases(i);
    if (model.parent(i) >= 0) {
      ctx.parent_phases = model.phases(model.parent(i));
      ctx.z = model.impedance(i);
    } else {
      ctx.z.resize(0, 0);
    }
    for (int j : model.children(i)) {
      ctx.child_phases.push_back(model.phases(j));
      ctx.child_z.push_back(model.impedance(j));
    }
    return ctx;
  }
};

/// Targets of the y_i-update: the x-values each y copy is pulled toward and
/// the multipliers of the matching consensus constraints.
struct YTargets {
  XBlock x_self;          // x_{i0}
  XBlock mu_self;         // mu_ii^(1..4)
  HermitianMatrix x_copy;  // x_{i1}
  HermitianMatrix lambda;  // lambda_{i1}
  std::optional<HermitianMatrix> x_parent_v;   // x_{A_i,0}.v
  std::optional<HermitianMatrix> mu_parent_v;  // mu_{A_i,i}
  std::vector<LineObservation> x_children;     // x_{j0}.(S, l)
  std::vector<LineObservation> mu_children;    // mu_{j,i}
};

/// Real parameter layout of YLocal: self S (re/im, column-major), self l,
/// self v, self s (re/im), parent v, then (S, l) per child. Hermitian blocks
/// use the HermitianMatrix parameterization.
class YLayout {
 public:
  YLayout() = default;
  explicit YLayout(const YContext& ctx) : ctx_(ctx) {
    const int n = ctx.phases.size();
    if (ctx.has_line()) size_ += 2 * n * n + n * n;
    size_ += n * n + 2 * n;
    if (ctx.has_line()) size_ += ctx.parent_phases->size() * ctx.parent_phases->size();
    for (PhaseSet cp : ctx.child_phases) size_ += 3 * cp.size() * cp.size();
    rows_ = (ctx.has_line() ? n * n : 0) + 2 * n;
  }

  int size() const { return size_; }
  int constraint_rows() const { return rows_; }
  const YContext& context() const { return ctx_; }

  Eigen::VectorXd pack(const YLocal& y) const {
    Eigen::VectorXd out(size_);
    int k = 0;
    visit(y, [&](double value, double) { out(k++) = value; });
    return out;
  }

  /// Frobenius weight of each parameter (1 or 2), in pack order.
  Eigen::VectorXd frobenius_weights() const {
    Eigen::VectorXd out(size_);
    int k = 0;
    visit(zero(), [&](double, double wt) { out(k++) = wt; });
    return out;
  }

  YLocal unpack(const Eigen::VectorXd& params) const {
    if (params.size() != size_) throw std::invalid_argument("YLayout::unpack: wrong parameter count");
    YLocal y = zero();
    int k = 0;
    visit_mut(y, [&](double& value) { value = params(k++); });
    return y;
  }

  YLocal zero() const {
    const int n = ctx_.phases.size();
    YLocal y;
    y.self = XBlock::zero(n, ctx_.has_line());
    if (ctx_.has_line()) y.parent_v = HermitianMatrix::zero(ctx_.parent_phases->size());
    for (PhaseSet cp : ctx_.child_phases) y.children.push_back(LineObservation::zero(cp.size()));
    return y;
  }

  /// Branch-flow residuals of y as real rows: the Hermitian voltage-drop
  /// equation (n^2 parameters, absent at the root) followed by re/im of the
  /// power balance.
  Eigen::VectorXd residual(const YLocal& y) const {
    const int n = ctx_.phases.size();
    Eigen::VectorXd out(rows_);
    int k = 0;
    CMatrix flow = CMatrix::Zero(n, n);
    if (ctx_.has_line()) {
      const CMatrix& z = ctx_.z;
      const CMatrix S = y.self.S;
      const CMatrix drop = phase_project(y.parent_v->dense(), *ctx_.parent_phases, ctx_.phases) - y.self.v.dense() +
                           z * S.adjoint() + S * z.adjoint() - z * y.self.ell.dense() * z.adjoint();
      const HermitianMatrix h = HermitianMatrix::from_dense(drop);
      for (int p = 0; p < h.param_count(); ++p) out(k++) = h.param(p);
      flow -= S;
    }
    for (std::size_t j = 0; j < y.children.size(); ++j) {
      const CMatrix net = y.children[j].S - ctx_.child_z[j] * y.children[j].ell.dense();
      flow += phase_lift(net, ctx_.child_phases[j], ctx_.phases);
    }
    for (int p = 0; p < n; ++p) {
      const complex bal = y.self.s(p) + flow(p, p);
      out(k++) = bal.real();
      out(k++) = bal.imag();
    }
    return out;
  }

  template <class F>
  void visit(const YLocal& y, F&& f) const {
    auto herm = [&](const HermitianMatrix& h) {
      for (int p = 0; p < h.param_count(); ++p) f(h.param(p), h.param_weight(p));
    };
    auto mat = [&](const CMatrix& m) {
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) {
          f(m(r, c).real(), 1.0);
          f(m(r, c).imag(), 1.0);
        }
    };
    if (ctx_.has_line()) {
      mat(y.self.S);
      herm(y.self.ell);
    }
    herm(y.self.v);
    for (int p = 0; p < y.self.s.size(); ++p) {
      f(y.self.s(p).real(), 1.0);
      f(y.self.s(p).imag(), 1.0);
    }
    if (ctx_.has_line()) herm(*y.parent_v);
    for (const auto& ch : y.children) {
      mat(ch.S);
      herm(ch.ell);
    }
  }

 private:
  template <class F>
  void visit_mut(YLocal& y, F&& f) const {
    auto herm = [&](HermitianMatrix& h) {
      for (int p = 0; p < h.param_count(); ++p) f(h.param(p));
    };
    auto mat = [&](CMatrix& m) {
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) {
          double re = 0.0, im = 0.0;
          f(re);
          f(im);
          m(r, c) = {re, im};
        }
    };
    auto vec = [&](CVector& v) {
      for (int p = 0; p < v.size(); ++p) {
        double re = 0.0, im = 0.0;
        f(re);
        f(im);
        v(p) = {re, im};
      }
    };
    if (ctx_.has_line()) {
      mat(y.self.S);
      herm(y.self.ell);
    }
    herm(y.self.v);
    vec(y.self.s);
    if (ctx_.has_line()) herm(*y.parent_v);
    for (auto& ch : y.children) {
      mat(ch.S);
      herm(ch.ell);
    }
  }

  YContext ctx_;
  int size_ = 0;
  int rows_ = 0;
};

/// min 1/2 y^T M y + c^T y  s.t.  A y = 0, with M = diag(m).
struct ConstraintSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd m;
  Eigen::VectorXd c;
  YLayout layout;
};

/// Constraint matrix of the branch-flow rows over the YLocal parameters,
/// assembled column by column from the (linear) residual map.
inline Eigen::MatrixXd branch_flow_matrix(const YLayout& layout) {
  Eigen::MatrixXd A(layout.constraint_rows(), layout.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(layout.size());
  for (int k = 0; k < layout.size(); ++k) {
    e(k) = 1.0;
    A.col(k) = layout.residual(layout.unpack(e));
    e(k) = 0.0;
  }
  return A;
}

/// Diagonal of M: rho * frobenius weight * total consensus weight of each
/// y parameter.
inline Eigen::VectorXd y_penalty_diagonal(const YLayout& layout, double rho) {
  const YContext& ctx = layout.context();
  const ConsensusWeights w{ctx.child_count()};
  const int n = ctx.phases.size();
  YLocal k = layout.zero();
  auto fill = [](HermitianMatrix& h, double v) {
    for (int p = 0; p < h.param_count(); ++p) h.param(p) = v;
  };
  if (ctx.has_line()) {
    k.self.S = CMatrix::Constant(n, n, complex(w.self_S(), w.self_S()));
    fill(k.self.ell, w.self_ell());
    // This bus is a child of its parent, so the copy of the parent's voltage
    // carries the child weight.
    fill(*k.parent_v, w.child_v());
  }
  fill(k.self.v, w.self_v() + w.voltage_copy());
  k.self.s = CVector::Constant(n, complex(w.self_s(), w.self_s()));
  for (auto& ch : k.children) {
    ch.S = CMatrix::Constant(ch.S.rows(), ch.S.cols(), complex(w.parent_S(), w.parent_S()));
    fill(ch.ell, w.parent_ell());
  }
  return rho * layout.pack(k).cwiseProduct(layout.frobenius_weights());
}

/// Linear term: c = -frob * (rho * sum_t k_t x_t + sum_t m_t) per parameter.
inline Eigen::VectorXd y_linear_term(const YLayout& layout, const YTargets& t, double rho) {
  const YContext& ctx = layout.context();
  const ConsensusWeights w{ctx.child_count()};
  if (t.x_children.size() != static_cast<std::size_t>(ctx.child_count()) ||
      t.mu_children.size() != static_cast<std::size_t>(ctx.child_count()))
    throw std::invalid_argument("build_constraint_system: missing child x-value");
  if (ctx.has_line() && (!t.x_parent_v || !t.mu_parent_v))
    throw std::invalid_argument("build_constraint_system: missing parent x-value");
  YLocal acc = layout.zero();
  if (ctx.has_line()) {
    acc.self.S = rho * w.self_S() * t.x_self.S + t.mu_self.S;
    acc.self.ell = rho * w.self_ell() * t.x_self.ell + t.mu_self.ell;
    acc.parent_v = rho * w.child_v() * *t.x_parent_v + *t.mu_parent_v;
  }
  acc.self.v = rho * w.self_v() * t.x_self.v + t.mu_self.v + rho * w.voltage_copy() * t.x_copy + t.lambda;
  acc.self.s = rho * w.self_s() * t.x_self.s + t.mu_self.s;
  for (int j = 0; j < ctx.child_count(); ++j) {
    acc.children[j].S = rho * w.parent_S() * t.x_children[j].S + t.mu_children[j].S;
    acc.children[j].ell = rho * w.parent_ell() * t.x_children[j].ell + t.mu_children[j].ell;
  }
  return -layout.pack(acc).cwiseProduct(layout.frobenius_weights());
}

inline ConstraintSystem build_constraint_system(const YContext& ctx, const YTargets& targets, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("build_constraint_system: rho must be positive");
  if (ctx.child_z.size() != ctx.child_phases.size())
    throw std::invalid_argument("build_constraint_system: child impedance list does not match children");
  ConstraintSystem sys;
  sys.layout = YLayout(ctx);
  sys.A = branch_flow_matrix(sys.layout);
  sys.m = y_penalty_diagonal(sys.layout, rho);
  sys.c = y_linear_term(sys.layout, targets, rho);
  return sys;
}

/// Closed form of the equality-constrained diagonal QP:
/// y = (M^-1 A^T (A M^-1 A^T)^-1 A M^-1 - M^-1) c.
inline Eigen::VectorXd solve_equality_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& m, const Eigen::VectorXd& c) {
  if (A.cols() != m.size() || m.size() != c.size()) throw std::invalid_argument("solve_equality_qp: dimension mismatch");
  if ((m.array() <= 0.0).any()) throw std::invalid_argument("solve_equality_qp: M must be positive");
  const Eigen::VectorXd minv = m.cwiseInverse();
  const Eigen::VectorXd minv_c = minv.cwiseProduct(c);
  if (A.rows() == 0) return -minv_c;
  const Eigen::MatrixXd K = A * minv.asDiagonal() * A.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw std::runtime_error("solve_equality_qp: A M^-1 A^T is singular");
  return minv.cwiseProduct(A.transpose() * llt.solve(A * minv_c)) - minv_c;
}

inline YLocal solve_y_node(const ConstraintSystem& sys) {
  return sys.layout.unpack(solve_equality_qp(sys.A, sys.m, sys.c));
}

/// y-update of one bus with A, M and the Cholesky factor of A M^-1 A^T
/// computed once; they depend only on the network and rho.
class YNodeSolver {
 public:
  YNodeSolver() = default;
  YNodeSolver(const YContext& ctx, double rho) : layout_(ctx), rho_(rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("YNodeSolver: rho must be positive");
    A_ = branch_flow_matrix(layout_);
    minv_ = y_penalty_diagonal(layout_, rho).cwiseInverse();
    llt_.compute(A_ * minv_.asDiagonal() * A_.transpose());
    if (llt_.info() != Eigen::Success) throw std::runtime_error("YNodeSolver: branch-flow rows are rank deficient");
  }

  const YLayout& layout() const { return layout_; }

  YLocal solve(const YTargets& targets) const {
    const Eigen::VectorXd minv_c = minv_.cwiseProduct(y_linear_term(layout_, targets, rho_));
    const Eigen::VectorXd y = minv_.cwiseProduct(A_.transpose() * llt_.solve(A_ * minv_c)) - minv_c;
    return layout_.unpack(y);
  }

 private:
  YLayout layout_;
  double rho_ = 1.0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd minv_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace mpopf

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "mpopf/hermitian.hpp"
#include "mpopf/network.hpp"
#include "mpopf/subproblems.hpp"

namespace mpopf {

enum class ExecutionMode { serial, parallel };

inline const char* to_string(ExecutionMode m) { return m == ExecutionMode::serial ? "serial" : "parallel"; }

inline ExecutionMode parse_execution_mode(const std::string& s) {
  if (s == "serial") return ExecutionMode::serial;
  if (s == "parallel") return ExecutionMode::parallel;
  throw std::invalid_argument("unknown mode '" + s + "' (expected serial or parallel)");
}

struct SolverConfig {
  double rho = 1.0;
  /// Both residuals must fall below tol_scale * sqrt(|N|).
  double tol_scale = 1e-4;
  int max_iters = 20000;
  ExecutionMode mode = ExecutionMode::serial;
  /// Worker cap for parallel mode; 0 means hardware concurrency.
  int max_workers = 0;

  void validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (!(tol_scale > 0.0)) throw std::invalid_argument("tol_scale must be positive");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
  }
};

struct IterationStats {
  int k = 0;
  double r = 0.0;
  double s = 0.0;
  double objective = 0.0;

  friend bool operator==(const IterationStats&, const IterationStats&) = default;
};

enum class RunStatus { converged, max_iters };

/// A subproblem failure, tagged with the 1-based iteration it occurred in.
class SolverError : public std::runtime_error {
 public:
  SolverError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

inline const char* to_string(RunStatus s) { return s == RunStatus::converged ? "converged" : "max-iters"; }

/// Local variables of one bus agent: its copies x_{i0}, x_{i1}, the
/// observations it owns (y_ii, parent voltage, children's line flows) and the
/// multipliers of every consensus constraint whose y side it owns.
struct AgentState {
  XBlock x0;
  HermitianMatrix x1;
  HermitianMatrix lambda1;
  YLocal y;
  XBlock mu_self;
  std::optional<HermitianMatrix> mu_parent_v;
  std::vector<LineObservation> mu_children;
};

/// x_{j0} components a neighbor needs for its y-update: (S, l) for the
/// parent, v for each child.
struct XShare {
  int sender = -1;
  std::optional<LineObservation> line;
  std::optional<HermitianMatrix> v;
};

/// Observations y_{ji} and multipliers mu_{ji} held by the sender about the
/// receiver j: the receiver's voltage when j is the sender's parent, the
/// receiver's (S, l) when j is a child.
struct YShare {
  int sender = -1;
  std::optional<HermitianMatrix> v;
  std::optional<HermitianMatrix> mu_v;
  std::optional<LineObservation> line;
  std::optional<LineObservation> mu_line;
};

using Message = std::variant<XShare, YShare>;

/// Per-edge message slots. Every bus has one inbound slot per neighbor, so
/// agents running concurrently never write the same slot. Sends to
/// non-neighbors are rejected.
class Mailbox {
 public:
  Mailbox() = default;
  explicit Mailbox(const FeederModel& model) : model_(&model) {
    const int n = model.size();
    from_parent_.resize(n);
    from_children_.resize(n);
    sent_.assign(n, {});
    for (int i = 0; i < n; ++i) from_children_[i].resize(model.children(i).size());
  }

  void post(int sender, int receiver, Message msg) {
    Message& slot = slot_for(sender, receiver);
    slot = std::move(msg);
    ++sent_[sender][receiver];
  }

  const Message& from_parent(int i) const { return from_parent_[i]; }
  const Message& from_child(int i, std::size_t k) const { return from_children_[i][k]; }

  /// Message count per (sender, receiver) pair posted so far.
  std::map<std::pair<int, int>, long> log() const {
    std::map<std::pair<int, int>, long> out;
    for (std::size_t s = 0; s < sent_.size(); ++s)
      for (const auto& [r, count] : sent_[s]) out[{static_cast<int>(s), r}] += count;
    return out;
  }

 private:
  Message& slot_for(int sender, int receiver) {
    if (model_->parent(receiver) == sender) return from_parent_[receiver];
    const auto& ch = model_->children(receiver);
    for (std::size_t k = 0; k < ch.size(); ++k)
      if (ch[k] == sender) return from_children_[receiver][k];
    throw std::logic_error("message from bus " + std::to_string(sender) + " to non-neighbor " +
                           std::to_string(receiver));
  }

  const FeederModel* model_ = nullptr;
  std::vector<Message> from_parent_;
  std::vector<std::vector<Message>> from_children_;
  // Indexed by sender so concurrent agents only touch their own entry.
  std::vector<std::map<int, long>> sent_;
};

/// Runs fn(i) for every agent. Serial mode walks buses in index order;
/// parallel mode stripes agents over a fixed set of persistent workers.
class AgentExecutor {
 public:
  AgentExecutor(ExecutionMode mode, int agents, int max_workers) {
    if (mode == ExecutionMode::serial) return;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    int workers = std::min(agents, max_workers > 0 ? max_workers : hw);
    // Parallel mode always runs agents off the calling thread, even on one core.
    workers = std::max(workers, 1);
    for (int w = 0; w < workers; ++w)
      threads_.emplace_back([this, w, workers] { worker_loop(w, workers); });
  }

  ~AgentExecutor() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  AgentExecutor(const AgentExecutor&) = delete;
  AgentExecutor& operator=(const AgentExecutor&) = delete;

  void for_each(int agents, const std::function<void(int)>& fn) {
    if (threads_.empty()) {
      for (int i = 0; i < agents; ++i) fn(i);
      return;
    }
    std::unique_lock lock(mu_);
    job_ = &fn;
    agents_ = agents;
    pending_ = static_cast<int>(threads_.size());
    error_ = nullptr;
    ++generation_;
    cv_.notify_all();
    done_cv_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void worker_loop(int w, int workers) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* job = nullptr;
      int agents = 0;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
        agents = agents_;
      }
      std::exception_ptr err;
      try {
        for (int i = w; i < agents; i += workers) (*job)(i);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(mu_);
        if (err && !error_) error_ = err;
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* job_ = nullptr;
  int agents_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Flat-start phasor: 1, e^{-i 2pi/3}, e^{+i 2pi/3} on phases a, b, c.
inline CVector flat_start_voltage(PhaseSet phases) {
  CVector V(phases.size());
  int k = 0;
  for (Phase p : phases.phases()) {
    const double angle = p == Phase::a ? 0.0 : (p == Phase::b ? -2.0 : 2.0) * std::numbers::pi / 3.0;
    V(k++) = std::polar(1.0, angle);
  }
  return V;
}

/// Starting injection: box midpoint when both bounds are finite, otherwise 0
/// clamped into the box; the origin for disks.
inline complex initial_injection(const InjectionRegion& region) {
  if (const auto* box = std::get_if<BoxRegion>(&region)) {
    auto pick = [](double lo, double hi) {
      if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
      return clamp_to(0.0, lo, hi);
    };
    return {pick(box->p_lo, box->p_hi), pick(box->q_lo, box->q_hi)};
  }
  return {0.0, 0.0};
}

/// Zero-impedance branch currents: I_i = conj(s_i / V_i) + sum of children's
/// currents on the shared phases, accumulated leaves first.
inline std::vector<CVector> flat_start_currents(const FeederModel& model, const std::vector<CVector>& V,
                                                const std::vector<CVector>& s) {
  const int n = model.size();
  std::vector<int> order{0};
  for (std::size_t k = 0; k < order.size(); ++k)
    for (int c : model.children(order[k])) order.push_back(c);
  std::vector<CVector> I(n);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int i = *it;
    I[i] = (s[i].array() / V[i].array()).conjugate().matrix();
    for (int j : model.children(i)) I[i] += phase_lift(I[j], model.phases(j), model.phases(i));
  }
  return I;
}

struct EngineTimings {
  double x_seconds = 0.0;
  double y_seconds = 0.0;
  double multiplier_seconds = 0.0;
};

struct RunResult {
  std::vector<XBlock> solution;
  std::vector<IterationStats> history;
  RunStatus status = RunStatus::max_iters;
  EngineTimings timings;
};

/// Bulk-synchronous simulation of the per-bus agents. Each round runs every
/// agent on its own state and inbound messages, then a barrier.
class Engine {
 public:
  Engine(const FeederModel& model, SolverConfig config)
      : model_(model),
        config_((config.validate(), config)),
        mailbox_(model),
        executor_(config.mode, model.size(), config.max_workers) {
    const int n = model.size();
    y_solvers_.reserve(n);
    for (int i = 0; i < n; ++i) y_solvers_.emplace_back(YContext::from_model(model, i), config_.rho);
    primal_sq_.assign(n, 0.0);
    dual_sq_.assign(n, 0.0);
    initialize();
  }

  const FeederModel& model() const { return model_; }
  const SolverConfig& config() const { return config_; }
  const std::vector<AgentState>& states() const { return states_; }
  std::vector<AgentState>& mutable_states() { return states_; }
  const Mailbox& mailbox() const { return mailbox_; }
  const EngineTimings& timings() const { return timings_; }

  /// Flat start, zero-impedance currents, y = x, zero multipliers; then every
  /// agent publishes its observations.
  void initialize() {
    const int n = model_.size();
    std::vector<CVector> V(n), s(n);
    for (int i = 0; i < n; ++i) {
      V[i] = flat_start_voltage(model_.phases(i));
      const auto& bus = model_.bus(i);
      s[i].resize(model_.phases(i).size());
      for (int k = 0; k < s[i].size(); ++k) {
        if (const auto* disk = std::get_if<DiskRegion>(&bus.region[k]); disk && disk->s_max < 0.0)
          throw std::invalid_argument("bus " + std::to_string(bus.id) + ": empty injection region");
        s[i](k) = initial_injection(bus.region[k]);
      }
    }
    const std::vector<CVector> I = flat_start_currents(model_, V, s);

    states_.assign(n, {});
    for (int i = 0; i < n; ++i) {
      const int d = model_.phases(i).size();
      const bool line = model_.parent(i) >= 0;
      XBlock x = XBlock::zero(d, line);
      x.v = HermitianMatrix::outer(V[i]);
      x.s = s[i];
      if (line) {
        x.S = V[i] * I[i].adjoint();
        x.ell = HermitianMatrix::outer(I[i]);
      }
      states_[i].x0 = x;
      states_[i].x1 = x.v;
      states_[i].lambda1 = HermitianMatrix::zero(d);
      states_[i].mu_self = XBlock::zero(d, line);
    }
    for (int i = 0; i < n; ++i) {
      AgentState& a = states_[i];
      a.y.self = a.x0;
      if (model_.parent(i) >= 0) {
        const int p = model_.parent(i);
        a.y.parent_v = states_[p].x0.v;
        a.mu_parent_v = HermitianMatrix::zero(model_.phases(p).size());
      }
      for (int j : model_.children(i)) {
        a.y.children.push_back({states_[j].x0.S, states_[j].x0.ell});
        a.mu_children.push_back(LineObservation::zero(model_.phases(j).size()));
      }
    }
    executor_.for_each(n, [this](int i) { publish_y(i); });
    iteration_ = 0;
  }

  /// x_{i0} by square completion + PSD projection + injection projection,
  /// x_{i1} by the voltage clamp; then each agent sends its x0 parts.
  void x_update_round() {
    const auto t0 = std::chrono::steady_clock::now();
    executor_.for_each(model_.size(), [this](int i) { x_update_agent(i); });
    timings_.x_seconds += seconds_since(t0);
    executor_.for_each(model_.size(), [this](int i) { publish_x(i); });
  }

  void y_update_round() {
    const auto t0 = std::chrono::steady_clock::now();
    executor_.for_each(model_.size(), [this](int i) { y_update_agent(i); });
    timings_.y_seconds += seconds_since(t0);
  }

  /// Dual step lambda += rho (x - y) on every consensus pair, then each
  /// agent publishes its updated observations and multipliers.
  void multiplier_update_round() {
    const auto t0 = std::chrono::steady_clock::now();
    executor_.for_each(model_.size(), [this](int i) { multiplier_update_agent(i); });
    timings_.multiplier_seconds += seconds_since(t0);
    executor_.for_each(model_.size(), [this](int i) { publish_y(i); });
  }

  /// (r, s) from the per-agent partial sums of the last y-round, reduced in
  /// bus order.
  std::pair<double, double> compute_residuals() const {
    double r2 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < primal_sq_.size(); ++i) {
      r2 += primal_sq_[i];
      s2 += dual_sq_[i];
    }
    return {std::sqrt(r2), config_.rho * std::sqrt(s2)};
  }

  double objective() const {
    double f = 0.0;
    for (int i = 0; i < model_.size(); ++i) {
      const auto& bus = model_.bus(i);
      for (int k = 0; k < states_[i].x0.s.size(); ++k) f += bus.cost[k](states_[i].x0.s(k).real());
    }
    return f;
  }

  IterationStats step() {
    x_update_round();
    y_update_round();
    multiplier_update_round();
    const auto [r, s] = compute_residuals();
    return {++iteration_, r, s, objective()};
  }

  double tolerance() const { return config_.tol_scale * std::sqrt(static_cast<double>(model_.size())); }

  RunResult run() {
    RunResult out;
    const double tol = tolerance();
    for (int k = 0; k < config_.max_iters; ++k) {
      try {
        out.history.push_back(step());
      } catch (const std::exception& e) {
        throw SolverError(k + 1, e.what());
      }
      const auto& st = out.history.back();
      if (st.r <= tol && st.s <= tol) {
        out.status = RunStatus::converged;
        break;
      }
    }
    out.solution = solution();
    out.timings = timings_;
    return out;
  }

  std::vector<XBlock> solution() const {
    std::vector<XBlock> out;
    out.reserve(states_.size());
    for (const auto& a : states_) out.push_back(a.x0);
    return out;
  }

  /// Inputs of bus i's y-update as of the last x-round.
  YTargets y_update_inputs(int i) const { return y_targets(i); }

  /// Inputs of bus i's x0-update, read from its own state and the YShares
  /// of its neighbors.
  X0Neighborhood x0_neighborhood(int i) const {
    const AgentState& a = states_[i];
    X0Neighborhood nb;
    nb.y_self = a.y.self;
    nb.mu_self = a.mu_self;
    if (model_.parent(i) >= 0) {
      const auto& msg = std::get<YShare>(mailbox_.from_parent(i));
      nb.y_parent = *msg.line;
      nb.mu_parent = *msg.mu_line;
    }
    for (std::size_t k = 0; k < model_.children(i).size(); ++k) {
      const auto& msg = std::get<YShare>(mailbox_.from_child(i, k));
      nb.y_children.push_back(*msg.v);
      nb.mu_children.push_back(*msg.mu_v);
    }
    return nb;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void x_update_agent(int i) {
    AgentState& a = states_[i];
    const auto& bus = model_.bus(i);
    a.x0 = solve_x0(x0_neighborhood(i), bus, config_.rho);
    a.x1 = solve_x1_voltage(a.lambda1, a.y.self.v, bus.v_lo, bus.v_hi, config_.rho);
  }

  void publish_x(int i) {
    const AgentState& a = states_[i];
    if (const int p = model_.parent(i); p >= 0) {
      XShare msg;
      msg.sender = i;
      msg.line = LineObservation{a.x0.S, a.x0.ell};
      mailbox_.post(i, p, std::move(msg));
    }
    for (int j : model_.children(i)) {
      XShare msg;
      msg.sender = i;
      msg.v = a.x0.v;
      mailbox_.post(i, j, std::move(msg));
    }
  }

  void publish_y(int i) {
    const AgentState& a = states_[i];
    if (const int p = model_.parent(i); p >= 0) {
      YShare msg;
      msg.sender = i;
      msg.v = *a.y.parent_v;
      msg.mu_v = *a.mu_parent_v;
      mailbox_.post(i, p, std::move(msg));
    }
    const auto& ch = model_.children(i);
    for (std::size_t k = 0; k < ch.size(); ++k) {
      YShare msg;
      msg.sender = i;
      msg.line = a.y.children[k];
      msg.mu_line = a.mu_children[k];
      mailbox_.post(i, ch[k], std::move(msg));
    }
  }

  // x-values of neighbors as received in this iteration's XShares.
  YTargets y_targets(int i) const {
    const AgentState& a = states_[i];
    YTargets t;
    t.x_self = a.x0;
    t.mu_self = a.mu_self;
    t.x_copy = a.x1;
    t.lambda = a.lambda1;
    if (model_.parent(i) >= 0) {
      t.x_parent_v = *std::get<XShare>(mailbox_.from_parent(i)).v;
      t.mu_parent_v = a.mu_parent_v;
    }
    for (std::size_t k = 0; k < model_.children(i).size(); ++k) {
      t.x_children.push_back(*std::get<XShare>(mailbox_.from_child(i, k)).line);
      t.mu_children.push_back(a.mu_children[k]);
    }
    return t;
  }

  void y_update_agent(int i) {
    AgentState& a = states_[i];
    YLocal next = y_solvers_[i].solve(y_targets(i));
    const YLayout& layout = y_solvers_[i].layout();
    dual_sq_[i] = (layout.pack(next) - layout.pack(a.y)).cwiseAbs2().cwiseProduct(layout.frobenius_weights()).sum();
    a.y = std::move(next);
  }

  void multiplier_update_agent(int i) {
    AgentState& a = states_[i];
    const double rho = config_.rho;
    const YTargets t = y_targets(i);
    double r2 = 0.0;

    const HermitianMatrix gap_copy = a.x1 - a.y.self.v;
    a.lambda1 += rho * gap_copy;
    r2 += squared_norm(gap_copy);

    const HermitianMatrix gap_v = a.x0.v - a.y.self.v;
    const CVector gap_s = a.x0.s - a.y.self.s;
    a.mu_self.v += rho * gap_v;
    a.mu_self.s += rho * gap_s;
    r2 += squared_norm(gap_v) + squared_norm(gap_s);
    if (a.x0.has_line()) {
      const CMatrix gap_S = a.x0.S - a.y.self.S;
      const HermitianMatrix gap_l = a.x0.ell - a.y.self.ell;
      a.mu_self.S += rho * gap_S;
      a.mu_self.ell += rho * gap_l;
      r2 += squared_norm(gap_S) + squared_norm(gap_l);

      const HermitianMatrix gap_pv = *t.x_parent_v - *a.y.parent_v;
      *a.mu_parent_v += rho * gap_pv;
      r2 += squared_norm(gap_pv);
    }
    for (std::size_t k = 0; k < a.y.children.size(); ++k) {
      const CMatrix gap_S = t.x_children[k].S - a.y.children[k].S;
      const HermitianMatrix gap_l = t.x_children[k].ell - a.y.children[k].ell;
      a.mu_children[k].S += rho * gap_S;
      a.mu_children[k].ell += rho * gap_l;
      r2 += squared_norm(gap_S) + squared_norm(gap_l);
    }
    primal_sq_[i] = r2;
  }

  const FeederModel& model_;
  SolverConfig config_;
  Mailbox mailbox_;
  AgentExecutor executor_;
  std::vector<YNodeSolver> y_solvers_;
  std::vector<AgentState> states_;
  std::vector<double> primal_sq_;
  std::vector<double> dual_sq_;
  EngineTimings timings_;
  int iteration_ = 0;
};

/// Runs the distributed iteration until both residuals are below
/// tol_scale * sqrt(|N|) or max_iters is reached.
inline RunResult run(const FeederModel& model, const SolverConfig& config) {
  Engine engine(model, config);
  return engine.run();
}

}  // namespace mpopf

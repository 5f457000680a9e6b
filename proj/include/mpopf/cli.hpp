#pragma once

#include <chrono>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpopf/engine.hpp"
#include "mpopf/io.hpp"
#include "mpopf/network.hpp"
#include "mpopf/verification.hpp"

namespace mpopf::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kMaxIters = 2, kInvalid = 3, kIo = 4 };

struct RunManifest {
  std::string network;
  SolverConfig config;
  std::string model_hash;
  int buses = 0;
  RunStatus status = RunStatus::max_iters;
  int iterations = 0;
  double total_seconds = 0.0;
  double per_bus_seconds = 0.0;
  double r = 0.0;
  double s = 0.0;
  double objective = 0.0;
  ExactnessReport exactness;

  json to_json() const {
    return {{"network", network},
            {"config",
             {{"rho", config.rho},
              {"tol_scale", config.tol_scale},
              {"max_iters", config.max_iters},
              {"mode", to_string(config.mode)},
              {"max_workers", config.max_workers}}},
            {"model_hash", model_hash},
            {"buses", buses},
            {"status", to_string(status)},
            {"iterations", iterations},
            {"wall_time_total_s", total_seconds},
            {"wall_time_per_bus_s", per_bus_seconds},
            {"final_residuals", {{"r", r}, {"s", s}, {"tolerance", config.tol_scale * std::sqrt(double(buses))}}},
            {"objective", objective},
            {"exactness", exactness_to_json(exactness)}};
  }
};

struct SolveOutcome {
  RunResult result;
  RunManifest manifest;
};

/// Shared by `solve` and `bench`: one timed engine run plus its manifest.
inline SolveOutcome solve_model(const FeederModel& model, const SolverConfig& config, double rank_threshold,
                                const std::string& network_name) {
  SolveOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  out.result = run(model, config);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunManifest& m = out.manifest;
  m.network = network_name;
  m.config = config;
  m.model_hash = model_hash(model);
  m.buses = model.size();
  m.status = out.result.status;
  m.iterations = static_cast<int>(out.result.history.size());
  m.total_seconds = total;
  m.per_bus_seconds = total / model.size();
  if (!out.result.history.empty()) {
    m.r = out.result.history.back().r;
    m.s = out.result.history.back().s;
    m.objective = out.result.history.back().objective;
  }
  m.exactness = check_rank1(out.result.solution, model, rank_threshold);
  return out;
}

struct SolverFlags {
  double rho = 1.0;
  double tol = 1e-4;
  int max_iters = 20000;
  std::string mode = "serial";
  int workers = 0;

  void attach(CLI::App& cmd) {
    cmd.add_option("--rho", rho, "ADMM penalty parameter")->capture_default_str();
    cmd.add_option("--tol", tol, "residual tolerance scale (stop at tol*sqrt(|N|))")->capture_default_str();
    cmd.add_option("--max-iters", max_iters, "iteration cap")->capture_default_str();
    cmd.add_option("--mode", mode, "serial or parallel")
        ->check(CLI::IsMember({"serial", "parallel"}))
        ->capture_default_str();
    cmd.add_option("--workers", workers, "worker cap in parallel mode (0: hardware concurrency)")
        ->capture_default_str();
  }

  SolverConfig config() const {
    SolverConfig c;
    c.rho = rho;
    c.tol_scale = tol;
    c.max_iters = max_iters;
    c.mode = parse_execution_mode(mode);
    c.max_workers = workers;
    c.validate();
    return c;
  }
};

struct SolveOptions {
  std::string network;
  std::string out_dir = ".";
  double threshold = 1e-2;
  SolverFlags solver;
};

inline int cmd_solve(const SolveOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const SolverConfig config = opt.solver.config();
    const FeederModel model = load_feeder_file(opt.network);
    const SolveOutcome run = solve_model(model, config, opt.threshold, opt.network);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create '" + opt.out_dir + "': " + ec.message());
    const fs::path dir(opt.out_dir);

    const SolutionInfo info{to_string(run.result.status), run.manifest.iterations, run.manifest.objective};
    write_text_file((dir / "solution.json").string(), solution_to_json(run.result.solution, model, info).dump(2) + "\n");
    std::ostringstream csv;
    write_history_csv(csv, run.result.history);
    write_text_file((dir / "history.csv").string(), csv.str());
    write_text_file((dir / "manifest.json").string(), run.manifest.to_json().dump(2) + "\n");

    out << "status " << to_string(run.result.status) << ", " << run.manifest.iterations << " iterations, objective "
        << run.manifest.objective << ", r " << run.manifest.r << ", s " << run.manifest.s << "\n";
    out << "wall time " << run.manifest.total_seconds << " s (" << run.manifest.per_bus_seconds << " s per bus)\n";
    write_exactness_report(out, run.manifest.exactness);
    out << "wrote " << (dir / "solution.json").string() << ", history.csv, manifest.json\n";
    return run.result.status == RunStatus::converged ? kOk : kMaxIters;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FeederParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ValidationError& e) {
    err << "error: " << opt.network << ": " << e.what() << "\n";
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: solver failed: " << e.what() << "\n";
    return kFailure;
  }
}

struct GenerateOptions {
  std::string kind = "line";
  int size = 0;
  std::string out;  // empty: stdout
};

inline int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const FeederModel model = generate_topology(parse_topology_kind(opt.kind), opt.size);
    const std::string text = feeder_to_json(model.spec()).dump(2) + "\n";
    if (opt.out.empty()) {
      out << text;
    } else {
      write_text_file(opt.out, text);
      out << "wrote " << opt.out << " (" << model.size() << " buses, diameter " << model.diameter() << ")\n";
    }
    return kOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

struct BenchOptions {
  std::vector<std::string> kinds{"line", "fat-tree"};
  std::vector<int> sizes;
  std::string out;  // empty: stdout
  SolverFlags solver;
};

inline void write_bench_header(std::ostream& out) { out << "kind,size,iterations,total_s,per_bus_s\n"; }

inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (opt.sizes.empty()) throw std::invalid_argument("bench: --sizes must list at least one size");
    if (opt.kinds.empty()) throw std::invalid_argument("bench: --kinds must list at least one kind");
    const SolverConfig config = opt.solver.config();
    std::vector<TopologyKind> kinds;
    for (const auto& k : opt.kinds) kinds.push_back(parse_topology_kind(k));
    for (int n : opt.sizes)
      if (n < 2) throw std::invalid_argument("bench: size must be at least 2, got " + std::to_string(n));

    std::ostringstream csv;
    csv.precision(10);
    write_bench_header(csv);
    bool all_converged = true;
    for (TopologyKind kind : kinds) {
      for (int n : opt.sizes) {
        const FeederModel model = generate_topology(kind, n);
        const SolveOutcome run = solve_model(model, config, 1e-2, to_string(kind));
        all_converged = all_converged && run.result.status == RunStatus::converged;
        csv << to_string(kind) << ',' << n << ',' << run.manifest.iterations << ',' << run.manifest.total_seconds
            << ',' << run.manifest.per_bus_seconds << '\n';
        err << to_string(kind) << " " << n << ": " << to_string(run.result.status) << " after "
            << run.manifest.iterations << " iterations\n";
      }
    }
    if (opt.out.empty()) {
      out << csv.str();
    } else {
      write_text_file(opt.out, csv.str());
      out << "wrote " << opt.out << "\n";
    }
    return all_converged ? kOk : kMaxIters;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: solver failed: " << e.what() << "\n";
    return kFailure;
  }
}

struct VerifyOptions {
  std::string solution;
  std::string network;
  double tol = 1e-3;
  double threshold = 1e-2;
  bool require_exact = false;
  std::string report;  // optional JSON report path
};

/// Exit code 0 when the BFM residuals pass (and, with require_exact, the
/// rank-1 check); 3 otherwise.
inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const FeederModel model = load_feeder_file(opt.network);
    json doc;
    try {
      doc = detail::parse_json_text(read_text_file(opt.solution));
    } catch (const FeederParseError& e) {
      throw FeederParseError(opt.solution + ": " + e.what());
    }
    const std::vector<XBlock> solution = solution_from_json(doc, model);
    const BfmReport bfm = check_bfm_feasibility(solution, model, opt.tol);
    const ExactnessReport exact = check_rank1(solution, model, opt.threshold);
    write_bfm_report(out, bfm);
    write_exactness_report(out, exact);
    if (!opt.report.empty()) {
      const json rep{{"bfm", bfm_report_to_json(bfm)}, {"exactness", exactness_to_json(exact)}};
      write_text_file(opt.report, rep.dump(2) + "\n");
    }
    const bool ok = bfm.pass && (exact.exact || !opt.require_exact);
    out << (ok ? "verified" : "verification failed") << "\n";
    return ok ? kOk : kInvalid;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const DimensionError& e) {
    err << "error: dimension mismatch: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

/// Full command line entry point; returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed ADMM optimal power flow for unbalanced radial feeders", "mpopf"};
  app.require_subcommand(1);

  SolveOptions solve;
  auto* s = app.add_subcommand("solve", "solve a feeder and write solution.json, history.csv, manifest.json");
  s->add_option("--network", solve.network, "feeder-json file")->required();
  s->add_option("--out-dir", solve.out_dir, "output directory")->capture_default_str();
  s->add_option("--threshold", solve.threshold, "rank-1 ratio threshold")->capture_default_str();
  solve.solver.attach(*s);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "generate a line or fat-tree feeder");
  g->add_option("--kind", gen.kind, "line or fat-tree")->capture_default_str();
  g->add_option("--size", gen.size, "number of buses (>= 2)")->required();
  g->add_option("-o,--out", gen.out, "output file (default: stdout)");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "iteration counts of line vs fat-tree feeders");
  b->add_option("--kinds", bench.kinds, "topology kinds")->delimiter(',')->capture_default_str();
  b->add_option("--sizes", bench.sizes, "feeder sizes")->delimiter(',')->required();
  b->add_option("-o,--out", bench.out, "CSV output file (default: stdout)");
  bench.solver.attach(*b);

  VerifyOptions ver;
  auto* v = app.add_subcommand("verify", "check a solution against a feeder");
  v->add_option("--solution", ver.solution, "solution document")->required();
  v->add_option("--network", ver.network, "feeder-json file")->required();
  v->add_option("--tol", ver.tol, "BFM residual tolerance")->capture_default_str();
  v->add_option("--threshold", ver.threshold, "rank-1 ratio threshold")->capture_default_str();
  v->add_flag("--require-exact", ver.require_exact, "fail unless every line block is rank-1");
  v->add_option("--report", ver.report, "write a JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  if (s->parsed()) return cmd_solve(solve, out, err);
  if (g->parsed()) return cmd_generate(gen, out, err);
  if (b->parsed()) return cmd_bench(bench, out, err);
  return cmd_verify(ver, out, err);
}

}  // namespace mpopf::cli

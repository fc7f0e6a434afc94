// yamabe: solve a configured boundary-value problem or run a property suite.
//
//   yamabe solve  --config run.json [--out DIR]
//   yamabe verify --config run.json --suite NAME [--out DIR] [--seed N] [--levels N]
//
// Exit status: 0 success, 1 suite failed, 2 invalid input, 3 solver failure.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>

#include "CLI11.hpp"
#include "yamabe/yamabe.hpp"

namespace fs = std::filesystem;
using namespace yamabe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSuiteFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

bool wants(const RunConfig& c, const std::string& format) {
  return std::find(c.outputs.formats.begin(), c.outputs.formats.end(), format) != c.outputs.formats.end();
}

nlohmann::json trace_row(const HomotopyState& st) {
  nlohmann::json j = st;
  j["history"] = st.history;
  return j;
}

void write_trace(const fs::path& dir, const std::vector<HomotopyState>& trace) {
  std::vector<nlohmann::json> rows;
  for (const auto& st : trace) rows.push_back(trace_row(st));
  write_jsonl(dir / "trace.jsonl", rows);
}

nlohmann::json config_echo(const RunConfig& c, const ProblemSpec& spec) {
  return {{"n", c.dim()},
          {"shape", c.shape},
          {"nodes", spec.grid.size()},
          {"k", c.k},
          {"t", c.t},
          {"tol_newton", spec.tol_newton},
          {"schedule", spec.homotopy_schedule}};
}

int run_solve(const RunConfig& c, const fs::path& out) {
  const auto start = std::chrono::steady_clock::now();
  const ProblemSpec spec = build_spec(c);
  const HomotopyProblem prob(spec);
  nlohmann::json summary{{"config", config_echo(c, spec)}};
  std::vector<HomotopyState> trace;
  ScalarField v;
  int status = kExitOk;
  try {
    auto res = continue_homotopy(prob, ScalarField::Zero(static_cast<Eigen::Index>(spec.grid.size())));
    trace = std::move(res.trace);
    v = std::move(res.solution);
  } catch (const ContinuationFailure& e) {
    trace = e.trace();
    summary["error"] = e.what();
    status = kExitSolver;
  } catch (const NonConvergence& e) {
    summary["error"] = e.what();
    status = kExitSolver;
  } catch (const Infeasible& e) {
    summary["error"] = e.what();
    status = kExitSolver;
  }
  write_trace(out, trace);

  double min_margin = std::numeric_limits<double>::infinity();
  int newton = 0;
  for (const auto& st : trace) {
    min_margin = std::min(min_margin, st.min_cone_margin);
    newton += st.newton_iters;
  }
  summary["states"] = trace.size();
  summary["newton_iterations"] = newton;
  summary["min_cone_margin"] = trace.empty() ? nlohmann::json(nullptr) : nlohmann::json(min_margin);
  summary["s_reached"] = trace.empty() ? nlohmann::json(nullptr) : nlohmann::json(trace.back().s);

  if (status == kExitOk) {
    const auto r = prob.residual(v, 1.0);
    const double residual = r.sup_norm();
    const auto bounds = estimate_monitor(v, spec);
    write_json(out / "bounds.json", bounds);
    if (wants(c, "csv")) write_field_csv(out / "solution.csv", spec.grid, {{"v", &v}});
    summary["residual"] = residual;
    summary["within_window"] = bounds.within_window;
    summary["v_min"] = bounds.v_min;
    summary["v_max"] = bounds.v_max;
    if (!(residual <= spec.tol_newton) || !bounds.within_window) status = kExitSolver;
  } else if (!trace.empty() && wants(c, "csv")) {
    v = trace.back().v;
    write_field_csv(out / "solution.csv", spec.grid, {{"v", &v}});
  }
  summary["status"] = status == kExitOk ? "ok" : "solver_failure";
  summary["exit_code"] = status;
  summary["timing"] = {{"runtime_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  write_json(out / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return status;
}

int run_verify(const RunConfig& c, const std::string& suite, std::uint64_t seed, int levels, const fs::path& out) {
  const SuiteReport rep = run_suite(c, suite, seed, levels);
  const nlohmann::json j = rep;
  write_json(out / ("verify_" + suite + ".json"), j);
  std::cout << j.dump(2) << '\n';
  return rep.passed ? kExitOk : kExitSuiteFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fully nonlinear Yamabe-type boundary problems: solver and property suites"};
  app.require_subcommand(1);
  std::string config_path, out_dir, suite;
  std::uint64_t seed = 1;
  int levels = 2;

  auto* solve = app.add_subcommand("solve", "Solve the configured problem by homotopy continuation");
  solve->add_option("--config", config_path, "Run configuration (JSON)")->required();
  solve->add_option("--out", out_dir, "Output directory (overrides outputs.directory)");

  auto* verify = app.add_subcommand("verify", "Run a property suite");
  verify->add_option("--config", config_path, "Run configuration (JSON)")->required();
  verify->add_option("--suite", suite, "hypotheses | conformal | fermi | uniqueness | refinement")->required();
  verify->add_option("--out", out_dir, "Output directory (overrides outputs.directory)");
  verify->add_option("--seed", seed, "Seed for sampled checks");
  verify->add_option("--levels", levels, "Refinement levels ending at the configured grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const RunConfig c = load_config(config_path);
    const fs::path out = out_dir.empty() ? fs::path(c.outputs.directory) : fs::path(out_dir);
    if (verify->parsed() && std::find(suite_names().begin(), suite_names().end(), suite) == suite_names().end()) {
      throw SpecError("unknown suite '" + suite + "'");
    }
    fs::create_directories(out);
    if (solve->parsed()) return run_solve(c, out);
    return run_verify(c, suite, seed, levels, out);
  } catch (const SpecError& e) {
    std::cerr << "yamabe: invalid input: " << e.what() << '\n';
  } catch (const DomainError& e) {
    std::cerr << "yamabe: invalid input: " << e.what() << '\n';
  } catch (const ParameterError& e) {
    std::cerr << "yamabe: invalid input: " << e.what() << '\n';
  } catch (const Error& e) {
    std::cerr << "yamabe: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitInput;
}

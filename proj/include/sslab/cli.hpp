#pragma once

// Command-line front end: flag parsing, preset resolution and file output.
// All numerical work is delegated to the library headers.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sslab/experiments.hpp"
#include "sslab/exponents.hpp"
#include "sslab/scheme.hpp"

namespace sslab::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidInput = 2,
  kNonConvergence = 3,
  kUnwritableOutput = 4,
  kAuditFailure = 5,
};

/// The output directory could not be created or written.
class OutputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset;
  std::optional<int> d;
  std::optional<std::string> r, gamma, theta, m;
  std::optional<int> n_cells;
  std::optional<std::string> datum;
  std::optional<std::string> schedule;
  std::optional<std::string> lambdas;
  std::optional<int> n_fixed;
  std::optional<double> tol_inner, tol_outer, omega;
  std::optional<int> max_inner, max_outer;
  int jobs = 1;
  std::string out_dir = "sslab_out";
  bool json = false;
  std::string load_u, load_v;
  std::optional<int> level;
  std::string grids = "7,15,31";
  bool coupled = false;
  int mms_n = 64;
};

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw DomainError("empty list '" + text + "'");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw DomainError("not an integer: '" + s + "' in '" + text + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw DomainError("not a number: '" + s + "' in '" + text + "'");
    out.push_back(v);
  }
  return out;
}

/// Parameters from flags over the defaults (d=3, r=2, gamma=theta=1/2, m=2).
inline Params params_from(const RunConfig& cfg, Params base = {}) {
  if (cfg.d) base.d = *cfg.d;
  if (cfg.r) base.r = Rational::parse(*cfg.r);
  if (cfg.gamma) base.gamma = Rational::parse(*cfg.gamma);
  if (cfg.theta) base.theta = Rational::parse(*cfg.theta);
  if (cfg.m) base.m = Rational::parse(*cfg.m);
  return base;
}

/// Named preset (default-d3 when none is given) with flag overrides applied.
inline Preset preset_from(const RunConfig& cfg) {
  Preset p = find_preset(cfg.preset.empty() ? "default-d3" : cfg.preset);
  p.params = params_from(cfg, p.params);
  if (cfg.n_cells) p.n_cells = *cfg.n_cells;
  if (cfg.datum) p.datum = DatumSpec::parse(*cfg.datum);
  if (cfg.schedule) p.schedule = parse_int_list(*cfg.schedule);
  if (cfg.lambdas) p.lambdas = parse_double_list(*cfg.lambdas);
  if (cfg.n_fixed) p.n_fixed = *cfg.n_fixed;
  if (cfg.tol_inner) p.it.tol_inner = *cfg.tol_inner;
  if (cfg.tol_outer) p.it.tol_outer = *cfg.tol_outer;
  if (cfg.omega) p.it.omega = *cfg.omega;
  if (cfg.max_inner) p.it.max_inner = *cfg.max_inner;
  if (cfg.max_outer) p.it.max_outer = *cfg.max_outer;
  if (!(p.it.tol_inner > 0.0 && p.it.tol_outer > 0.0)) throw DomainError("tolerances must be > 0");
  if (!(p.it.omega > 0.0 && p.it.omega <= 1.0)) throw DomainError("omega must lie in (0,1]");
  if (p.it.max_inner < 1 || p.it.max_outer < 1) throw DomainError("iteration caps must be >= 1");
  for (int n : p.schedule)
    if (n < 1) throw DomainError("schedule levels must be >= 1");
  if (p.params.d >= 3) p.params.validate();
  return p;
}

/// Creates the directory and proves it is writable.
inline std::filesystem::path prepare_output(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw OutputError("cannot create output directory '" + dir + "'");
  const fs::path probe = p / ".sslab_write_probe";
  {
    std::ofstream os(probe);
    if (!(os << "ok")) throw OutputError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
  return p;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw OutputError("cannot write " + path.string());
  return os;
}

inline nlohmann::json classify_json(const Params& p) {
  const Regime reg = classify(p);
  nlohmann::json regimes = nlohmann::json::array();
  for (const auto& e : reg.entries)
    regimes.push_back({{"regime", to_string(e.tag)}, {"u_exponent", e.u_exponent.str()}, {"statement", describe(e.tag)}});
  nlohmann::json pm = nlohmann::json::array();
  for (const auto& e : p_m(p)) pm.push_back(e.u_exponent.str());
  nlohmann::json j{{"params",
                    {{"d", p.d}, {"r", p.r.str()}, {"gamma", p.gamma.str()}, {"theta", p.theta.str()}, {"m", p.m.str()}}},
                   {"regimes", regimes},
                   {"p_m", pm},
                   {"v_exponent", reg.v_exponent ? nlohmann::json(reg.v_exponent->str()) : nlohmann::json(nullptr)},
                   {"thresholds",
                    {{"d/2", Rational(p.d, 2).str()},
                     {"dual_space", dual_space_threshold(p).str()},
                     {"L^r", lr_threshold(p).str()},
                     {"L^(r+1)", lr1_threshold(p).str()},
                     {"higher_integrability", higher_integrability_threshold(p).str()}}}};
  try {
    j["s_m"] = s_m(p).str();
  } catch (const RegimeError& e) {
    j["s_m"] = nullptr;
    j["s_m_note"] = e.what();
  }
  const auto pos = positivity_condition(p);
  j["positivity"] = {{"holds", pos.holds}, {"branch", pos.branch}};
  return j;
}

inline int cmd_classify(const RunConfig& cfg, std::ostream& out) {
  const Params p = params_from(cfg);
  p.validate();
  const nlohmann::json j = classify_json(p);
  if (cfg.json) {
    out << j.dump(2) << '\n';
    return kOk;
  }
  out << "params: " << p.str() << '\n';
  const Regime reg = classify(p);
  if (reg.none()) out << "regime: none (no theorem applies to these parameters)\n";
  for (const auto& e : reg.entries)
    out << "regime: " << to_string(e.tag) << "  u in L^" << e.u_exponent.str() << "\n  " << describe(e.tag) << '\n';
  out << "v exponent: " << (reg.v_exponent ? reg.v_exponent->str() : std::string("no statement")) << '\n';
  out << "s_m: " << (j["s_m"].is_null() ? j["s_m_note"].get<std::string>() : j["s_m"].get<std::string>()) << '\n';
  const auto pos = positivity_condition(p);
  out << "positivity condition: " << (pos.holds ? "holds" : "fails");
  if (pos.holds) out << " (branch " << pos.branch << ")";
  out << '\n';
  return kOk;
}

inline int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  const Preset preset = preset_from(cfg);
  const ProblemData data = preset.problem();
  const auto dir = prepare_output(cfg.out_dir);
  const SweepResult sweep = sweep_n(data, preset.schedule, preset.it, cfg.jobs);
  {
    auto os = open_output(dir / "sweep.csv");
    write_sweep_csv(sweep, os);
  }
  const auto& last = sweep.states.back();
  {
    auto os = open_output(dir / "u.txt");
    save_field(last.u, os);
  }
  {
    auto os = open_output(dir / "v.txt");
    save_field(last.v, os);
  }
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& s : sweep.states)
    levels.push_back({{"n", s.n},
                      {"converged", s.converged},
                      {"outer_iters", s.outer_iters},
                      {"residual_u", s.residual_u},
                      {"residual_v", s.residual_v},
                      {"message", s.message}});
  {
    auto os = open_output(dir / "summary.json");
    os << nlohmann::json{{"preset", preset.name},
                         {"params", data.params.str()},
                         {"grid", std::to_string(data.grid.n_cells()) + "^" + std::to_string(data.grid.dim())},
                         {"datum", preset.datum.str()},
                         {"fields_level", last.n},
                         {"all_converged", sweep.all_converged()},
                         {"levels", levels}}
                .dump(2)
       << '\n';
  }
  out << "preset " << preset.name << ": " << data.params.str() << ", grid " << data.grid.n_cells() << "^"
      << data.grid.dim() << ", datum " << preset.datum.str() << '\n';
  char buf[200];
  for (std::size_t i = 0; i < sweep.states.size(); ++i) {
    const auto& s = sweep.states[i];
    std::snprintf(buf, sizeof buf, "  n=%-6d %s outer=%-3d |u|_inf=%.6e |v|_inf=%.6e res=(%.1e, %.1e)\n", s.n,
                  s.converged ? "ok     " : "FAILED ", s.outer_iters, sweep.norms[i].sup_u, sweep.norms[i].sup_v,
                  s.residual_u, s.residual_v);
    out << buf;
  }
  out << "wrote " << (dir / "sweep.csv").string() << ", u.txt, v.txt, summary.json\n";
  if (!sweep.all_converged()) {
    out << "non-convergence: partial results written and flagged in sweep.csv\n";
    return kNonConvergence;
  }
  return kOk;
}

inline void print_battery(const BatteryResult& res, std::ostream& out) {
  char buf[256];
  for (const auto& r : res.reports) {
    const auto* w = r.worst();
    std::snprintf(buf, sizeof buf, "  %-4s %-22s worst slack %+.3e  %s\n", r.pass() ? "PASS" : "FAIL", r.id.c_str(),
                  w ? w->slack : 0.0, r.context.c_str());
    out << buf;
  }
  for (const auto& s : res.skipped) out << "  skip " << s << '\n';
}

inline int cmd_verify_all(const RunConfig& cfg, std::ostream& out) {
  const Preset preset = preset_from(cfg);
  const auto dir = prepare_output(cfg.out_dir);
  BatteryResult res;
  if (!cfg.load_u.empty() || !cfg.load_v.empty()) {
    if (cfg.load_u.empty() || cfg.load_v.empty()) throw DomainError("--load-u and --load-v must be given together");
    const ProblemData data = preset.problem();
    const int n = cfg.level.value_or(preset.schedule.back());
    if (n < 1) throw DomainError("--level must be >= 1");
    res = run_state_battery(data, load_field(cfg.load_u), load_field(cfg.load_v), n, preset.it);
  } else {
    res = run_battery(preset, cfg.jobs);
  }
  out << "verify-all " << preset.name << ": " << preset.params.str() << '\n';
  if (res.no_audits) {
    out << "no audits applicable (no regime of the theory covers these parameters)\n";
    auto os = open_output(dir / "summary.txt");
    os << "no audits applicable\n";
    return kOk;
  }
  print_battery(res, out);
  {
    auto os = open_output(dir / "audits.csv");
    write_audit_csv_header(os);
    for (const auto& r : res.reports) write_audit_csv(r, os);
  }
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : res.reports) arr.push_back(to_json(r));
    auto os = open_output(dir / "audits.json");
    os << nlohmann::json{{"preset", preset.name}, {"pass", res.pass()}, {"skipped", res.skipped}, {"audits", arr}}.dump(2)
       << '\n';
  }
  {
    auto os = open_output(dir / "summary.txt");
    print_battery(res, os);
  }
  if (res.pass()) {
    out << "all " << res.reports.size() << " audits passed\n";
    return kOk;
  }
  out << "failures:\n";
  for (const auto& f : res.failures()) out << "  " << f << '\n';
  return res.unconverged ? kNonConvergence : kAuditFailure;
}

inline int cmd_mms(const RunConfig& cfg, std::ostream& out) {
  const int d = cfg.d.value_or(3);
  const auto grids = parse_int_list(cfg.grids);
  const auto dir = prepare_output(cfg.out_dir);
  MmsReport rep;
  if (cfg.coupled) {
    Params p = params_from(cfg);
    p.d = 3;
    p.validate();
    IterationControl it;
    if (cfg.tol_inner) it.tol_inner = *cfg.tol_inner;
    if (cfg.tol_outer) it.tol_outer = *cfg.tol_outer;
    rep = coupled_mms(d, grids, p, cfg.mms_n, it);
  } else {
    rep = linear_mms(d, grids);
  }
  {
    auto os = open_output(dir / "mms.json");
    os << to_json(rep).dump(2) << '\n';
  }
  {
    auto os = open_output(dir / "mms.csv");
    os << "n_cells,h,err_u,err_v\n";
    char buf[128];
    for (const auto& l : rep.levels) {
      std::snprintf(buf, sizeof buf, "%d,%.10e,%.10e,%.10e\n", l.n_cells, l.h, l.err_u, l.err_v);
      os << buf;
    }
  }
  out << rep.label << '\n';
  char buf[160];
  for (std::size_t i = 0; i < rep.levels.size(); ++i) {
    const auto& l = rep.levels[i];
    std::snprintf(buf, sizeof buf, "  h=%.5f  err_u=%.4e", l.h, l.err_u);
    out << buf;
    if (cfg.coupled) {
      std::snprintf(buf, sizeof buf, "  err_v=%.4e", l.err_v);
      out << buf;
    }
    if (i > 0) {
      std::snprintf(buf, sizeof buf, "  order_u=%.3f", rep.orders_u[i - 1]);
      out << buf;
      if (cfg.coupled) {
        std::snprintf(buf, sizeof buf, "  order_v=%.3f", rep.orders_v[i - 1]);
        out << buf;
      }
    }
    out << '\n';
  }
  return kOk;
}

namespace detail {

inline void add_param_flags(CLI::App* app, RunConfig& cfg) {
  app->add_option("--d", cfg.d, "dimension");
  app->add_option("--r", cfg.r, "exponent r (fraction, e.g. 2 or 7/2)");
  app->add_option("--gamma", cfg.gamma, "singular exponent gamma in (0,1), as a fraction");
  app->add_option("--theta", cfg.theta, "singular exponent theta in [0,1), as a fraction");
  app->add_option("--m", cfg.m, "summability m of the datum, as a fraction");
}

inline void add_run_flags(CLI::App* app, RunConfig& cfg) {
  app->add_option("--preset", cfg.preset, "named preset (default-d3, linfty-d3, dual-space-d3, ...)");
  add_param_flags(app, cfg);
  app->add_option("--n-cells", cfg.n_cells, "interior nodes per axis");
  app->add_option("--datum", cfg.datum, "constant:<c>, box:<c> or file:<path>");
  app->add_option("--schedule", cfg.schedule, "comma-separated regularization levels, e.g. 1,2,4,8");
  app->add_option("--lambdas", cfg.lambdas, "comma-separated datum scalings for the family audits");
  app->add_option("--n-fixed", cfg.n_fixed, "regularization level for the family audits");
  app->add_option("--tol-inner", cfg.tol_inner, "inner Picard tolerance");
  app->add_option("--tol-outer", cfg.tol_outer, "outer fixed-point tolerance");
  app->add_option("--max-inner", cfg.max_inner, "inner iteration cap");
  app->add_option("--max-outer", cfg.max_outer, "outer iteration cap");
  app->add_option("--omega", cfg.omega, "initial relaxation in (0,1]");
  app->add_option("--jobs", cfg.jobs, "worker threads for independent levels")->check(CLI::PositiveNumber);
  app->add_option("--out", cfg.out_dir, "output directory")->envname("SSLAB_OUTPUT_DIR");
}

}  // namespace detail

/// Parses argv and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Solver and estimate audits for a doubly singular elliptic system"};
  app.set_config("--config", "", "config file (TOML/INI); command-line flags take precedence");
  app.require_subcommand(1);
  RunConfig cfg;

  auto* classify_cmd = app.add_subcommand("classify", "regime, exponents and positivity for a parameter tuple");
  detail::add_param_flags(classify_cmd, cfg);
  classify_cmd->add_flag("--json", cfg.json, "print the JSON report only");

  auto* solve_cmd = app.add_subcommand("solve", "run the level-n scheme over a schedule and write CSV and fields");
  detail::add_run_flags(solve_cmd, cfg);

  auto* verify_cmd = app.add_subcommand("verify-all", "run every audit applicable to the preset's regime");
  detail::add_run_flags(verify_cmd, cfg);
  verify_cmd->add_option("--load-u", cfg.load_u, "audit this u field instead of solving");
  verify_cmd->add_option("--load-v", cfg.load_v, "audit this v field instead of solving");
  verify_cmd->add_option("--level", cfg.level, "regularization level n of the loaded fields");

  auto* mms_cmd = app.add_subcommand("mms", "manufactured-solution convergence study");
  detail::add_param_flags(mms_cmd, cfg);
  mms_cmd->add_option("--grids", cfg.grids, "comma-separated interior node counts, e.g. 7,15,31");
  mms_cmd->add_flag("--coupled", cfg.coupled, "coupled nonlinear system instead of the linear operator");
  mms_cmd->add_option("--n-reg", cfg.mms_n, "regularization level for the coupled study");
  mms_cmd->add_option("--tol-inner", cfg.tol_inner, "inner Picard tolerance");
  mms_cmd->add_option("--tol-outer", cfg.tol_outer, "outer fixed-point tolerance");
  mms_cmd->add_option("--out", cfg.out_dir, "output directory")->envname("SSLAB_OUTPUT_DIR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    if (classify_cmd->parsed()) return cmd_classify(cfg, out);
    if (solve_cmd->parsed()) return cmd_solve(cfg, out);
    if (verify_cmd->parsed()) return cmd_verify_all(cfg, out);
    if (mms_cmd->parsed()) return cmd_mms(cfg, out);
  } catch (const OutputError& e) {
    err << "error: " << e.what() << '\n';
    return kUnwritableOutput;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << '\n';
    if (cfg.d && *cfg.d > GridSpec::kMaxDim)
      err << "note: exponent-level results for d=" << *cfg.d << " are available through 'classify'\n";
    return kInvalidInput;
  } catch (const AuditRefused& e) {
    err << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const NonConvergence& e) {
    err << "non-convergence: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kUnwritableOutput;
  } catch (const std::runtime_error& e) {
    // load_field and save_field report unreadable or unwritable paths this way
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
  return kInvalidInput;
}

}  // namespace sslab::cli

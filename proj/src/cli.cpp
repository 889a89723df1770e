#include "resocal/cli.hpp"

#include "resocal/circsim.hpp"
#include "resocal/ioformats.hpp"
#include "resocal/onecal.hpp"
#include "resocal/resfit.hpp"
#include "resocal/tlsloss.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <future>
#include <map>
#include <optional>
#include <ostream>

namespace resocal::cli {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct SimulateArgs {
  std::string preset = "table1";
  std::string mode = "reflection";
  std::optional<double> isolation, l1, l2, l3, l4, r, z1, z2, lb1, lb2;
  int points = 2001;
  double linewidths = 20;
  std::string output;
};

circsim::CircuitSpec build_spec(const SimulateArgs& a) {
  circsim::CircuitSpec s;
  if (a.preset == "table1") {
    s = circsim::table1_preset(a.isolation.value_or(300), a.r.value_or(1e8));
  } else if (a.preset == "fig2") {
    s = circsim::fig2_preset(a.l3.value_or(0), a.r.value_or(1e8));
  } else if (a.preset == "fig8b") {
    s = circsim::fig8_preset(a.l3.value_or(90), a.l4.value_or(90), a.r.value_or(1e12));
  } else if (a.preset == "fig8d") {
    s = circsim::fig8_preset(a.l3.value_or(107), a.l4.value_or(17), a.r.value_or(1e12));
  } else {
    s.mode = a.mode == "hanger" ? circsim::Mode::Hanger : circsim::Mode::Reflection;
  }
  if (a.isolation) s.circulator_isolation_db = *a.isolation;
  if (a.l1) s.tl1.length_deg = *a.l1;
  if (a.l2) s.tl2.length_deg = *a.l2;
  if (a.l3) s.tl3.length_deg = *a.l3;
  if (a.l4) s.tl4.length_deg = *a.l4;
  if (a.r) s.r_res = *a.r;
  if (a.z1) s.z1 = *a.z1;
  if (a.z2) s.z2 = *a.z2;
  if (a.lb1) s.wirebond_l1 = *a.lb1 * 1e-9;
  if (a.lb2) s.wirebond_l2 = *a.lb2 * 1e-9;
  s.validate();
  return s;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const auto spec = build_spec(a);
  const auto grid = circsim::resonance_grid(spec, a.points, a.linewidths);
  const auto trace = circsim::simulate(spec, grid);
  std::vector<std::string> comments{
      " resocal simulate preset=" + a.preset + " mode=" + circsim::to_string(spec.mode),
      " z1=" + num(spec.z1) + " z2=" + num(spec.z2) + " l1=" + num(spec.tl1.length_deg) +
          " l2=" + num(spec.tl2.length_deg) + " l3=" + num(spec.tl3.length_deg) + " l4=" + num(spec.tl4.length_deg),
      " r=" + num(spec.r_res) + " isolation_db=" + num(spec.circulator_isolation_db) +
          " lb1_nh=" + num(spec.wirebond_l1 * 1e9) + " lb2_nh=" + num(spec.wirebond_l2 * 1e9),
      " trace: S21"};
  io::write_text_file(a.output, io::write_touchstone(io::TouchstoneDocument::one_port(trace, comments)));
  out << "wrote " << trace.size() << " points to " << a.output << "\n";
  return kOk;
}

struct SolveArgs {
  std::string open, short_, load, kit, def_open, def_short, def_load, output, report;
  double floor = onecal::kDefaultConditioningFloor;
  bool reproducible = false;
};

std::string error_report_csv(const onecal::OnePortErrorTerms& terms) {
  std::string s = "frequency_hz,e00_db,e11_db,e01e10_db\n";
  for (const auto& r : onecal::error_term_report(terms))
    s += num(r.frequency) + "," + num(r.e00_db) + "," + num(r.e11_db) + "," + num(r.e01e10_db) + "\n";
  return s;
}

int cmd_solve_cal(SolveArgs a, std::ostream& out) {
  if (a.kit.empty())
    if (const char* env = std::getenv("RESOCAL_CALKIT")) a.kit = env;
  const bool loose = !a.def_open.empty() || !a.def_short.empty() || !a.def_load.empty();
  if (a.kit.empty() && !loose)
    throw ParameterError("no calibration kit: pass --kit, --def-open/--def-short/--def-load, or set RESOCAL_CALKIT");
  if (loose && (a.def_open.empty() || a.def_short.empty() || a.def_load.empty()))
    throw ParameterError("loose kit definitions need all of --def-open, --def-short and --def-load");
  const onecal::CalKit kit = loose ? io::load_calkit_files(a.def_open, a.def_short, a.def_load, {}, a.floor)
                                   : io::load_calkit(a.kit, a.floor);
  const std::array<ComplexTrace, 3> measured{io::load_trace(a.open), io::load_trace(a.short_),
                                             io::load_trace(a.load)};
  const auto terms = onecal::solve_sol(measured, onecal::resample_kit(kit, measured[0].grid(), a.floor));
  io::write_text_file(a.output, io::write_error_terms(terms, kit.metadata(), !a.reproducible));
  if (!a.report.empty()) io::write_text_file(a.report, error_report_csv(terms));
  out << "solved " << terms.grid.size() << " points, wrote " << a.output << "\n";
  return kOk;
}

struct ApplyArgs {
  std::string terms, input, output;
};

int cmd_apply_cal(const ApplyArgs& a, std::ostream& out) {
  const auto doc = io::read_touchstone(a.input);
  if (doc.size() == 0) throw ParseError(a.input + ": no data points", 0);
  const auto measured = doc.primary_trace();
  const auto terms = onecal::resample_terms(io::load_error_terms(a.terms), measured.grid());
  const auto corrected = onecal::apply_cal(terms, measured);
  auto comments = doc.comments;
  comments.push_back(" corrected with " + std::filesystem::path(a.terms).filename().string());
  io::write_text_file(a.output, io::write_touchstone(io::TouchstoneDocument::one_port(
                                    corrected, comments, doc.options.unit, doc.options.reference)));
  out << "wrote " << corrected.size() << " corrected points to " << a.output << "\n";
  return kOk;
}

struct FitArgs {
  std::string input, sweep, output;
  std::string mode = "reflection";
  std::string correction;
  std::optional<double> power;
  double attenuation = 70, z0 = 50, zr = 50;
  double edge_fraction = 0.2;
};

resfit::FitMode fit_mode(const FitArgs& a) {
  const std::string c = a.correction.empty() ? (a.mode == "hanger" ? "dcm" : "none") : a.correction;
  if (a.mode == "hanger") {
    if (c == "dcm") return resfit::FitMode::HangerDcm;
    if (c == "naive" || c == "none") return resfit::FitMode::HangerNaive;
  } else {
    if (c == "none" || c == "naive") return resfit::FitMode::Reflection;
    if (c == "dcm") return resfit::FitMode::ReflectionDcm;
  }
  throw ParameterError("unknown correction '" + c + "'");
}

const char* kFitHeader =
    "power_dbm,p_app_dbm,photon_number,mode,f0_hz,q_total,q_coupling,q_internal,theta,a,"
    "f0_err,q_total_err,q_coupling_err,q_internal_err,theta_err,rms_residual,pathology\n";

std::string fit_row(const std::optional<double>& power, const FitArgs& a, const resfit::ResonatorFitResult& r) {
  std::string p = "", papp = "", n = "";
  if (power) {
    const double dbm = *power - a.attenuation;
    p = num(*power);
    papp = num(dbm);
    n = num(resfit::photon_number({a.z0, a.zr, r.q_total, r.q_coupling, r.f0, resfit::dbm_to_watts(dbm)}));
  }
  return p + "," + papp + "," + n + "," + resfit::to_string(r.mode) + "," + num(r.f0) + "," + num(r.q_total) + "," +
         num(r.q_coupling) + "," + num(r.q_internal) + "," + num(r.theta) + "," + num(r.baseline_a) + "," +
         num(r.errors.f0) + "," + num(r.errors.q_total) + "," + num(r.errors.q_coupling) + "," +
         num(r.errors.q_internal) + "," + num(r.errors.theta) + "," + num(r.rms_residual) + "," +
         (r.pathology ? "1" : "0") + "\n";
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  if (a.input.empty() == a.sweep.empty()) throw ParameterError("pass exactly one of --in or --sweep");
  const auto mode = fit_mode(a);
  resfit::FitOptions opt;
  opt.preprocess.edge_fraction = a.edge_fraction;
  std::string text = kFitHeader;
  int pathologies = 0;
  if (!a.input.empty()) {
    const auto r = resfit::fit(io::load_trace(a.input), mode, opt);
    pathologies += r.pathology;
    text += fit_row(a.power, a, r);
  } else {
    const auto sweep = io::load_power_sweep(a.sweep);
    std::vector<std::future<resfit::ResonatorFitResult>> jobs;
    jobs.reserve(sweep.size());
    for (const auto& pt : sweep)
      jobs.push_back(std::async(std::launch::async, [&pt, mode, &opt] { return resfit::fit(pt.trace, mode, opt); }));
    std::vector<resfit::ResonatorFitResult> results;
    for (auto& j : jobs) results.push_back(j.get());
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      pathologies += results[i].pathology;
      text += fit_row(sweep[i].power_dbm, a, results[i]);
    }
  }
  io::write_text_file(a.output, text);
  out << "wrote fit results to " << a.output;
  if (pathologies) out << " (" << pathologies << " flagged: negative Qi)";
  out << "\n";
  return kOk;
}

struct TlsArgs {
  std::vector<std::string> inputs;
  std::string output;
  double temperature = tls::kDefaultTemperature;
  double beta = tls::kDefaultBeta;
  bool free_beta = false;
};

int cmd_fit_tls(const TlsArgs& a, std::ostream& out) {
  std::vector<tls::TlsFitResult> fits;
  for (const auto& path : a.inputs) {
    const auto table = io::parse_csv(io::read_text_file(path));
    const auto cn = table.column("photon_number"), cq = table.column("q_internal"), cf = table.column("f0_hz");
    const auto cp = table.column("pathology");
    tls::LossSweep sweep;
    double f0_sum = 0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      if (row[cp] == "1" || row[cn].empty()) continue;
      const double qi = io::parse_number(row[cq], i + 2);
      if (!(qi > 0)) continue;
      sweep.push_back({io::parse_number(row[cn], i + 2), 1.0 / qi, 1.0});
      f0_sum += io::parse_number(row[cf], i + 2);
    }
    if (sweep.empty()) throw ParameterError(path + ": no usable rows (need photon_number and positive q_internal)");
    tls::TlsFitOptions opt;
    if (a.free_beta) opt.fix_beta = std::nullopt;
    else opt.fix_beta = a.beta;
    fits.push_back(tls::fit_tls(sweep, f0_sum / static_cast<double>(sweep.size()), a.temperature, opt));
  }
  io::write_text_file(a.output, tls::format_report(fits));
  out << "wrote TLS report for " << fits.size() << " resonator(s) to " << a.output << "\n";
  return kOk;
}

struct ReportArgs {
  std::string terms, input, output;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (a.terms.empty() == a.input.empty()) throw ParameterError("pass exactly one of --terms or --in");
  std::string text;
  if (!a.terms.empty()) {
    text = error_report_csv(io::load_error_terms(a.terms));
  } else {
    const auto t = io::load_trace(a.input);
    text = "frequency_hz,re,im,mag_db,phase_deg\n";
    for (Eigen::Index i = 0; i < t.size(); ++i)
      text += num(t.frequency(i)) + "," + num(t[i].real()) + "," + num(t[i].imag()) + "," +
              num(onecal::magnitude_db(t[i])) + "," + num(std::arg(t[i]) * 180.0 / kPi) + "\n";
  }
  io::write_text_file(a.output, text);
  out << "wrote report to " << a.output << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"resocal: resonator simulation, one-port calibration and resonance fitting"};
  app.set_config("--config", "", "Key-value configuration file");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a resonator circuit and write S21 as .s1p");
  s->add_option("--preset", sim.preset, "Circuit preset")
      ->check(CLI::IsMember({"table1", "fig2", "fig8b", "fig8d", "custom"}))
      ->capture_default_str();
  s->add_option("--mode", sim.mode, "Circuit mode for the custom preset")
      ->check(CLI::IsMember({"hanger", "reflection"}))
      ->capture_default_str();
  s->add_option("--isolation", sim.isolation, "Circulator isolation [dB]")->check(CLI::NonNegativeNumber);
  s->add_option("--l1", sim.l1, "Line 1 length [deg at 6 GHz]");
  s->add_option("--l2", sim.l2, "Line 2 length [deg at 6 GHz]");
  s->add_option("--l3", sim.l3, "Line 3 length [deg at 6 GHz]");
  s->add_option("--l4", sim.l4, "Line 4 length [deg at 6 GHz]");
  s->add_option("--r", sim.r, "Resonator resistance [Ohm]")->check(CLI::PositiveNumber);
  s->add_option("--z1", sim.z1, "Port 1 impedance [Ohm]")->check(CLI::PositiveNumber);
  s->add_option("--z2", sim.z2, "Port 2 impedance [Ohm]")->check(CLI::PositiveNumber);
  s->add_option("--lb1", sim.lb1, "Input wirebond inductance [nH]")->check(CLI::NonNegativeNumber);
  s->add_option("--lb2", sim.lb2, "Output wirebond inductance [nH]")->check(CLI::NonNegativeNumber);
  s->add_option("--points", sim.points, "Number of frequency points")->check(CLI::Range(16, 1000000))->capture_default_str();
  s->add_option("--linewidths", sim.linewidths, "Half span in linewidths")->check(CLI::Range(1.0, 1e4))->capture_default_str();
  s->add_option("-o,--output", sim.output, "Output .s1p")->required();

  SolveArgs sol;
  auto* sc = app.add_subcommand("solve-cal", "Solve one-port error terms from measured standards");
  sc->add_option("--open", sol.open, "Measured open .s1p")->required()->check(CLI::ExistingFile);
  sc->add_option("--short", sol.short_, "Measured short .s1p")->required()->check(CLI::ExistingFile);
  sc->add_option("--load", sol.load, "Measured load .s1p")->required()->check(CLI::ExistingFile);
  sc->add_option("--kit", sol.kit, "Calibration kit file (default: $RESOCAL_CALKIT)");
  sc->add_option("--def-open", sol.def_open, "Open definition .s1p (loose kit)")->check(CLI::ExistingFile);
  sc->add_option("--def-short", sol.def_short, "Short definition .s1p (loose kit)")->check(CLI::ExistingFile);
  sc->add_option("--def-load", sol.def_load, "Load definition .s1p (loose kit)")->check(CLI::ExistingFile);
  sc->add_option("--conditioning-floor", sol.floor, "Minimum separation of kit standards")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sc->add_option("-o,--output", sol.output, "Error-terms file")->required();
  sc->add_option("--report", sol.report, "Error-term dB report (CSV)");
  sc->add_flag("--reproducible", sol.reproducible, "Omit dates from written metadata");

  ApplyArgs ap;
  auto* ac = app.add_subcommand("apply-cal", "Remove the error adapter from a measured trace");
  ac->add_option("--terms", ap.terms, "Error-terms file")->required()->check(CLI::ExistingFile);
  ac->add_option("--in", ap.input, "Measured .s1p/.s2p")->required()->check(CLI::ExistingFile);
  ac->add_option("-o,--output", ap.output, "Corrected .s1p")->required();

  FitArgs fa;
  auto* fc = app.add_subcommand("fit", "Fit resonances; one CSV row per trace");
  fc->add_option("--in", fa.input, "Trace .s1p/.s2p")->check(CLI::ExistingFile);
  fc->add_option("--sweep", fa.sweep, "Power-sweep manifest (CSV)")->check(CLI::ExistingFile);
  fc->add_option("--mode", fa.mode, "Measurement geometry")
      ->check(CLI::IsMember({"hanger", "reflection"}))
      ->capture_default_str();
  fc->add_option("--correction", fa.correction, "dcm, naive or none (default: dcm for hanger, none for reflection)")
      ->check(CLI::IsMember({"dcm", "naive", "none"}));
  fc->add_option("--power", fa.power, "Source power for a single trace [dBm]");
  fc->add_option("--attenuation", fa.attenuation, "Line attenuation to the device [dB]")->capture_default_str();
  fc->add_option("--z0", fa.z0, "Environment impedance [Ohm]")->check(CLI::PositiveNumber)->capture_default_str();
  fc->add_option("--zr", fa.zr, "Resonator impedance [Ohm]")->check(CLI::PositiveNumber)->capture_default_str();
  fc->add_option("--edge-fraction", fa.edge_fraction, "Fraction of points per side used for the baseline")
      ->check(CLI::Range(0.02, 0.45))
      ->capture_default_str();
  fc->add_option("-o,--output", fa.output, "Result CSV")->required();

  TlsArgs ta;
  auto* tc = app.add_subcommand("fit-tls", "Fit the TLS loss model to fit results");
  tc->add_option("--in", ta.inputs, "Fit-result CSV, one per resonator")->required()->check(CLI::ExistingFile);
  tc->add_option("--temperature", ta.temperature, "Sample temperature [K]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* beta = tc->add_option("--beta", ta.beta, "Fixed saturation exponent")->check(CLI::PositiveNumber)->capture_default_str();
  tc->add_flag("--free-beta", ta.free_beta, "Fit the saturation exponent")->excludes(beta);
  tc->add_option("-o,--output", ta.output, "Report CSV")->required();

  ReportArgs ra;
  auto* rc = app.add_subcommand("report", "Write plot data: error terms in dB or a trace");
  rc->add_option("--terms", ra.terms, "Error-terms file")->check(CLI::ExistingFile);
  rc->add_option("--in", ra.input, "Trace .s1p/.s2p")->check(CLI::ExistingFile);
  rc->add_option("-o,--output", ra.output, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, out);
    if (sc->parsed()) return cmd_solve_cal(sol, out);
    if (ac->parsed()) return cmd_apply_cal(ap, out);
    if (fc->parsed()) return cmd_fit(fa, out);
    if (tc->parsed()) return cmd_fit_tls(ta, out);
    if (rc->parsed()) return cmd_report(ra, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << "\n";
    return kFit;
  } catch (const ConditioningError& e) {
    err << "conditioning error: " << e.what() << "\n";
    return kFit;
  } catch (const RangeError& e) {
    err << "range error: " << e.what() << "\n";
    return kFit;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kFit;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace resocal::cli

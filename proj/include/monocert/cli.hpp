#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "monocert/certify.hpp"
#include "monocert/lyap.hpp"
#include "monocert/parser.hpp"
#include "monocert/sim.hpp"
#include "monocert/sos.hpp"
#include "monocert/synth.hpp"

namespace monocert::cli {

enum ExitCode { kExitPass = 0, kExitFail = 1, kExitUsage = 2 };

/// Options shared by every command.
struct RunConfig {
  std::string system;
  std::string box;
  int resolution = kDefaultResolution;
  double eps = kDefaultEps;
  std::vector<std::string> weight_files;
  std::string report;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InvalidArgument("'" + text + "' is not a comma-separated list of numbers");
    }
  }
  if (out.empty()) throw InvalidArgument("empty vector");
  return out;
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), 1, static_cast<int>(e.byte), path);
  }
}

inline WeightFamily read_weights(const std::string& path) {
  try {
    return weights_from_json(read_json(path));
  } catch (const WeightError& e) {
    throw WeightError(path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

inline WorkingBox box_for(const SystemDef& sys, const RunConfig& c) {
  if (c.resolution < 2) throw InvalidArgument("resolution must be at least 2");
  return c.box.empty() ? make_box(sys, c.resolution) : make_box(sys, parse_box(c.box), c.resolution);
}

/// Prints the report and writes it to --report when given.
inline void emit(const nlohmann::ordered_json& j, const RunConfig& c, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!c.report.empty()) write_text(c.report, text);
}

inline const char* verdict(bool ok) { return ok ? "pass" : "fail"; }

struct Commands {
  RunConfig cfg;
  // certify
  std::vector<std::string> theta, omega;
  std::string v, w;
  bool global = false;
  // synth
  std::string mode = "const-sum";
  int degree = 2;
  std::string weights_out;
  // lyap
  std::string variant = "state-sum";
  bool flow_global = false;
  std::string at;
  // simulate, contract, entrain
  std::vector<std::string> x0;
  int samples = 0;
  double t_end = 10.0;
  double dt = kDefaultDt;
  std::string csv_dir;
  std::string norm;
  int pairs = 10;
  int periods = 40;
  // export-sos, import-sos
  int multiplier_degree = 0;
  std::string out_path;
  std::string sidecar, solution;
};

inline int do_certify(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  const WorkingBox box = box_for(sys, a.cfg);
  CertifyInputs in;
  in.eps = a.cfg.eps;
  in.global = a.global;
  auto add = [&](const std::string& path, std::optional<WeightKind> want) {
    WeightFamily f = read_weights(path);
    if (want && f.kind() != *want) {
      throw InvalidArgument(path + " holds " + to_string(f.kind()) + " weights, expected " + to_string(*want));
    }
    try {
      f.check_on_box(box.axes);
    } catch (const WeightError& e) {
      throw WeightError(path + ": " + e.what());
    }
    in.families.push_back(std::move(f));
  };
  for (const auto& p : a.cfg.weight_files) add(p, std::nullopt);
  for (const auto& p : a.theta) add(p, WeightKind::kTheta);
  for (const auto& p : a.omega) add(p, WeightKind::kOmega);
  if (!a.v.empty()) in.v = parse_numbers(a.v);
  if (!a.w.empty()) in.w = parse_numbers(a.w);
  const auto reports = certify_all(sys, box, in);
  bool ok = true;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    ok = ok && r.passed();
    list.push_back(to_json(r));
  }
  nlohmann::ordered_json j;
  j["command"] = "certify";
  j["system"] = sys.name;
  j["verdict"] = verdict(ok);
  j["reports"] = list;
  emit(j, a.cfg, out);
  return ok ? kExitPass : kExitFail;
}

inline int do_synth(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  const WorkingBox box = box_for(sys, a.cfg);
  const auto dash = a.mode.find('-');
  const std::string kind = a.mode.substr(0, dash);
  const std::string side = dash == std::string::npos ? "" : a.mode.substr(dash + 1);
  if ((kind != "const" && kind != "poly") || (side != "sum" && side != "max")) {
    throw InvalidArgument("unknown mode '" + a.mode + "' (const-sum, const-max, poly-sum, poly-max)");
  }
  const SynthMode mode = side == "sum" ? SynthMode::kSum : SynthMode::kMax;
  const SynthResult r = kind == "const" ? synth_const(sys, box, mode, a.cfg.eps)
                                        : synth_poly(sys, box, a.degree, mode, a.cfg.eps);
  nlohmann::ordered_json j;
  j["command"] = "synth";
  j["system"] = sys.name;
  j["mode"] = a.mode;
  if (kind == "poly") j["degree"] = a.degree;
  j["verdict"] = verdict(r.ok);
  j["result"] = to_json(r);
  if (r.ok && !a.weights_out.empty()) {
    write_text(a.weights_out, to_json(r.weights).dump() + "\n");
    j["weights_file"] = a.weights_out;
  }
  emit(j, a.cfg, out);
  return r.ok ? kExitPass : kExitFail;
}

inline WeightFamily single_weights(const Commands& a) {
  if (a.cfg.weight_files.size() != 1) throw InvalidArgument("exactly one --weights file is required");
  return read_weights(a.cfg.weight_files[0]);
}

inline int do_lyap(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  const LyapFn v = build_lyapunov(sys, single_weights(a), parse_lyap_variant(a.variant), a.flow_global);
  nlohmann::ordered_json j;
  j["command"] = "lyap";
  j["system"] = sys.name;
  j["lyapunov"] = to_json(v);
  if (!a.at.empty()) {
    const auto x = parse_numbers(a.at);
    j["at"] = x;
    j["value"] = v(x);
  }
  emit(j, a.cfg, out);
  return kExitPass;
}

/// Explicit --x0 points, else --samples points drawn uniformly in the box.
inline std::vector<std::vector<double>> initial_states(const SystemDef& sys, const Commands& a) {
  std::vector<std::vector<double>> xs;
  for (const auto& s : a.x0) xs.push_back(parse_numbers(s));
  if (a.samples > 0) {
    const WorkingBox box = box_for(sys, a.cfg);
    std::mt19937_64 rng(a.cfg.seed);
    for (int k = 0; k < a.samples; ++k) {
      std::vector<double> x;
      for (const auto& ax : box.axes) x.push_back(std::uniform_real_distribution<double>(ax.lo, ax.hi)(rng));
      xs.push_back(std::move(x));
    }
  }
  if (xs.empty()) throw InvalidArgument("give --x0 or --samples");
  return xs;
}

inline int do_simulate(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  const auto xs = initial_states(sys, a);
  std::optional<LyapFn> v;
  if (!a.cfg.weight_files.empty()) v.emplace(build_lyapunov(sys, single_weights(a), parse_lyap_variant(a.variant)));
  std::vector<Trajectory> runs(xs.size());
  parallel_for(xs.size(), [&](std::size_t k) { runs[k] = integrate(sys, xs[k], a.t_end, a.dt); });
  if (!a.csv_dir.empty()) std::filesystem::create_directories(a.csv_dir);
  bool ok = true;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const Trajectory& tr = runs[k];
    nlohmann::ordered_json t;
    t["x0"] = xs[k];
    t["t_end"] = tr.t.back();
    t["terminal"] = tr.back();
    t["steps"] = tr.size() - 1;
    t["dt"] = tr.dt;
    t["max_step_error"] = tr.max_step_error;
    if (tr.aborted) {
      t["aborted"] = *tr.aborted;
      ok = false;
    }
    if (v) {
      const DecreaseReport d = verify_decrease(*v, tr);
      t["decrease"] = to_json(d);
      ok = ok && d.passed;
    }
    if (!a.csv_dir.empty()) {
      const std::string path = (std::filesystem::path(a.csv_dir) / (sys.name + "_" + std::to_string(k) + ".csv")).string();
      std::ostringstream csv;
      write_csv(csv, tr, sys.states, v ? &*v : nullptr);
      write_text(path, csv.str());
      t["csv"] = path;
    }
    list.push_back(t);
  }
  nlohmann::ordered_json j;
  j["command"] = "simulate";
  j["system"] = sys.name;
  j["method"] = "rk4";
  if (v) j["lyapunov"] = v->to_string();
  j["verdict"] = verdict(ok);
  j["trajectories"] = list;
  emit(j, a.cfg, out);
  return ok ? kExitPass : kExitFail;
}

inline int do_contract(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  const WeightFamily w = single_weights(a);
  Norm norm = w.kind() == WeightKind::kTheta ? Norm::kL1 : Norm::kLinf;
  if (a.norm == "l1") {
    norm = Norm::kL1;
  } else if (a.norm == "linf") {
    norm = Norm::kLinf;
  } else if (!a.norm.empty()) {
    throw InvalidArgument("unknown norm '" + a.norm + "' (l1, linf)");
  }
  if (a.pairs < 1) throw InvalidArgument("--pairs must be at least 1");
  ContractionOptions opt;
  opt.pairs = static_cast<std::size_t>(a.pairs);
  opt.t_end = a.t_end;
  opt.dt = a.dt;
  opt.seed = a.cfg.seed;
  const ContractionReport r = estimate_contraction_rate(sys, w, norm, box_for(sys, a.cfg), opt);
  nlohmann::ordered_json j;
  j["command"] = "contract";
  j["system"] = sys.name;
  j["norm"] = to_string(norm);
  j["report"] = to_json(r);
  j["verdict"] = verdict(r.passed);
  emit(j, a.cfg, out);
  return r.passed ? kExitPass : kExitFail;
}

inline int do_entrain(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  EntrainmentOptions opt;
  opt.periods = a.periods;
  opt.dt = a.dt;
  const EntrainmentReport r = entrainment_test(sys, initial_states(sys, a), opt);
  nlohmann::ordered_json j;
  j["command"] = "entrain";
  j["system"] = sys.name;
  j["periods"] = a.periods;
  j["report"] = to_json(r);
  j["verdict"] = verdict(r.passed());
  emit(j, a.cfg, out);
  return r.passed() ? kExitPass : kExitFail;
}

inline int do_export_sos(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  if (a.out_path.empty()) throw InvalidArgument("--out is required");
  const SosProgram p = export_sos_sdpa(sys, a.degree, a.cfg.eps, a.out_path, a.multiplier_degree);
  nlohmann::ordered_json j;
  j["command"] = "export-sos";
  j["system"] = sys.name;
  j["degree"] = a.degree;
  j["sdpa"] = a.out_path;
  j["sidecar"] = a.out_path + ".json";
  j["blocks"] = p.blocks.size();
  j["equations"] = p.equations.size();
  j["warnings"] = p.warnings;
  emit(j, a.cfg, out);
  return kExitPass;
}

inline int do_import_sos(const Commands& a, std::ostream& out) {
  const SystemDef sys = load_system(a.cfg.system);
  if (a.sidecar.empty() || a.solution.empty()) throw InvalidArgument("--sidecar and --solution are required");
  std::ifstream in(a.solution);
  if (!in) throw Error("cannot open " + a.solution);
  std::stringstream ss;
  ss << in.rdbuf();
  const WorkingBox box = box_for(sys, a.cfg);
  const WeightFamily theta = parse_sos_solution(read_json(a.sidecar), ss.str(), box.axes);
  const CertReport r = check_sum_weights(sys, theta, box, a.cfg.eps);
  if (!a.weights_out.empty()) write_text(a.weights_out, to_json(theta).dump() + "\n");
  nlohmann::ordered_json j;
  j["command"] = "import-sos";
  j["system"] = sys.name;
  j["weights"] = to_json(theta);
  j["report"] = to_json(r);
  j["verdict"] = verdict(r.passed());
  emit(j, a.cfg, out);
  return r.passed() ? kExitPass : kExitFail;
}

}  // namespace detail

/// Parses argv and runs one command.  Reports go to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Commands a;
  CLI::App app{"Contraction and Lyapunov certificates for monotone systems"};
  app.require_subcommand(1);
  auto common = [&](CLI::App* s, bool weights) {
    s->add_option("system", a.cfg.system, "system file")->required();
    s->add_option("--box", a.cfg.box, "working box lo:hi,lo:hi,...");
    s->add_option("--resolution", a.cfg.resolution, "grid points per axis");
    s->add_option("--eps", a.cfg.eps, "strictness margin");
    s->add_option("--report", a.cfg.report, "also write the JSON report here");
    s->add_option("--seed", a.cfg.seed, "seed for random initial conditions");
    if (weights) s->add_option("--weights", a.cfg.weight_files, "weights JSON file");
  };
  auto* certify = app.add_subcommand("certify", "run the sampled checks");
  common(certify, true);
  certify->add_option("--theta", a.theta, "theta weights file");
  certify->add_option("--omega", a.omega, "omega weights file");
  certify->add_option("--v", a.v, "constant vector for the sum condition");
  certify->add_option("--w", a.w, "constant vector for the max condition");
  certify->add_flag("--global", a.global, "claim global stability from the constant vectors");

  auto* synth = app.add_subcommand("synth", "synthesize weights by linear programming");
  common(synth, false);
  synth->add_option("--mode", a.mode, "const-sum, const-max, poly-sum or poly-max");
  synth->add_option("--degree", a.degree, "polynomial degree");
  synth->add_option("--weights-out", a.weights_out, "write the weights JSON here");

  auto* lyap = app.add_subcommand("lyap", "build a separable Lyapunov function");
  common(lyap, true);
  lyap->add_option("--variant", a.variant, "state-sum, flow-sum, state-max or flow-max");
  lyap->add_flag("--flow-global", a.flow_global, "flow variant is global");
  lyap->add_option("--at", a.at, "evaluate at x1,x2,...");

  auto* simulate = app.add_subcommand("simulate", "integrate trajectories");
  common(simulate, true);
  simulate->add_option("--x0", a.x0, "initial state x1,x2,... (repeatable)");
  simulate->add_option("--samples", a.samples, "random initial states in the box");
  simulate->add_option("--t-end", a.t_end, "horizon");
  simulate->add_option("--dt", a.dt, "step");
  simulate->add_option("--variant", a.variant, "Lyapunov variant for the V column");
  simulate->add_option("--csv", a.csv_dir, "directory for trajectory CSV files");

  auto* contract = app.add_subcommand("contract", "compare pairwise distances with the certified rate");
  common(contract, true);
  contract->add_option("--norm", a.norm, "l1 or linf");
  contract->add_option("--pairs", a.pairs, "random pairs");
  contract->add_option("--t-end", a.t_end, "horizon");
  contract->add_option("--dt", a.dt, "step");

  auto* entrain = app.add_subcommand("entrain", "test entrainment of a periodic system");
  common(entrain, false);
  entrain->add_option("--x0", a.x0, "initial state (repeatable)");
  entrain->add_option("--samples", a.samples, "random initial states in the box");
  entrain->add_option("--periods", a.periods, "horizon in periods");
  entrain->add_option("--dt", a.dt, "step");

  auto* export_sos = app.add_subcommand("export-sos", "write the SOS program in SDPA format");
  common(export_sos, false);
  export_sos->add_option("--degree", a.degree, "weight degree");
  export_sos->add_option("--multiplier-degree", a.multiplier_degree, "domain multiplier degree");
  export_sos->add_option("--out", a.out_path, "SDPA output path")->required();

  auto* import_sos = app.add_subcommand("import-sos", "read an SDPA solution and certify it");
  common(import_sos, false);
  import_sos->add_option("--sidecar", a.sidecar, "sidecar JSON written by export-sos")->required();
  import_sos->add_option("--solution", a.solution, "solver output")->required();
  import_sos->add_option("--weights-out", a.weights_out, "write the weights JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitPass : kExitUsage;
  }
  try {
    if (*certify) return detail::do_certify(a, out);
    if (*synth) return detail::do_synth(a, out);
    if (*lyap) return detail::do_lyap(a, out);
    if (*simulate) return detail::do_simulate(a, out);
    if (*contract) return detail::do_contract(a, out);
    if (*entrain) return detail::do_entrain(a, out);
    if (*export_sos) return detail::do_export_sos(a, out);
    if (*import_sos) return detail::do_import_sos(a, out);
  } catch (const WeightError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFail;
  } catch (const EvalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFail;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace monocert::cli

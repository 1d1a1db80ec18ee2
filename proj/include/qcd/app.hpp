#pragma once

// Command implementations behind the `qcd` executable. run_app() is the whole
// program minus process setup, so tests can drive it in-process.

#include <qcd/boundedness.hpp>
#include <qcd/config.hpp>
#include <qcd/glr.hpp>
#include <qcd/mcusum.hpp>
#include <qcd/montecarlo.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace qcd {

enum ExitCode : int { kExitPass = 0, kExitVerifyFail = 1, kExitUsage = 2 };

/// Either procedure behind one interface, so factories can be chosen at run time.
class AnyProcedure {
 public:
  explicit AnyProcedure(Mcusum m) : p_(std::move(m)) {}
  explicit AnyProcedure(Glr g) : p_(std::move(g)) {}
  std::optional<Diagnosis> step(const Observation& y) {
    return std::visit([&](auto& p) { return p.step(y); }, p_);
  }

 private:
  std::variant<Mcusum, Glr> p_;
};

namespace app {

using nlohmann::json;

/// "%.6g", the fixed report precision.
inline std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Finite numbers as numbers; infinities and NaN as strings.
inline json number_json(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (double x : v) out.push_back(number_json(x));
  return out;
}

inline json certificate_json(const Certificate& c) {
  json w = json::array();
  for (const auto& x : c.witnesses)
    w.push_back({{"condition", x.condition},
                 {"detail", x.detail},
                 {"point", vector_json(x.point)},
                 {"achieved", number_json(x.achieved)},
                 {"relation", x.relation},
                 {"bound", number_json(x.bound)},
                 {"satisfied", x.satisfied}});
  return {{"passed", c.passed}, {"delta_star", number_json(c.delta_star)}, {"witnesses", w},
          {"warnings", c.warnings}};
}

/// Builds procedures for one algorithm. `truth` is the distribution vector
/// the oracle pairs are matched to.
inline std::function<AnyProcedure()> factory(const ExperimentConfig& cfg, const AlgorithmSpec& a,
                                             const std::vector<Distribution>& truth, double h) {
  if (a.kind == AlgorithmKind::glr) {
    auto sets = std::make_shared<const std::vector<BoxSet>>(cfg.sets);
    const std::size_t w = a.window;
    return [sets, w, h] { return AnyProcedure(Glr(*sets, w, h)); };
  }
  std::shared_ptr<const UpsilonSet> pairs;
  switch (a.pairs) {
    case PairSource::robust:
      pairs = std::make_shared<const UpsilonSet>(*cfg.robust_pairs);
      break;
    case PairSource::explicit_pairs:
      pairs = std::make_shared<const UpsilonSet>(*cfg.explicit_pairs);
      break;
    case PairSource::oracle:
      pairs = std::make_shared<const UpsilonSet>(UpsilonSet::matched(truth));
      break;
  }
  return [pairs, h] { return AnyProcedure(Mcusum(*pairs, h)); };
}

struct Context {
  ExperimentConfig cfg;
  McOptions mc;
  std::optional<std::string> out;
  std::map<std::string, double> calibrated;  // id -> h from a calibration file
  std::ostream* stdout_ = nullptr;
  std::ostream* stderr_ = nullptr;
};

/// Threshold used for simulation: explicit h, else a calibrated h, else log(gamma).
inline double threshold(const Context& ctx, const AlgorithmSpec& a) {
  if (a.h) return *a.h;
  if (auto it = ctx.calibrated.find(a.id); it != ctx.calibrated.end()) return it->second;
  return std::log(*a.gamma);
}

inline std::uint64_t false_metric_cap(const ExperimentConfig& cfg, const AlgorithmSpec& a, double h) {
  if (cfg.cap) return *cfg.cap;
  const double target = a.gamma ? *a.gamma : std::exp(h);
  return static_cast<std::uint64_t>(std::ceil(20.0 * target));
}

inline void write_text(const Context& ctx, const std::string& text) {
  if (!ctx.out) {
    *ctx.stdout_ << text;
    return;
  }
  const std::filesystem::path p(*ctx.out);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InputError("cannot write '" + *ctx.out + "'");
  f << text;
}

inline std::map<std::string, double> read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--calibration", "cannot read '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--calibration", std::string("malformed JSON: ") + e.what());
  }
  std::map<std::string, double> out;
  if (!root.contains("algorithms") || !root["algorithms"].is_array())
    throw ConfigError("--calibration", "expected an \"algorithms\" array");
  for (const auto& a : root["algorithms"]) {
    if (!a.contains("id") || !a["id"].is_string() || !a.contains("h") || !a["h"].is_number())
      throw ConfigError("--calibration", "each entry needs string \"id\" and numeric \"h\"");
    out[a["id"].get<std::string>()] = a["h"].get<double>();
  }
  return out;
}

struct VerifyOutcome {
  json certificate;
  bool passed = false;
};

inline VerifyOutcome verify(const ExperimentConfig& cfg) {
  if (cfg.family != Family::gaussian)
    throw ConfigError("family", "verification needs the gaussian family");
  json candidates = json::array();
  bool passed = false;
  auto add = [&](const char* source, const UpsilonSet& pairs) {
    const UncertaintyModel m{cfg.sets, pairs, cfg.model().lfds};
    const auto direct = check_dsb_direct(m);
    const auto via = check_dsb_via_wsb(m);
    passed = passed || direct.passed;
    candidates.push_back({{"pair_source", source},
                          {"dsb", direct.passed},
                          {"delta_star", number_json(direct.delta_star)},
                          {"dsb_direct", certificate_json(direct)},
                          {"dsb_via_wsb", certificate_json(via)}});
  };
  if (!cfg.robust_pairs && !cfg.explicit_pairs)
    throw ConfigError("pairs", "verification needs pairs.robust or pairs.explicit");
  if (cfg.robust_pairs) add("robust", *cfg.robust_pairs);
  if (cfg.explicit_pairs) add("explicit", *cfg.explicit_pairs);
  return {{{"passed", passed}, {"delta_star", candidates[0]["delta_star"]}, {"candidates", candidates}},
          passed};
}

inline int cmd_verify(Context& ctx) {
  const auto v = verify(ctx.cfg);
  write_text(ctx, v.certificate.dump(2) + "\n");
  *ctx.stderr_ << (v.passed ? "DSB verified" : "DSB verification failed") << "; Delta_* = "
               << v.certificate["delta_star"].dump() << "\n";
  return v.passed ? kExitPass : kExitVerifyFail;
}

inline int cmd_calibrate(Context& ctx, bool theoretical) {
  const auto& cfg = ctx.cfg;
  json algs = json::array();
  const auto components = false_components(cfg.lfds);
  for (const auto& a : cfg.algorithms) {
    json entry{{"id", a.id}};
    if (a.h) {
      entry["mode"] = "fixed";
      entry["h"] = *a.h;
    } else if (theoretical) {
      entry["mode"] = "theoretical";
      entry["gamma"] = *a.gamma;
      entry["h"] = std::log(*a.gamma);
    } else {
      CalibrationOptions opt;
      opt.gamma = *a.gamma;
      opt.tolerance = cfg.tolerance;
      opt.mc = ctx.mc;
      opt.mc.cap = cfg.cap.value_or(0);
      const auto cal = calibrate_threshold(
          [&](double h) { return factory(cfg, a, cfg.lfds, h); }, components, opt);
      entry["mode"] = "monte_carlo";
      entry["gamma"] = *a.gamma;
      entry["h"] = cal.h;
      entry["converged"] = cal.converged;
      entry["evaluations"] = cal.evaluations;
      if (cal.min_component >= 0) {
        const auto& c = components[static_cast<std::size_t>(cal.min_component)];
        entry["F_hat"] = cal.estimate.mean;
        entry["se"] = cal.estimate.se;
        entry["censored"] = cal.estimate.censored;
        entry["runs"] = cal.estimate.runs;
        entry["cap"] = cal.estimate.cap;
        entry["min_component"] = {{"from", c.from}, {"target", c.target}};
      }
      entry["warnings"] = cal.warnings;
      for (const auto& w : cal.warnings) *ctx.stderr_ << a.id << ": warning: " << w << "\n";
    }
    algs.push_back(entry);
  }
  write_text(ctx, json{{"algorithms", algs}}.dump(2) + "\n");
  return kExitPass;
}

inline int cmd_false(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::ostringstream csv;
  csv << "algorithm,from,target,h,F_mean,F_se,censored,runs,cap\n";
  const auto components = false_components(cfg.lfds);
  for (const auto& a : cfg.algorithms) {
    const double h = threshold(ctx, a);
    McOptions mc = ctx.mc;
    mc.cap = false_metric_cap(cfg, a, h);
    const auto make = factory(cfg, a, cfg.lfds, h);
    for (const auto& c : components) {
      const auto e = estimate_false_metric(make, c.data, c.target, mc);
      csv << a.id << ',' << c.from << ',' << c.target << ',' << fmt6(h) << ',' << fmt6(e.mean) << ','
          << fmt6(e.se) << ',' << e.censored << ',' << e.runs << ',' << e.cap << '\n';
    }
  }
  write_text(ctx, csv.str());
  return kExitPass;
}

/// Points to evaluate delays at: the sweep grid, or each change type at its LFD.
inline std::vector<std::pair<int, std::vector<Distribution>>> delay_points(const ExperimentConfig& cfg) {
  std::vector<std::pair<int, std::vector<Distribution>>> out;
  if (!cfg.sweep.empty()) {
    const auto model = cfg.model();
    for (const auto& g : cfg.sweep) out.emplace_back(g.type, distributions_at(model, g));
  } else {
    for (int j = 1; j <= cfg.num_types(); ++j) out.emplace_back(j, cfg.lfds);
  }
  return out;
}

inline json parameter_of(const Distribution& d) {
  if (const auto* g = std::get_if<GaussianId>(&d)) return g->mean();
  return std::get<Categorical>(d).probs();
}

inline int cmd_delay(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::ostringstream csv;
  csv << "algorithm,type,h";
  for (std::size_t n = 1; n <= cfg.dimension; ++n) csv << ",nu_" << n;
  csv << ",delay_mean,delay_se,misisolation_frac,censored,runs\n";
  for (const auto& [type, nu] : delay_points(cfg)) {
    const auto& post = nu[static_cast<std::size_t>(type)];
    const Scenario sc{nu[0], post, 1, type};
    for (const auto& a : cfg.algorithms) {
      const double h = threshold(ctx, a);
      const auto e = estimate_delay(factory(cfg, a, nu, h), sc, ctx.mc);
      csv << a.id << ',' << type << ',' << fmt6(h);
      for (double x : parameter_of(post)) csv << ',' << fmt6(x);
      csv << ',' << fmt6(e.delay.mean) << ',' << fmt6(e.delay.se) << ',' << fmt6(e.misisolation) << ','
          << e.delay.censored << ',' << e.delay.runs << '\n';
    }
  }
  write_text(ctx, csv.str());
  return kExitPass;
}

/// One CSV per change type present in the sweep: figure_type<j>.csv.
inline std::map<int, std::string> figure_tables(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.family != Family::gaussian) throw ConfigError("family", "figure needs the gaussian family");
  if (cfg.sweep.empty()) throw ConfigError("sweep", "figure needs a sweep grid");
  const auto model = cfg.model();
  std::map<int, std::ostringstream> tables;
  for (const auto& g : cfg.sweep) {
    auto& csv = tables[g.type];
    if (csv.tellp() == 0) csv << "phi,algorithm,delay_mean,delay_se,misisolation_frac\n";
    const auto nu = distributions_at(model, g);
    const Scenario sc{nu[0], nu[static_cast<std::size_t>(g.type)], 1, g.type};
    for (const auto& a : cfg.algorithms) {
      const auto e = estimate_delay(factory(cfg, a, nu, threshold(ctx, a)), sc, ctx.mc);
      csv << fmt6(g.mean[0]) << ',' << a.id << ',' << fmt6(e.delay.mean) << ',' << fmt6(e.delay.se) << ','
          << fmt6(e.misisolation) << '\n';
    }
  }
  std::map<int, std::string> out;
  for (auto& [type, csv] : tables) out[type] = csv.str();
  return out;
}

inline int cmd_figure(Context& ctx) {
  if (!verify(ctx.cfg).passed) {
    *ctx.stderr_ << "error: model is not dually stochastically bounded; run `verify` for witnesses\n";
    return kExitVerifyFail;
  }
  const std::filesystem::path dir(ctx.out.value_or(ctx.cfg.output));
  std::filesystem::create_directories(dir);
  for (const auto& [type, text] : figure_tables(ctx)) {
    const auto path = dir / ("figure_type" + std::to_string(type) + ".csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << text;
    *ctx.stderr_ << "wrote " << path.string() << "\n";
  }
  return kExitPass;
}

}  // namespace app

/// Runs the CLI on `args` (without the program name). Returns the exit code.
inline int run_app(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App cli{"Quickest change diagnosis: boundedness verification, calibration and simulation", "qcd"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed, runs;
  std::optional<std::string> out_path;
  unsigned threads = 1;
  cli.add_option("--config", config_path, "experiment config (JSON)")->required();
  cli.add_option("--seed", seed, "master seed (overrides config)");
  cli.add_option("--runs", runs, "Monte Carlo runs (overrides config)");
  cli.add_option("--out", out_path, "output file, or directory for figure");
  cli.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* verify = cli.add_subcommand("verify", "check WSB/DSB conditions and write a JSON certificate");
  auto* calibrate = cli.add_subcommand("calibrate", "choose thresholds h for each algorithm's gamma");
  bool theoretical = false;
  calibrate->add_flag("--theoretical", theoretical, "use h = log(gamma) without simulation");
  auto* delay = cli.add_subcommand("delay", "estimate detection/isolation delays (CSV)");
  auto* false_cmd = cli.add_subcommand("false", "estimate false alarm/isolation times (CSV)");
  auto* figure = cli.add_subcommand("figure", "delay sweep, one CSV per change type");
  std::string calibration_path;
  for (auto* sub : {delay, false_cmd, figure})
    sub->add_option("--calibration", calibration_path, "thresholds from `calibrate`");

  std::reverse(args.begin(), args.end());
  try {
    cli.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    app::Context ctx;
    ctx.cfg = load_config(config_path);
    if (runs) {
      if (*runs < 2) throw ConfigError("--runs", "must be >= 2");
      ctx.cfg.runs = *runs;
    }
    if (seed) ctx.cfg.master_seed = *seed;
    ctx.mc.runs = ctx.cfg.runs;
    ctx.mc.master_seed = ctx.cfg.master_seed;
    ctx.mc.threads = threads;
    ctx.out = out_path;
    ctx.stdout_ = &out;
    ctx.stderr_ = &err;
    if (!calibration_path.empty()) ctx.calibrated = app::read_calibration(calibration_path);

    if (verify->parsed()) return app::cmd_verify(ctx);
    if (calibrate->parsed()) return app::cmd_calibrate(ctx, theoretical);
    if (delay->parsed()) return app::cmd_delay(ctx);
    if (false_cmd->parsed()) return app::cmd_false(ctx);
    return app::cmd_figure(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace qcd

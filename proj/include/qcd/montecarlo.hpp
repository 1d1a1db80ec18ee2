#pragma once

#include <qcd/boundedness.hpp>
#include <qcd/distributions.hpp>
#include <qcd/error.hpp>
#include <qcd/mcusum.hpp>
#include <qcd/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace qcd {

/// Monte Carlo mean with its standard error. When any run hit the cap the
/// mean is a lower bound on the true expectation.
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::uint64_t runs = 0;
  std::uint64_t censored = 0;
  std::uint64_t cap = 0;

  bool lower_bound() const { return censored > 0; }
};

struct DelayEstimate {
  McEstimate delay;
  /// Fraction of stopped runs whose decision differs from the true type.
  double misisolation = 0.0;
};

/// Data model: i.i.d. `pre` before the change time, i.i.d. `post` from it on.
struct Scenario {
  Distribution pre;
  std::optional<Distribution> post;
  std::uint64_t change_time = 1;
  std::optional<int> true_type;

  void validate() const {
    if (change_time < 1) throw InputError("Scenario: change time must be >= 1");
    if (post.has_value() != true_type.has_value())
      throw InputError("Scenario: post-change distribution and true type go together");
    if (post) detail::require_compatible(pre, *post, "Scenario");
  }
};

struct McOptions {
  std::uint64_t runs = 500;
  std::uint64_t master_seed = 1;
  std::uint64_t cap = 100000;
  unsigned threads = 1;
};

/// Sum in a fixed binary-tree order; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

/// Mean and SE (sample standard deviation / sqrt(runs)) of per-run values.
inline McEstimate summarize(std::span<const double> values, std::uint64_t censored,
                            std::uint64_t cap) {
  McEstimate e;
  e.runs = values.size();
  e.censored = censored;
  e.cap = cap;
  if (values.empty()) return e;
  const double n = static_cast<double>(values.size());
  e.mean = pairwise_sum(values) / n;
  if (values.size() > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t r = 0; r < values.size(); ++r) sq[r] = (values[r] - e.mean) * (values[r] - e.mean);
    e.se = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  }
  return e;
}

/// Calls fn(index) for index in [0, count) on up to `threads` workers. Work is
/// split by index, so results written per index are independent of `threads`.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
  if (workers == 1) {
    for (std::size_t r = 0; r < count; ++r) fn(r);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t r = t; r < count; r += workers) fn(r);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Observation source for one run of a scenario.
class ScenarioSource {
 public:
  ScenarioSource(const Scenario& scenario, RngStream stream)
      : scenario_(&scenario), stream_(std::move(stream)) {}

  void operator()(Observation& y) {
    ++k_;
    const bool changed = scenario_->post && k_ >= scenario_->change_time;
    sample_into(changed ? *scenario_->post : scenario_->pre, stream_, y);
  }

 private:
  const Scenario* scenario_;
  RngStream stream_;
  std::uint64_t k_ = 0;
};

/// Mean detection/isolation delay E[(T - lambda + 1)^+] over independent runs.
/// Each run uses a fresh procedure from `make_procedure()` and the stream
/// (master_seed, run index). Censored runs contribute cap - lambda + 1.
template <class Factory>
  requires DiagnosisProcedure<std::invoke_result_t<Factory&>>
DelayEstimate estimate_delay(Factory&& make_procedure, const Scenario& scenario,
                             const McOptions& options) {
  scenario.validate();
  if (!scenario.post) throw InputError("estimate_delay: scenario needs a post-change distribution");
  if (options.runs < 2) throw InputError("estimate_delay: need at least 2 runs");
  if (options.cap < scenario.change_time) throw InputError("estimate_delay: cap before change time");

  std::vector<double> delays(options.runs);
  std::vector<RunResult> results(options.runs);
  parallel_for(options.runs, options.threads, [&](std::size_t r) {
    auto procedure = make_procedure();
    ScenarioSource source(scenario, RngStream(options.master_seed, r));
    results[r] = run_procedure(procedure, source, options.cap);
    const auto lambda = static_cast<double>(scenario.change_time);
    delays[r] = std::max(0.0, static_cast<double>(results[r].time) - lambda + 1.0);
  });

  std::uint64_t censored = 0, stopped = 0, wrong = 0;
  for (const auto& res : results) {
    if (res.censored) {
      ++censored;
    } else if (res.time >= scenario.change_time) {
      ++stopped;
      if (res.type != *scenario.true_type) ++wrong;
    }
  }
  DelayEstimate out;
  out.delay = summarize(delays, censored, options.cap);
  out.misisolation = stopped == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(stopped);
  return out;
}

/// Mean time E^{data}[T_{d = target}] to the first `target`-type decision
/// under renewal restarts, with data i.i.d. from `data`. options.cap is the
/// total sample budget per run.
template <class Factory>
  requires DiagnosisProcedure<std::invoke_result_t<Factory&>>
McEstimate estimate_false_metric(Factory&& make_procedure, const Distribution& data,
                                 int target_type, const McOptions& options) {
  if (options.runs < 2) throw InputError("estimate_false_metric: need at least 2 runs");
  if (target_type < 1) throw InputError("estimate_false_metric: target type must be >= 1");
  const Scenario scenario{data, std::nullopt, 1, std::nullopt};
  std::vector<double> times(options.runs);
  std::vector<char> censored_flag(options.runs, 0);
  parallel_for(options.runs, options.threads, [&](std::size_t r) {
    ScenarioSource source(scenario, RngStream(options.master_seed, r));
    const auto t = renewal_first_detection(make_procedure, source, target_type, options.cap);
    times[r] = static_cast<double>(t.time);
    censored_flag[r] = t.censored ? 1 : 0;
  });
  const auto censored =
      static_cast<std::uint64_t>(std::count(censored_flag.begin(), censored_flag.end(), 1));
  return summarize(times, censored, options.cap);
}

/// One term E^{nu_from}[T_{d = target}] of the false-alarm/false-isolation metric.
struct FalseComponent {
  Distribution data;
  int from = 0;
  int target = 1;
};

/// All (i, j) components, i in 0..J, j in 1..J, i != j, with data nu_i.
inline std::vector<FalseComponent> false_components(const std::vector<Distribution>& nu) {
  std::vector<FalseComponent> out;
  const int types = static_cast<int>(nu.size()) - 1;
  for (int j = 1; j <= types; ++j)
    for (int i = 0; i <= types; ++i)
      if (i != j) out.push_back({nu[i], i, j});
  return out;
}

struct CalibrationOptions {
  double gamma = 10000.0;
  double tolerance = 0.25;
  McOptions mc;  // mc.cap = 0 selects the default budget of 20 * gamma samples
  int max_expansions = 12;
  int max_iterations = 40;
};

struct Calibration {
  double h = 0.0;
  McEstimate estimate;  // the minimizing component at h
  int min_component = -1;
  bool converged = false;
  int evaluations = 0;
  std::vector<std::string> warnings;
};

/// Chooses h so that min over components of the estimated false metric is
/// within tolerance * gamma of gamma. Starts from h = log gamma, brackets,
/// then bisects. Runs with common random numbers across evaluations.
template <class FactoryForThreshold>
Calibration calibrate_threshold(FactoryForThreshold&& factory_for,
                                const std::vector<FalseComponent>& components,
                                const CalibrationOptions& options) {
  if (!(options.gamma > 1.0)) throw InputError("calibrate_threshold: gamma must exceed 1");
  if (components.empty()) throw InputError("calibrate_threshold: no false-metric components");
  if (!(options.tolerance > 0.0)) throw InputError("calibrate_threshold: tolerance must be positive");
  McOptions mc = options.mc;
  if (mc.cap == 0) mc.cap = static_cast<std::uint64_t>(std::ceil(20.0 * options.gamma));

  const double gamma = options.gamma;
  const double h0 = std::log(gamma);
  Calibration out;

  struct Eval {
    double h;
    McEstimate est;
    int component;
  };
  auto evaluate = [&](double h) {
    ++out.evaluations;
    Eval e{h, {}, -1};
    for (std::size_t c = 0; c < components.size(); ++c) {
      const auto est = estimate_false_metric(factory_for(h), components[c].data,
                                             components[c].target, mc);
      if (e.component < 0 || est.mean < e.est.mean) {
        e.est = est;
        e.component = static_cast<int>(c);
      }
    }
    return e;
  };
  auto within = [&](const Eval& e) { return std::abs(e.est.mean - gamma) <= options.tolerance * gamma; };
  auto finish = [&](const Eval& e, bool converged) {
    out.h = e.h;
    out.estimate = e.est;
    out.min_component = e.component;
    out.converged = converged;
    return out;
  };
  auto budget_exhausted = [&](const Eval& e) { return 2 * e.est.censored > e.est.runs; };
  auto fallback = [&]() {
    out.warnings.push_back("Monte Carlo budget insufficient (over half the runs censored); "
                           "falling back to h = log(gamma)");
    out.h = h0;
    out.converged = false;
    return out;
  };
  auto noisy_decrease = [](const Eval& lower_h, const Eval& higher_h) {
    return higher_h.est.mean < lower_h.est.mean - 2.0 * (lower_h.est.se + higher_h.est.se);
  };

  Eval best = evaluate(h0);
  if (budget_exhausted(best)) return fallback();
  if (within(best)) return finish(best, true);
  auto track = [&](const Eval& e) {
    if (std::abs(e.est.mean - gamma) < std::abs(best.est.mean - gamma)) best = e;
  };

  Eval lo = best, hi = best;
  if (best.est.mean < gamma) {
    double step = 1.0;
    for (int n = 0;; ++n) {
      if (n >= options.max_expansions) {
        out.warnings.push_back("could not bracket gamma from above; returning widest h");
        return finish(hi, false);
      }
      Eval next = evaluate(hi.h + step);
      if (budget_exhausted(next)) return fallback();
      if (noisy_decrease(hi, next)) {
        out.warnings.push_back("non-monotone false-metric estimates; returning widest bracketing h");
        return finish(next, false);
      }
      track(next);
      if (within(next)) return finish(next, true);
      if (next.est.mean >= gamma) {
        lo = hi;
        hi = next;
        break;
      }
      hi = next;
      step *= 2.0;
    }
  } else {
    for (int n = 0;; ++n) {
      if (n >= options.max_expansions) {
        out.warnings.push_back("could not bracket gamma from below; returning smallest h tried");
        return finish(lo, false);
      }
      Eval next = evaluate(lo.h * 0.5);
      if (noisy_decrease(next, lo)) {
        out.warnings.push_back("non-monotone false-metric estimates; returning widest bracketing h");
        return finish(lo, false);
      }
      track(next);
      if (within(next)) return finish(next, true);
      if (next.est.mean <= gamma) {
        hi = lo;
        lo = next;
        break;
      }
      lo = next;
    }
  }

  for (int n = 0; n < options.max_iterations; ++n) {
    Eval mid = evaluate(0.5 * (lo.h + hi.h));
    if (budget_exhausted(mid)) return fallback();
    track(mid);
    if (within(mid)) return finish(mid, true);
    if (mid.est.mean < gamma)
      lo = mid;
    else
      hi = mid;
  }
  out.warnings.push_back("bisection did not reach the tolerance; returning closest h");
  return finish(best, false);
}

/// Bound on the worst-case delay ratio of robust to matched MCUSUM:
/// min_ij D(nu_j || nu_i) / Delta_*(nu, robust pairs).
inline double robustness_cost_bound(const std::vector<Distribution>& nu, const UpsilonSet& robust) {
  return min_pairwise_kl(nu) / delta_star(nu, robust);
}

/// A sweep point: the type-`type` distribution is moved to N(mean, I); the
/// other components stay at the model's LFDs.
struct GridPoint {
  int type = 1;
  Vector mean;

  bool operator==(const GridPoint&) const = default;
};

inline std::vector<Distribution> distributions_at(const UncertaintyModel& model,
                                                  const GridPoint& point) {
  if (point.type < 1 || point.type > model.num_types())
    throw InputError("GridPoint: change type out of range");
  auto nu = model.lfd_distributions();
  nu[static_cast<std::size_t>(point.type)] = GaussianId(point.mean);
  return nu;
}

struct ComparisonRow {
  GridPoint point;
  std::vector<DelayEstimate> robust;  // element j-1: delay of a type-j change
  std::vector<DelayEstimate> oracle;
  double worst_robust = 0.0;          // max over j
  double worst_robust_se = 0.0;
  double worst_oracle = 0.0;
  double worst_oracle_se = 0.0;
  double ratio = 0.0;                 // worst_robust / worst_oracle
  double bound = 0.0;                 // robustness_cost_bound at the grid point
};

/// Delays of the robust MCUSUM (model pairs) and of the matched MCUSUM built
/// from the true distributions, per grid point, plus the ratio bound.
inline std::vector<ComparisonRow> compare_robust_vs_oracle(const UncertaintyModel& model,
                                                           const std::vector<GridPoint>& grid,
                                                           double h, const McOptions& options) {
  if (!check_dsb_direct(model).passed)
    throw InputError("compare_robust_vs_oracle: model is not dually stochastically bounded");
  std::vector<ComparisonRow> rows;
  const int types = model.num_types();
  for (const auto& point : grid) {
    const auto nu = distributions_at(model, point);
    const auto oracle_pairs = UpsilonSet::matched(nu);
    ComparisonRow row;
    row.point = point;
    for (int j = 1; j <= types; ++j) {
      const Scenario scenario{nu[0], nu[static_cast<std::size_t>(j)], 1, j};
      row.robust.push_back(estimate_delay([&] { return Mcusum(model.pairs, h); }, scenario, options));
      row.oracle.push_back(estimate_delay([&] { return Mcusum(oracle_pairs, h); }, scenario, options));
    }
    auto worst = [](const std::vector<DelayEstimate>& v, double& mean, double& se) {
      mean = -kInf;
      for (const auto& d : v)
        if (d.delay.mean > mean) {
          mean = d.delay.mean;
          se = d.delay.se;
        }
    };
    worst(row.robust, row.worst_robust, row.worst_robust_se);
    worst(row.oracle, row.worst_oracle, row.worst_oracle_se);
    row.ratio = row.worst_robust / row.worst_oracle;
    row.bound = robustness_cost_bound(nu, model.pairs);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qcd

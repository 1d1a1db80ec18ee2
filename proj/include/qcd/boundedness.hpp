#pragma once

#include <qcd/box.hpp>
#include <qcd/distributions.hpp>
#include <qcd/error.hpp>
#include <qcd/mcusum.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace qcd {

/// Absolute slack used when comparing closed-form quantities that are equal in
/// exact arithmetic (e.g. a tight WSB1 bound).
inline constexpr double kBoundTolerance = 1e-12;

/// Extremum of an affine function of the mean over a box. `argument` may hold
/// infinite coordinates when the extremum is unbounded.
struct AffineExtremum {
  double value = 0.0;
  Vector argument;
  bool unbounded = false;
};

/// Delta_ij = D(nu_j || v0) - D(nu_j || v1): drift of the pair's LLR under nu_j.
inline double delta_ij(const Distribution& nu_j, const DistPair& pair) {
  return kl_divergence(nu_j, pair.null_dist) - kl_divergence(nu_j, pair.alt_dist);
}

/// Delta_* = min over (i, j) of Delta_ij(nu_j, v_ij).
inline double delta_star(const std::vector<Distribution>& nu, const UpsilonSet& upsilon) {
  if (nu.size() != static_cast<std::size_t>(upsilon.num_types()) + 1)
    throw InputError("delta_star: need J + 1 distributions");
  upsilon.require_complete();
  double best = kInf;
  for (const auto& [i, j] : upsilon.keys()) best = std::min(best, delta_ij(nu[j], upsilon.at(i, j)));
  return best;
}

/// min over (i, j), i != j, j >= 1 of D(nu_j || nu_i).
inline double min_pairwise_kl(const std::vector<Distribution>& nu) {
  if (nu.size() < 2) throw InputError("min_pairwise_kl: need at least two distributions");
  double best = kInf;
  for (std::size_t j = 1; j < nu.size(); ++j)
    for (std::size_t i = 0; i < nu.size(); ++i)
      if (i != j) best = std::min(best, kl_divergence(nu[j], nu[i]));
  return best;
}

namespace detail {

struct GaussianPairMeans {
  const Vector& null_mean;
  const Vector& alt_mean;
};

inline GaussianPairMeans gaussian_means(const DistPair& pair, const BoxSet& box, const char* op) {
  const auto* g0 = std::get_if<GaussianId>(&pair.null_dist);
  const auto* g1 = std::get_if<GaussianId>(&pair.alt_dist);
  if (g0 == nullptr || g1 == nullptr)
    throw InputError(std::string(op) + ": box optimization needs a Gaussian pair");
  if (g0->dimension() != box.dimension())
    throw InputError(std::string(op) + ": dimension mismatch");
  return {g0->mean(), g1->mean()};
}

/// Minimizes c'x + constant over the box by per-coordinate sign analysis.
inline AffineExtremum minimize_affine(const Vector& c, double constant, const BoxSet& box) {
  AffineExtremum out;
  out.argument.resize(c.size());
  double value = constant;
  for (std::size_t n = 0; n < c.size(); ++n) {
    const double lo = box.lower()[n], hi = box.upper()[n];
    double x;
    if (c[n] > 0.0) {
      x = lo;
    } else if (c[n] < 0.0) {
      x = hi;
    } else {
      // Flat direction: any feasible point, prefer the one nearest the origin.
      x = std::clamp(0.0, lo, hi);
    }
    out.argument[n] = x;
    if (std::isinf(x)) {
      out.unbounded = true;
    } else if (c[n] != 0.0) {
      value += c[n] * x;
    }
  }
  out.value = out.unbounded ? -kInf : value;
  return out;
}

}  // namespace detail

/// inf over phi in the box of Delta(N(phi, I), pair). Delta is affine in phi:
/// (t1 - t0)'phi + (|t0|^2 - |t1|^2)/2.
inline AffineExtremum inf_delta_over_box(const BoxSet& box, const DistPair& pair) {
  const auto [t0, t1] = detail::gaussian_means(pair, box, "inf_delta_over_box");
  Vector c(t0.size());
  for (std::size_t n = 0; n < c.size(); ++n) c[n] = t1[n] - t0[n];
  const double constant = 0.5 * (detail::squared_norm(t0) - detail::squared_norm(t1));
  return detail::minimize_affine(c, constant, box);
}

/// sup over mu in the box of E^{N(mu, I)}[dv1/dv0]. Returns exp of the supremum
/// of the affine exponent (t1 - t0)'(mu - t0); `exponent` receives the exponent.
inline AffineExtremum sup_lr_expectation_over_box(const BoxSet& box, const DistPair& pair,
                                                  double* exponent = nullptr) {
  const auto [t0, t1] = detail::gaussian_means(pair, box, "sup_lr_expectation_over_box");
  // sup of c'mu - c't0 is minus the inf of (-c)'mu + c't0.
  Vector neg_c(t0.size());
  double c_dot_t0 = 0.0;
  for (std::size_t n = 0; n < neg_c.size(); ++n) {
    neg_c[n] = t0[n] - t1[n];
    c_dot_t0 += (t1[n] - t0[n]) * t0[n];
  }
  auto ext = detail::minimize_affine(neg_c, c_dot_t0, box);
  const double sup_exponent = ext.unbounded ? kInf : -ext.value;
  if (exponent != nullptr) *exponent = sup_exponent;
  ext.value = std::exp(sup_exponent);
  return ext;
}

/// One checked inequality. `relation` is ">=", "<=" or "==" and reads
/// `achieved relation bound`.
struct Witness {
  std::string condition;
  std::string detail;
  Vector point;
  double achieved = 0.0;
  double bound = 0.0;
  std::string relation;
  bool satisfied = false;
};

struct Certificate {
  bool passed = true;
  std::vector<Witness> witnesses;
  std::vector<std::string> warnings;
  double delta_star = std::numeric_limits<double>::quiet_NaN();

  void add(Witness w) {
    passed = passed && w.satisfied;
    witnesses.push_back(std::move(w));
  }

  void merge(const Certificate& other) {
    for (const auto& w : other.witnesses) add(w);
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
  }

  const Witness* find(const std::string& condition) const {
    for (const auto& w : witnesses)
      if (w.condition == condition) return &w;
    return nullptr;
  }
};

namespace detail {

inline Witness compare(std::string condition, std::string detail_text, Vector point,
                       double achieved, const std::string& relation, double bound) {
  bool ok;
  if (relation == ">=")
    ok = achieved >= bound - kBoundTolerance;
  else if (relation == "<=")
    ok = achieved <= bound + kBoundTolerance;
  else
    ok = std::abs(achieved - bound) <= kBoundTolerance;
  return {std::move(condition), std::move(detail_text), std::move(point), achieved, bound,
          relation, ok};
}

inline std::string pair_label(int i, int j) {
  return "v" + std::to_string(i) + std::to_string(j);
}

}  // namespace detail

/// Weak stochastic boundedness of (P_i, P_j) by the pair (v0, v1):
///   membership: v0 in P_i, v1 in P_j
///   WSB1: inf_{nu in P_j} Delta(nu, pair) >= D(v1 || v0)
///   WSB2: sup_{nu in P_i} E^nu[dv1/dv0] <= 1  (checked on the exponent, <= 0)
inline Certificate check_wsb(const BoxSet& set_i, const BoxSet& set_j, const DistPair& pair,
                             const std::string& label = "") {
  Certificate cert;
  const auto [t0, t1] = detail::gaussian_means(pair, set_i, "check_wsb");
  const std::string suffix = label.empty() ? "" : "[" + label + "]";

  cert.add({"WSB_null_membership" + suffix, "null distribution mean must lie in P_i", t0,
            set_i.contains(t0, kBoundTolerance) ? 1.0 : 0.0, 1.0, "==",
            set_i.contains(t0, kBoundTolerance)});
  cert.add({"WSB_alt_membership" + suffix, "alternative distribution mean must lie in P_j", t1,
            set_j.contains(t1, kBoundTolerance) ? 1.0 : 0.0, 1.0, "==",
            set_j.contains(t1, kBoundTolerance)});

  const auto inf_delta = inf_delta_over_box(set_j, pair);
  cert.add(detail::compare("WSB1" + suffix, "inf over P_j of Delta >= D(v1||v0)",
                           inf_delta.argument, inf_delta.value, ">=",
                           kl_divergence(pair.alt_dist, pair.null_dist)));

  double exponent = 0.0;
  const auto sup_lr = sup_lr_expectation_over_box(set_i, pair, &exponent);
  auto w2 = detail::compare("WSB2" + suffix, "sup over P_i of E[dv1/dv0] <= 1 (log scale)",
                            sup_lr.argument, exponent, "<=", 0.0);
  cert.add(std::move(w2));
  return cert;
}

/// Uncertainty sets P_0..P_J, candidate robust pairs and candidate LFDs.
struct UncertaintyModel {
  std::vector<BoxSet> sets;
  UpsilonSet pairs;
  std::vector<GaussianId> lfds;

  int num_types() const { return pairs.num_types(); }

  std::vector<Distribution> lfd_distributions() const {
    return {lfds.begin(), lfds.end()};
  }
};

namespace detail {

inline void validate_model(const UncertaintyModel& model) {
  const auto J = static_cast<std::size_t>(model.num_types());
  if (model.sets.size() != J + 1 || model.lfds.size() != J + 1)
    throw InputError("UncertaintyModel: need J + 1 sets and J + 1 LFDs");
  model.pairs.require_complete();
  const auto dim = model.sets.front().dimension();
  for (const auto& s : model.sets)
    if (s.dimension() != dim) throw InputError("UncertaintyModel: sets differ in dimension");
  for (const auto& g : model.lfds)
    if (g.dimension() != dim) throw InputError("UncertaintyModel: LFD dimension mismatch");
  for (const auto& [i, j] : model.pairs.keys()) {
    const auto& p = model.pairs.at(i, j);
    if (!std::holds_alternative<GaussianId>(p.null_dist) ||
        support_size(p.null_dist) != dim)
      throw InputError("UncertaintyModel: pairs must be Gaussian of the sets' dimension");
  }
}

/// LFD membership witnesses plus the disjointness warnings.
inline Certificate structural_checks(const UncertaintyModel& model) {
  Certificate cert;
  for (std::size_t i = 0; i < model.sets.size(); ++i) {
    const bool inside = model.sets[i].contains(model.lfds[i].mean(), kBoundTolerance);
    cert.add({"LFD_membership[" + std::to_string(i) + "]", "LFD mean must lie in P_" +
              std::to_string(i), model.lfds[i].mean(), inside ? 1.0 : 0.0, 1.0, "==", inside});
  }
  for (std::size_t a = 0; a < model.sets.size(); ++a)
    for (std::size_t b = a + 1; b < model.sets.size(); ++b)
      if (model.sets[a].overlaps(model.sets[b]))
        cert.warnings.push_back("uncertainty sets P_" + std::to_string(a) + " and P_" +
                                std::to_string(b) + " are not disjoint");
  return cert;
}

struct MinMinInfDelta {
  double value = kInf;
  Vector argument;
  PairIndex at;
};

inline MinMinInfDelta min_min_inf_delta(const UncertaintyModel& model) {
  MinMinInfDelta out;
  for (const auto& [i, j] : model.pairs.keys()) {
    const auto e = inf_delta_over_box(model.sets[j], model.pairs.at(i, j));
    if (out.argument.empty() || e.value < out.value) out = {e.value, e.argument, {i, j}};
  }
  return out;
}

/// min over (i,j) of D(nu_j || nu_i) with the minimizing index.
inline std::pair<double, PairIndex> min_pairwise_kl_at(const std::vector<Distribution>& nu) {
  double best = kInf;
  PairIndex at{};
  for (std::size_t j = 1; j < nu.size(); ++j)
    for (std::size_t i = 0; i < nu.size(); ++i)
      if (i != j) {
        const double d = kl_divergence(nu[j], nu[i]);
        if (d < best) {
          best = d;
          at = {static_cast<int>(i), static_cast<int>(j)};
        }
      }
  return {best, at};
}

inline std::pair<double, PairIndex> delta_star_at(const std::vector<Distribution>& nu,
                                                  const UpsilonSet& upsilon) {
  double best = kInf;
  PairIndex at{};
  for (const auto& [i, j] : upsilon.keys()) {
    const double d = delta_ij(nu[j], upsilon.at(i, j));
    if (d < best) {
      best = d;
      at = {i, j};
    }
  }
  return {best, at};
}

}  // namespace detail

/// Dual stochastic boundedness through the sufficient route: every (P_i, P_j)
/// weakly bounded by v_ij, plus
///   pDSB1: min_ij inf_{P_j} Delta_ij == Delta_*(lfds, pairs)
///   pDSB2: min_ij D(lfd_j || lfd_i) <= min_ij D(v1_ij || v0_ij)
inline Certificate check_dsb_via_wsb(const UncertaintyModel& model) {
  detail::validate_model(model);
  Certificate cert = detail::structural_checks(model);
  for (const auto& [i, j] : model.pairs.keys())
    cert.merge(check_wsb(model.sets[i], model.sets[j], model.pairs.at(i, j),
                         detail::pair_label(i, j)));

  const auto nu = model.lfd_distributions();
  const auto [dstar, dstar_at] = detail::delta_star_at(nu, model.pairs);
  cert.delta_star = dstar;
  const auto lhs = detail::min_min_inf_delta(model);
  cert.add(detail::compare("pDSB1", "min-min inf Delta over boxes (at " +
                           detail::pair_label(lhs.at.i, lhs.at.j) + ") == Delta_* of LFDs (at " +
                           detail::pair_label(dstar_at.i, dstar_at.j) + ")",
                           lhs.argument, lhs.value, "==", dstar));

  const auto [kl_lfd, kl_lfd_at] = detail::min_pairwise_kl_at(nu);
  double kl_pairs = kInf;
  for (const auto& [i, j] : model.pairs.keys()) {
    const auto& p = model.pairs.at(i, j);
    kl_pairs = std::min(kl_pairs, kl_divergence(p.alt_dist, p.null_dist));
  }
  cert.add(detail::compare("pDSB2", "min pairwise D(lfd_j||lfd_i) (at " +
                           detail::pair_label(kl_lfd_at.i, kl_lfd_at.j) +
                           ") <= min D(v1||v0) over pairs",
                           model.lfds[kl_lfd_at.j].mean(), kl_lfd, "<=", kl_pairs));
  return cert;
}

/// Dual stochastic boundedness checked directly:
///   DSB1: Delta_*(lfds, pairs) <= min_ij inf_{P_j} Delta_ij
///   DSB2: min_ij D(lfd_j || lfd_i) <= Delta_*(lfds, pairs)
///   DSB3: max_ij sup_{P_i} E[dv1_ij/dv0_ij] <= 1
inline Certificate check_dsb_direct(const UncertaintyModel& model) {
  detail::validate_model(model);
  Certificate cert = detail::structural_checks(model);
  const auto nu = model.lfd_distributions();
  const auto [dstar, dstar_at] = detail::delta_star_at(nu, model.pairs);
  cert.delta_star = dstar;

  const auto rhs = detail::min_min_inf_delta(model);
  cert.add(detail::compare("DSB1", "Delta_* of LFDs (at " +
                           detail::pair_label(dstar_at.i, dstar_at.j) +
                           ") <= min-min inf Delta over boxes (at " +
                           detail::pair_label(rhs.at.i, rhs.at.j) + ")",
                           rhs.argument, dstar, "<=", rhs.value));

  const auto [kl_lfd, kl_lfd_at] = detail::min_pairwise_kl_at(nu);
  cert.add(detail::compare("DSB2", "min pairwise D(lfd_j||lfd_i) (at " +
                           detail::pair_label(kl_lfd_at.i, kl_lfd_at.j) + ") <= Delta_* of LFDs",
                           model.lfds[kl_lfd_at.j].mean(), kl_lfd, "<=", dstar));

  double worst = -kInf;
  Vector worst_at;
  PairIndex worst_pair{};
  for (const auto& [i, j] : model.pairs.keys()) {
    double exponent = 0.0;
    const auto e = sup_lr_expectation_over_box(model.sets[i], model.pairs.at(i, j), &exponent);
    if (worst_at.empty() || exponent > worst) {
      worst = exponent;
      worst_at = e.argument;
      worst_pair = {i, j};
    }
  }
  cert.add(detail::compare("DSB3", "max sup E[dv1/dv0] <= 1 (log scale, worst at " +
                           detail::pair_label(worst_pair.i, worst_pair.j) + ")",
                           worst_at, worst, "<=", 0.0));
  return cert;
}

}  // namespace qcd

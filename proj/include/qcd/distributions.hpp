#pragma once

#include <qcd/error.hpp>
#include <qcd/rng.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace qcd {

using Vector = std::vector<double>;

/// An observation is either a point of R^N or a symbol of a finite alphabet.
using Observation = std::variant<Vector, std::size_t>;

/// N(mean, I): Gaussian with identity covariance.
class GaussianId {
 public:
  explicit GaussianId(Vector mean) : mean_(std::move(mean)) {
    if (mean_.empty()) throw InputError("GaussianId: dimension must be positive");
    for (double m : mean_)
      if (!std::isfinite(m)) throw InputError("GaussianId: mean components must be finite");
  }

  std::size_t dimension() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }

  bool operator==(const GaussianId&) const = default;

 private:
  Vector mean_;
};

/// Distribution on {0, ..., K-1} with strictly positive masses.
class Categorical {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit Categorical(Vector probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InputError("Categorical: alphabet must be nonempty");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p > 0.0) || !std::isfinite(p))
        throw InputError("Categorical: probabilities must be strictly positive and finite");
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance)
      throw InputError("Categorical: probabilities must sum to 1");
  }

  std::size_t size() const { return probs_.size(); }
  const Vector& probs() const { return probs_; }
  double prob(std::size_t symbol) const { return probs_.at(symbol); }

  bool operator==(const Categorical&) const = default;

 private:
  Vector probs_;
};

using Distribution = std::variant<GaussianId, Categorical>;

namespace detail {

inline std::string family_name(const Distribution& d) {
  return std::holds_alternative<GaussianId>(d) ? "gaussian" : "categorical";
}

inline std::size_t support_size(const Distribution& d) {
  return std::visit([](const auto& x) {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, GaussianId>)
      return x.dimension();
    else
      return x.size();
  }, d);
}

inline void require_compatible(const Distribution& a, const Distribution& b, const char* op) {
  if (a.index() != b.index())
    throw InputError(std::string(op) + ": family mismatch (" + family_name(a) + " vs " +
                     family_name(b) + ")");
  if (support_size(a) != support_size(b))
    throw InputError(std::string(op) + ": dimension/alphabet mismatch");
}

inline double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const double d = a[n] - b[n];
    s += d * d;
  }
  return s;
}

inline double squared_norm(const Vector& a) {
  return std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
}

}  // namespace detail

/// Ordered pair (v0, v1): null and alternative hypothesis of one CUSUM test.
struct DistPair {
  DistPair(Distribution null_d, Distribution alt_d)
      : null_dist(std::move(null_d)), alt_dist(std::move(alt_d)) {
    detail::require_compatible(null_dist, alt_dist, "DistPair");
  }

  Distribution null_dist;
  Distribution alt_dist;

  bool operator==(const DistPair&) const = default;
};

inline double log_density(const Distribution& d, const Observation& y) {
  if (const auto* g = std::get_if<GaussianId>(&d)) {
    const auto* x = std::get_if<Vector>(&y);
    if (x == nullptr || x->size() != g->dimension())
      throw InputError("log_density: observation does not match Gaussian dimension");
    const double n = static_cast<double>(g->dimension());
    return -0.5 * n * std::log(2.0 * std::numbers::pi) -
           0.5 * detail::squared_distance(*x, g->mean());
  }
  const auto& c = std::get<Categorical>(d);
  const auto* s = std::get_if<std::size_t>(&y);
  if (s == nullptr || *s >= c.size())
    throw InputError("log_density: observation is not a symbol of the alphabet");
  return std::log(c.prob(*s));
}

/// Draws into `out`, reusing its storage when the alternative already matches.
inline void sample_into(const Distribution& d, RngStream& stream, Observation& out) {
  if (const auto* g = std::get_if<GaussianId>(&d)) {
    auto* x = std::get_if<Vector>(&out);
    if (x == nullptr) x = &out.emplace<Vector>();
    x->resize(g->dimension());
    for (std::size_t n = 0; n < g->dimension(); ++n) (*x)[n] = g->mean()[n] + stream.normal();
    return;
  }
  const auto& probs = std::get<Categorical>(d).probs();
  const double u = stream.uniform();
  double cumulative = 0.0;
  std::size_t symbol = probs.size() - 1;
  for (std::size_t s = 0; s + 1 < probs.size(); ++s) {
    cumulative += probs[s];
    if (u < cumulative) {
      symbol = s;
      break;
    }
  }
  out = symbol;
}

inline Observation sample(const Distribution& d, RngStream& stream) {
  Observation y;
  sample_into(d, stream, y);
  return y;
}

/// Relative entropy D(p || q).
inline double kl_divergence(const Distribution& p, const Distribution& q) {
  detail::require_compatible(p, q, "kl_divergence");
  if (const auto* gp = std::get_if<GaussianId>(&p))
    return 0.5 * detail::squared_distance(gp->mean(), std::get<GaussianId>(q).mean());
  const auto& cp = std::get<Categorical>(p).probs();
  const auto& cq = std::get<Categorical>(q).probs();
  double d = 0.0;
  for (std::size_t s = 0; s < cp.size(); ++s) d += cp[s] * std::log(cp[s] / cq[s]);
  return d < 0.0 ? 0.0 : d;
}

/// log (dv1/dv0)(y).
inline double llr_increment(const DistPair& pair, const Observation& y) {
  return log_density(pair.alt_dist, y) - log_density(pair.null_dist, y);
}

/// E^under[(dv1/dv0)(Y)], in closed form. May be +inf.
inline double lr_expectation(const DistPair& pair, const Distribution& under) {
  detail::require_compatible(pair.null_dist, under, "lr_expectation");
  if (const auto* gu = std::get_if<GaussianId>(&under)) {
    const auto& t0 = std::get<GaussianId>(pair.null_dist).mean();
    const auto& t1 = std::get<GaussianId>(pair.alt_dist).mean();
    const auto& mu = gu->mean();
    double exponent = 0.0;
    for (std::size_t n = 0; n < mu.size(); ++n) exponent += (t1[n] - t0[n]) * (mu[n] - t0[n]);
    return std::exp(exponent);
  }
  const auto& pu = std::get<Categorical>(under).probs();
  const auto& p0 = std::get<Categorical>(pair.null_dist).probs();
  const auto& p1 = std::get<Categorical>(pair.alt_dist).probs();
  double e = 0.0;
  for (std::size_t s = 0; s < pu.size(); ++s) e += pu[s] * p1[s] / p0[s];
  return e;
}

/// Precompiled form of llr_increment for hot loops. For identity-covariance
/// Gaussians the log-likelihood ratio is affine, (t1 - t0)'y - (|t1|^2 - |t0|^2)/2;
/// for categorical pairs it is a per-symbol table.
class LlrKernel {
 public:
  explicit LlrKernel(const DistPair& pair) {
    if (const auto* g0 = std::get_if<GaussianId>(&pair.null_dist)) {
      const auto& t0 = g0->mean();
      const auto& t1 = std::get<GaussianId>(pair.alt_dist).mean();
      weights_.resize(t0.size());
      for (std::size_t n = 0; n < t0.size(); ++n) weights_[n] = t1[n] - t0[n];
      offset_ = 0.5 * (detail::squared_norm(t1) - detail::squared_norm(t0));
      gaussian_ = true;
    } else {
      const auto& p0 = std::get<Categorical>(pair.null_dist).probs();
      const auto& p1 = std::get<Categorical>(pair.alt_dist).probs();
      weights_.resize(p0.size());
      for (std::size_t s = 0; s < p0.size(); ++s) weights_[s] = std::log(p1[s]) - std::log(p0[s]);
    }
  }

  double operator()(const Observation& y) const {
    if (gaussian_) {
      const auto* x = std::get_if<Vector>(&y);
      if (x == nullptr || x->size() != weights_.size())
        throw InputError("llr: observation does not match Gaussian dimension");
      double z = -offset_;
      for (std::size_t n = 0; n < weights_.size(); ++n) z += weights_[n] * (*x)[n];
      return z;
    }
    const auto* s = std::get_if<std::size_t>(&y);
    if (s == nullptr || *s >= weights_.size())
      throw InputError("llr: observation is not a symbol of the alphabet");
    return weights_[*s];
  }

 private:
  Vector weights_;
  double offset_ = 0.0;
  bool gaussian_ = false;
};

}  // namespace qcd

#pragma once

#include <qcd/distributions.hpp>
#include <qcd/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace qcd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned box of mean vectors, bounds may be infinite. Stands for the
/// uncertainty set { N(phi, I) : lower <= phi <= upper }.
class BoxSet {
 public:
  BoxSet(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.empty() || lower_.size() != upper_.size())
      throw InputError("BoxSet: lower and upper must be nonempty and of equal length");
    for (std::size_t n = 0; n < lower_.size(); ++n) {
      if (std::isnan(lower_[n]) || std::isnan(upper_[n]))
        throw InputError("BoxSet: bounds must not be NaN");
      if (lower_[n] > upper_[n] || lower_[n] == kInf || upper_[n] == -kInf)
        throw InputError("BoxSet: empty in coordinate " + std::to_string(n));
    }
  }

  static BoxSet point(const Vector& at) { return BoxSet(at, at); }

  std::size_t dimension() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  bool bounded() const {
    return std::all_of(lower_.begin(), lower_.end(), [](double v) { return std::isfinite(v); }) &&
           std::all_of(upper_.begin(), upper_.end(), [](double v) { return std::isfinite(v); });
  }

  bool contains(const Vector& x, double tolerance = 0.0) const {
    if (x.size() != dimension()) throw InputError("BoxSet::contains: dimension mismatch");
    for (std::size_t n = 0; n < x.size(); ++n)
      if (x[n] < lower_[n] - tolerance || x[n] > upper_[n] + tolerance) return false;
    return true;
  }

  /// Euclidean projection onto the box (componentwise clip).
  Vector project(const Vector& x) const {
    Vector out(x.size());
    project_into(x, out);
    return out;
  }

  void project_into(const Vector& x, Vector& out) const {
    if (x.size() != dimension()) throw InputError("BoxSet::project: dimension mismatch");
    out.resize(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) out[n] = std::clamp(x[n], lower_[n], upper_[n]);
  }

  /// True when the closed boxes share a point.
  bool overlaps(const BoxSet& other) const {
    if (other.dimension() != dimension()) throw InputError("BoxSet::overlaps: dimension mismatch");
    for (std::size_t n = 0; n < dimension(); ++n)
      if (upper_[n] < other.lower_[n] || other.upper_[n] < lower_[n]) return false;
    return true;
  }

  BoxSet translated(const Vector& shift) const {
    Vector lo = lower_, hi = upper_;
    for (std::size_t n = 0; n < lo.size(); ++n) {
      lo[n] += shift.at(n);
      hi[n] += shift[n];
    }
    return {lo, hi};
  }

  bool operator==(const BoxSet&) const = default;

 private:
  Vector lower_;
  Vector upper_;
};

}  // namespace qcd

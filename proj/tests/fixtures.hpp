#pragma once

#include <qcd/boundedness.hpp>
#include <qcd/box.hpp>
#include <qcd/distributions.hpp>
#include <qcd/mcusum.hpp>

#include <vector>

namespace qcd::testing {

inline GaussianId iso(double v) { return GaussianId({v, v}); }

// Two change types in R^2: P0 = (-inf, 0]^2, P1 = [0.4, 0.8]^2, P2 = [1.5, inf)^2.
inline std::vector<BoxSet> two_type_sets() {
  return {BoxSet({-kInf, -kInf}, {0.0, 0.0}), BoxSet({0.4, 0.4}, {0.8, 0.8}),
          BoxSet({1.5, 1.5}, {kInf, kInf})};
}

inline UpsilonSet two_type_robust_pairs() {
  UpsilonSet u(2);
  u.set(0, 1, DistPair(iso(0.0), iso(0.4)));
  u.set(0, 2, DistPair(iso(0.0), iso(1.5)));
  u.set(1, 2, DistPair(iso(0.8), iso(1.5)));
  u.set(2, 1, DistPair(iso(1.5), iso(0.8)));
  return u;
}

inline std::vector<GaussianId> two_type_lfds() { return {iso(0.0), iso(0.4), iso(1.5)}; }

inline UncertaintyModel two_type_model() {
  return {two_type_sets(), two_type_robust_pairs(), two_type_lfds()};
}

}  // namespace qcd::testing

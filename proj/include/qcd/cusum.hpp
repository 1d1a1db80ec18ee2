#pragma once

#include <qcd/distributions.hpp>
#include <qcd/error.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace qcd {

/// S_k of one CUSUM test. S_0 = 0. The statistic is the maximum of the
/// partial LLR sums ending at k, so it can be negative.
struct CusumState {
  double s = 0.0;
  std::uint64_t k = 0;

  bool operator==(const CusumState&) const = default;
};

/// S_k = max(S_{k-1}, 0) + z_k.
inline CusumState cusum_update(CusumState state, double z) {
  if (!std::isfinite(z)) throw InputError("cusum_update: increment must be finite");
  return {std::max(state.s, 0.0) + z, state.k + 1};
}

/// max over n of sum_{l=n..k} z_l. O(k); independent of the recursion.
inline double cusum_statistic_bruteforce(std::span<const double> increments) {
  if (increments.empty()) throw InputError("cusum_statistic_bruteforce: empty sequence");
  double suffix = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (auto it = increments.rbegin(); it != increments.rend(); ++it) {
    suffix += *it;
    best = std::max(best, suffix);
  }
  return best;
}

inline double cusum_statistic_bruteforce(const DistPair& pair,
                                         std::span<const Observation> observations) {
  std::vector<double> z;
  z.reserve(observations.size());
  for (const auto& y : observations) z.push_back(llr_increment(pair, y));
  return cusum_statistic_bruteforce(z);
}

/// Stopping time of a run; `censored` means no stop occurred within `time` = cap samples.
struct StopTime {
  std::uint64_t time = 0;
  bool censored = false;

  bool operator==(const StopTime&) const = default;
};

/// First k <= cap with S_k >= h, where increments come from `next_increment()`.
template <class IncrementSource>
  requires std::invocable<IncrementSource&>
StopTime cusum_run(IncrementSource&& next_increment, double h, std::uint64_t cap) {
  if (!(h > 0.0)) throw InputError("cusum_run: threshold must be positive");
  if (cap < 1) throw InputError("cusum_run: cap must be at least 1");
  CusumState state;
  while (state.k < cap) {
    state = cusum_update(state, static_cast<double>(next_increment()));
    if (state.s >= h) return {state.k, false};
  }
  return {cap, true};
}

/// Single-pair CUSUM stopping rule over an observation source `source(Observation&)`.
template <class Source>
StopTime cusum_run(const DistPair& pair, Source&& source, double h, std::uint64_t cap) {
  const LlrKernel llr(pair);
  Observation y;
  return cusum_run([&] {
    source(y);
    return llr(y);
  }, h, cap);
}

}  // namespace qcd

#pragma once

#include <qcd/cusum.hpp>
#include <qcd/distributions.hpp>
#include <qcd/error.hpp>

#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qcd {

/// Outcome of a diagnosis procedure: stopping time and change-type decision (1..J).
struct Diagnosis {
  std::uint64_t time = 0;
  int type = 0;

  bool operator==(const Diagnosis&) const = default;
};

/// Index of a pair v_ij, 0 <= i <= J, 1 <= j <= J, i != j.
struct PairIndex {
  int i = 0;
  int j = 0;

  bool operator==(const PairIndex&) const = default;
};

/// The family of ordered pairs v_ij used to build an MCUSUM procedure.
/// Slot (i, j) lives at i * J + (j - 1); diagonal slots stay empty.
class UpsilonSet {
 public:
  explicit UpsilonSet(int num_types) : num_types_(num_types) {
    if (num_types < 1) throw InputError("UpsilonSet: need at least one change type");
    slots_.resize(static_cast<std::size_t>((num_types + 1) * num_types));
  }

  /// Pairs (nu_i, nu_j) matched to the distributions nu_0..nu_J.
  static UpsilonSet matched(const std::vector<Distribution>& nu) {
    if (nu.size() < 2) throw InputError("UpsilonSet::matched: need nu_0 and at least one nu_j");
    UpsilonSet set(static_cast<int>(nu.size()) - 1);
    for (const auto& [i, j] : set.keys()) set.set(i, j, DistPair(nu[i], nu[j]));
    return set;
  }

  int num_types() const { return num_types_; }

  /// All valid (i, j) in canonical order: j ascending, then i ascending.
  std::vector<PairIndex> keys() const {
    std::vector<PairIndex> out;
    for (int j = 1; j <= num_types_; ++j)
      for (int i = 0; i <= num_types_; ++i)
        if (i != j) out.push_back({i, j});
    return out;
  }

  void set(int i, int j, DistPair pair) {
    check_index(i, j);
    for (const auto& other : slots_)
      if (other && !same_shape(*other, pair))
        throw InputError("UpsilonSet: pairs must share family and dimension");
    slots_[slot(i, j)] = std::move(pair);
  }

  bool contains(int i, int j) const {
    return valid(i, j) && slots_[slot(i, j)].has_value();
  }

  const DistPair& at(int i, int j) const {
    check_index(i, j);
    const auto& p = slots_[slot(i, j)];
    if (!p) throw InputError("UpsilonSet: missing pair v_" + std::to_string(i) + std::to_string(j));
    return *p;
  }

  bool complete() const {
    for (const auto& [i, j] : keys())
      if (!contains(i, j)) return false;
    return true;
  }

  void require_complete() const {
    for (const auto& [i, j] : keys())
      if (!contains(i, j))
        throw InputError("UpsilonSet: missing pair (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
  }

  bool operator==(const UpsilonSet&) const = default;

 private:
  bool valid(int i, int j) const {
    return i >= 0 && i <= num_types_ && j >= 1 && j <= num_types_ && i != j;
  }
  void check_index(int i, int j) const {
    if (!valid(i, j))
      throw InputError("UpsilonSet: invalid pair index (" + std::to_string(i) + ", " +
                       std::to_string(j) + ")");
  }
  std::size_t slot(int i, int j) const {
    return static_cast<std::size_t>(i * num_types_ + (j - 1));
  }
  static bool same_shape(const DistPair& a, const DistPair& b) {
    return a.null_dist.index() == b.null_dist.index() &&
           detail::support_size(a.null_dist) == detail::support_size(b.null_dist);
  }

  int num_types_;
  std::vector<std::optional<DistPair>> slots_;
};

/// Type-j rule of the matrix CUSUM evaluated on the current statistics:
/// returns the smallest j with min_{i != j} stat(i, j) >= h, if any.
template <class StatFn>
  requires std::invocable<StatFn&, int, int>
std::optional<int> crossing_type(int num_types, double h, StatFn&& stat) {
  for (int j = 1; j <= num_types; ++j) {
    bool crossed = true;
    for (int i = 0; i <= num_types && crossed; ++i)
      if (i != j && !(stat(i, j) >= h)) crossed = false;
    if (crossed) return j;
  }
  return std::nullopt;
}

/// Matrix CUSUM diagnosis procedure. Stops at the first k where some type-j
/// rule crosses; decides the smallest such j.
class Mcusum {
 public:
  Mcusum(const UpsilonSet& upsilon, double h) : num_types_(upsilon.num_types()), h_(h) {
    if (!(h > 0.0)) throw InputError("Mcusum: threshold must be positive");
    upsilon.require_complete();
    const auto keys = upsilon.keys();
    kernels_.reserve(keys.size());
    for (const auto& [i, j] : keys) kernels_.emplace_back(upsilon.at(i, j));
    stats_.assign(static_cast<std::size_t>((num_types_ + 1) * num_types_), CusumState{});
    slot_of_key_.reserve(keys.size());
    for (const auto& [i, j] : keys) slot_of_key_.push_back(slot(i, j));
  }

  std::optional<Diagnosis> step(const Observation& y) {
    if (stopped_) throw UsageError("Mcusum: step called on a stopped procedure");
    ++k_;
    for (std::size_t n = 0; n < kernels_.size(); ++n) {
      auto& s = stats_[slot_of_key_[n]];
      s = cusum_update(s, kernels_[n](y));
    }
    const auto d = crossing_type(num_types_, h_, [this](int i, int j) { return statistic(i, j); });
    if (!d) return std::nullopt;
    stopped_ = true;
    return Diagnosis{k_, *d};
  }

  double statistic(int i, int j) const { return stats_[slot(i, j)].s; }
  int num_types() const { return num_types_; }
  double threshold() const { return h_; }
  std::uint64_t samples() const { return k_; }
  bool stopped() const { return stopped_; }

 private:
  std::size_t slot(int i, int j) const {
    return static_cast<std::size_t>(i * num_types_ + (j - 1));
  }

  int num_types_;
  double h_;
  std::vector<LlrKernel> kernels_;
  std::vector<std::size_t> slot_of_key_;
  std::vector<CusumState> stats_;
  std::uint64_t k_ = 0;
  bool stopped_ = false;
};

/// Any sequential diagnosis procedure: consumes one observation per step and
/// eventually reports a Diagnosis.
template <class P>
concept DiagnosisProcedure = requires(P p, const Observation& y) {
  { p.step(y) } -> std::same_as<std::optional<Diagnosis>>;
};

/// Result of one procedure run; when censored, time = cap and type = 0.
struct RunResult {
  std::uint64_t time = 0;
  int type = 0;
  bool censored = false;

  bool operator==(const RunResult&) const = default;
};

/// Runs `procedure` on `source(Observation&)` until it stops or `cap` samples are consumed.
template <DiagnosisProcedure P, class Source>
RunResult run_procedure(P& procedure, Source&& source, std::uint64_t cap) {
  Observation y;
  for (std::uint64_t k = 1; k <= cap; ++k) {
    source(y);
    if (auto d = procedure.step(y)) return {k, d->type, false};
  }
  return {cap, 0, true};
}

template <class Source>
RunResult mcusum_run(const UpsilonSet& upsilon, double h, Source&& source, std::uint64_t cap) {
  Mcusum procedure(upsilon, h);
  return run_procedure(procedure, source, cap);
}

/// T_{d=j}: applies fresh copies of the procedure back to back on the same
/// stream and returns the cumulative sample count at the first copy deciding
/// `target_type`. Censored once `cap_total` samples have been consumed.
template <class Factory, class Source>
  requires DiagnosisProcedure<std::invoke_result_t<Factory&>>
StopTime renewal_first_detection(Factory&& make_procedure, Source&& source, int target_type,
                                 std::uint64_t cap_total) {
  if (target_type < 1) throw InputError("renewal_first_detection: target type must be >= 1");
  std::uint64_t consumed = 0;
  while (consumed < cap_total) {
    auto procedure = make_procedure();
    const auto run = run_procedure(procedure, source, cap_total - consumed);
    consumed += run.time;
    if (run.censored) break;
    if (run.type == target_type) return {consumed, false};
  }
  return {cap_total, true};
}

template <class Source>
StopTime renewal_first_detection(const UpsilonSet& upsilon, double h, Source&& source,
                                 int target_type, std::uint64_t cap_total) {
  if (target_type > upsilon.num_types())
    throw InputError("renewal_first_detection: target type out of range");
  return renewal_first_detection([&] { return Mcusum(upsilon, h); }, source, target_type,
                                 cap_total);
}

}  // namespace qcd

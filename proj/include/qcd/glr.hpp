#pragma once

#include <qcd/box.hpp>
#include <qcd/distributions.hpp>
#include <qcd/error.hpp>
#include <qcd/mcusum.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace qcd {

/// Maximizer of the identity-covariance Gaussian likelihood over a box:
/// the sample mean clipped to the bounds.
inline Vector clipped_mle(const BoxSet& box, std::span<const Vector> samples) {
  if (samples.empty()) throw InputError("clipped_mle: empty window");
  Vector mean(box.dimension(), 0.0);
  for (const auto& y : samples) {
    if (y.size() != box.dimension()) throw InputError("clipped_mle: dimension mismatch");
    for (std::size_t n = 0; n < y.size(); ++n) mean[n] += y[n];
  }
  for (double& m : mean) m /= static_cast<double>(samples.size());
  return box.project(mean);
}

/// Window-limited GLR diagnosis over Gaussian box uncertainty sets.
///
/// With the last w observations y_{k-w+1..k}, the type-j statistic is
///
///   G_j(k) = max_{k-w < n <= k} min_{i != j} (m/2) (|ybar - th_i|^2 - |ybar - th_j|^2)
///
/// where m = k - n + 1, ybar is the mean of y_{n..k}, and th_c is the box-clipped
/// MLE of class c on that segment; i ranges over 0..J. The procedure stops at
/// the first k with max_j G_j(k) >= h and decides the argmax (smallest j on ties).
class Glr {
 public:
  Glr(std::vector<BoxSet> sets, std::size_t window, double h)
      : sets_(std::move(sets)), window_(window), h_(h) {
    if (sets_.size() < 2) throw InputError("Glr: need a pre-change set and at least one type");
    if (window_ < 1) throw InputError("Glr: window must be at least 1");
    if (!(h > 0.0)) throw InputError("Glr: threshold must be positive");
    dim_ = sets_.front().dimension();
    for (const auto& s : sets_)
      if (s.dimension() != dim_) throw InputError("Glr: sets must share dimension");
    ring_.assign(window_, Vector(dim_, 0.0));
    segment_sum_.assign(dim_, 0.0);
    segment_mean_.assign(dim_, 0.0);
    clipped_.assign(dim_, 0.0);
    distance_.assign(sets_.size(), 0.0);
  }

  int num_types() const { return static_cast<int>(sets_.size()) - 1; }
  std::size_t window() const { return window_; }
  std::size_t buffered() const { return count_; }
  double threshold() const { return h_; }
  std::uint64_t samples() const { return k_; }
  bool stopped() const { return stopped_; }

  /// Appends y to the window, evicting the oldest sample beyond w.
  void push(const Observation& y) {
    const auto* x = std::get_if<Vector>(&y);
    if (x == nullptr || x->size() != dim_) throw InputError("Glr: observation dimension mismatch");
    head_ = (head_ + 1) % window_;
    ring_[head_] = *x;
    count_ = std::min(count_ + 1, window_);
    ++k_;
  }

  std::optional<Diagnosis> step(const Observation& y) {
    if (stopped_) throw UsageError("Glr: step called on a stopped procedure");
    push(y);
    const auto g = statistics();
    int best = 0;
    for (int j = 1; j <= num_types(); ++j)
      if (g[j - 1] >= h_ && (best == 0 || g[j - 1] > g[best - 1])) best = j;
    if (best == 0) return std::nullopt;
    stopped_ = true;
    return Diagnosis{k_, best};
  }

  /// G_j at the current time for j = 1..J (element j-1).
  std::vector<double> statistics() const {
    if (count_ == 0) throw InputError("Glr: statistic of an empty window");
    const int types = num_types();
    std::vector<double> best(static_cast<std::size_t>(types),
                             -std::numeric_limits<double>::infinity());
    std::fill(segment_sum_.begin(), segment_sum_.end(), 0.0);
    for (std::size_t m = 1; m <= count_; ++m) {
      const auto& y = ring_[(head_ + window_ - (m - 1)) % window_];
      for (std::size_t n = 0; n < dim_; ++n) {
        segment_sum_[n] += y[n];
        segment_mean_[n] = segment_sum_[n] / static_cast<double>(m);
      }
      for (std::size_t c = 0; c < sets_.size(); ++c) {
        sets_[c].project_into(segment_mean_, clipped_);
        distance_[c] = detail::squared_distance(segment_mean_, clipped_);
      }
      const double half_m = 0.5 * static_cast<double>(m);
      for (int j = 1; j <= types; ++j) {
        double term = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= types; ++i)
          if (i != j) term = std::min(term, distance_[i] - distance_[j]);
        best[j - 1] = std::max(best[j - 1], half_m * term);
      }
    }
    return best;
  }

  double statistic(int j) const {
    if (j < 1 || j > num_types()) throw InputError("Glr: type index out of range");
    return statistics()[j - 1];
  }

 private:
  std::vector<BoxSet> sets_;
  std::size_t window_;
  double h_;
  std::size_t dim_ = 0;
  std::vector<Vector> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::uint64_t k_ = 0;
  bool stopped_ = false;
  // scratch
  mutable Vector segment_sum_;
  mutable Vector segment_mean_;
  mutable Vector clipped_;
  mutable std::vector<double> distance_;
};

}  // namespace qcd

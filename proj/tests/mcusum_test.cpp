#include <qcd/mcusum.hpp>
#include <qcd/montecarlo.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

namespace {

using qcd::Categorical;
using qcd::Diagnosis;
using qcd::DistPair;
using qcd::Mcusum;
using qcd::Observation;
using qcd::UpsilonSet;
using qcd::testing::two_type_robust_pairs;

// Three-symbol fixture: symbol 1 pushes the type-1 statistics up, symbol 2
// pushes type 2. Uniform null for the no-change pairs.
UpsilonSet symbol_pairs() {
  const Categorical u({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const Categorical p1({0.1, 0.8, 0.1});
  const Categorical p2({0.1, 0.1, 0.8});
  UpsilonSet set(2);
  set.set(0, 1, DistPair(u, p1));
  set.set(2, 1, DistPair(p2, p1));
  set.set(0, 2, DistPair(u, p2));
  set.set(1, 2, DistPair(p1, p2));
  return set;
}

auto replay(const std::vector<Observation>& ys) {
  return [ys, idx = std::size_t{0}](Observation& y) mutable { y = ys.at(idx++); };
}

TEST(UpsilonSet, KeysAndCompleteness) {
  UpsilonSet u(2);
  EXPECT_EQ(u.keys().size(), 4u);
  EXPECT_FALSE(u.complete());
  EXPECT_THROW(u.set(1, 1, DistPair(qcd::testing::iso(0), qcd::testing::iso(1))), qcd::InputError);
  EXPECT_THROW(u.set(0, 0, DistPair(qcd::testing::iso(0), qcd::testing::iso(1))), qcd::InputError);
  EXPECT_TRUE(two_type_robust_pairs().complete());
  EXPECT_EQ(UpsilonSet(3).keys().size(), 9u);
}

TEST(UpsilonSet, RejectsMixedShapes) {
  UpsilonSet u(2);
  u.set(0, 1, DistPair(qcd::testing::iso(0), qcd::testing::iso(1)));
  EXPECT_THROW(u.set(0, 2, DistPair(qcd::GaussianId({0.0}), qcd::GaussianId({1.0}))),
               qcd::InputError);
}

TEST(McusumNew, TwoTypeSetZeroStatistics) {
  const Mcusum m(two_type_robust_pairs(), std::log(1e4));
  EXPECT_NEAR(m.threshold(), 9.21, 0.001);
  for (const auto& [i, j] : two_type_robust_pairs().keys()) EXPECT_EQ(m.statistic(i, j), 0.0);
  EXPECT_EQ(m.samples(), 0u);
}

TEST(McusumNew, Errors) {
  EXPECT_THROW(Mcusum(two_type_robust_pairs(), 0.0), qcd::InputError);
  EXPECT_THROW(Mcusum(two_type_robust_pairs(), -1.0), qcd::InputError);
  UpsilonSet partial(2);
  partial.set(0, 1, DistPair(qcd::testing::iso(0), qcd::testing::iso(1)));
  EXPECT_THROW(Mcusum(partial, 1.0), qcd::InputError);
}

TEST(McusumNew, SingleTypeIsPlainCusum) {
  UpsilonSet u(1);
  const DistPair pair(qcd::GaussianId({0.0}), qcd::GaussianId({1.0}));
  u.set(0, 1, pair);
  qcd::RngStream a(5, 0), b(5, 0);
  const qcd::Distribution data = qcd::GaussianId({0.7});
  auto src_a = [&](Observation& y) { qcd::sample_into(data, a, y); };
  auto src_b = [&](Observation& y) { qcd::sample_into(data, b, y); };
  const auto run = qcd::mcusum_run(u, 4.0, src_a, 10000);
  const auto single = qcd::cusum_run(pair, src_b, 4.0, 10000);
  EXPECT_EQ(run.time, single.time);
  EXPECT_EQ(run.type, 1);
}

TEST(CrossingType, RuleEvaluation) {
  // S(v01)=5, S(v21)=3, S(v02)=6, S(v12)=7 with h=4: type 1 min is 3, type 2 min is 6.
  std::map<std::pair<int, int>, double> stats{{{0, 1}, 5}, {{2, 1}, 3}, {{0, 2}, 6}, {{1, 2}, 7}};
  auto stat = [&](int i, int j) { return stats.at({i, j}); };
  EXPECT_EQ(qcd::crossing_type(2, 4.0, stat), 2);
  stats[{2, 1}] = 4.0;
  EXPECT_EQ(qcd::crossing_type(2, 4.0, stat), 1);  // both cross: smallest j
  stats = {{{0, 1}, 1}, {{2, 1}, 3}, {{0, 2}, 2}, {{1, 2}, 7}};
  EXPECT_FALSE(qcd::crossing_type(2, 4.0, stat).has_value());
}

TEST(McusumStep, TieBreaksToSmallestType) {
  // Symbol 0 moves the type-1 and type-2 statistics identically.
  const Categorical u({0.5, 0.25, 0.25});
  const Categorical a({0.25, 0.5, 0.25});
  UpsilonSet set(2);
  set.set(0, 1, DistPair(u, Categorical({0.7, 0.2, 0.1})));
  set.set(2, 1, DistPair(a, Categorical({0.7, 0.2, 0.1})));
  set.set(0, 2, DistPair(u, Categorical({0.7, 0.1, 0.2})));
  set.set(1, 2, DistPair(a, Categorical({0.7, 0.1, 0.2})));
  Mcusum m(set, 0.1);
  const auto d = m.step(std::size_t{0});
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(m.statistic(0, 1), m.statistic(0, 2));
  EXPECT_EQ(d->type, 1);
}

TEST(McusumStep, StoppedStateThrows) {
  Mcusum m(symbol_pairs(), 0.1);
  ASSERT_TRUE(m.step(std::size_t{1}).has_value());
  EXPECT_THROW(m.step(std::size_t{1}), qcd::UsageError);
}

TEST(McusumStep, ZeroIncrementsNeverStop) {
  const qcd::Categorical c({0.5, 0.5});
  UpsilonSet set(2);
  for (const auto& [i, j] : set.keys()) set.set(i, j, DistPair(c, c));
  Mcusum m(set, 0.5);
  for (int k = 0; k < 1000; ++k) ASSERT_FALSE(m.step(static_cast<std::size_t>(k % 2)).has_value());
}

TEST(McusumStep, TinyThresholdStopsImmediately) {
  Mcusum m(symbol_pairs(), 0.01);
  const auto d = m.step(std::size_t{1});
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(*d, (Diagnosis{1, 1}));
}

TEST(McusumRun, CensoredAtCap) {
  const qcd::Distribution data = qcd::testing::iso(0.0);
  qcd::RngStream s(1, 0);
  const auto run = qcd::mcusum_run(two_type_robust_pairs(), std::log(1e4),
                                   [&](Observation& y) { qcd::sample_into(data, s, y); }, 200);
  EXPECT_TRUE(run.censored);
  EXPECT_EQ(run.time, 200u);
}

TEST(McusumRun, MostlyIsolatesTypeOneAtItsLfd) {
  const auto pairs = two_type_robust_pairs();
  const qcd::Distribution data = qcd::testing::iso(0.4);
  int correct = 0;
  for (std::uint64_t r = 0; r < 500; ++r) {
    qcd::RngStream s(2023, r);
    const auto run = qcd::mcusum_run(pairs, std::log(1e4),
                                     [&](Observation& y) { qcd::sample_into(data, s, y); }, 10000);
    correct += !run.censored && run.type == 1;
  }
  EXPECT_GE(correct, 475);
}

TEST(McusumRun, NoChangeDataMostlyCensoredShortHorizon) {
  const auto pairs = two_type_robust_pairs();
  const qcd::Distribution data = qcd::testing::iso(0.0);
  int censored = 0;
  for (std::uint64_t r = 0; r < 200; ++r) {
    qcd::RngStream s(77, r);
    censored += qcd::mcusum_run(pairs, std::log(1e4),
                                [&](Observation& y) { qcd::sample_into(data, s, y); }, 200)
                    .censored;
  }
  EXPECT_GE(censored, 190);
}

// Per-type rules re-simulated from brute-force statistics on the recorded data.
TEST(McusumProperty, StopTimeIsMinOfPerTypeRules) {
  const auto pairs = two_type_robust_pairs();
  for (std::uint64_t r = 0; r < 100; ++r) {
    qcd::RngStream s(404, r);
    const qcd::Distribution data = qcd::testing::iso(r % 2 ? 0.6 : 1.7);
    std::vector<Observation> recorded;
    const double h = 3.0 + static_cast<double>(r % 5);
    const auto run = qcd::mcusum_run(pairs, h, [&](Observation& y) {
      qcd::sample_into(data, s, y);
      recorded.push_back(y);
    }, 5000);
    ASSERT_FALSE(run.censored);

    std::vector<std::uint64_t> per_type(3, 0);
    for (int j = 1; j <= 2; ++j) {
      for (std::size_t k = 1; k <= recorded.size(); ++k) {
        const std::span<const Observation> prefix(recorded.data(), k);
        bool crossed = true;
        for (int i = 0; i <= 2; ++i)
          if (i != j && qcd::cusum_statistic_bruteforce(pairs.at(i, j), prefix) < h) crossed = false;
        if (crossed) {
          per_type[j] = k;
          break;
        }
      }
    }
    std::uint64_t first = 0;
    int decision = 0;
    for (int j = 1; j <= 2; ++j)
      if (per_type[j] != 0 && (first == 0 || per_type[j] < first)) {
        first = per_type[j];
        decision = j;
      }
    EXPECT_EQ(run.time, first);
    EXPECT_EQ(run.type, decision);
  }
}

TEST(McusumProperty, StatisticsIndependentOfPairInsertionOrder) {
  const auto a = two_type_robust_pairs();
  UpsilonSet b(2);
  for (const auto& [i, j] : {qcd::PairIndex{2, 1}, {1, 2}, {0, 2}, {0, 1}}) b.set(i, j, a.at(i, j));
  Mcusum ma(a, 1e9), mb(b, 1e9);
  qcd::RngStream s(8);
  const qcd::Distribution data = qcd::testing::iso(0.5);
  for (int k = 0; k < 300; ++k) {
    const auto y = qcd::sample(data, s);
    ma.step(y);
    mb.step(y);
    for (const auto& [i, j] : a.keys()) ASSERT_EQ(ma.statistic(i, j), mb.statistic(i, j));
  }
}

TEST(McusumProperty, StopTimeMonotoneInThreshold) {
  const auto pairs = two_type_robust_pairs();
  for (std::uint64_t r = 0; r < 30; ++r) {
    qcd::RngStream s(31, r);
    std::vector<Observation> recorded(4000);
    for (auto& y : recorded) y = qcd::sample(qcd::testing::iso(0.5), s);
    std::uint64_t previous = 0;
    for (double h : {1.0, 2.0, 4.0, 8.0, 12.0}) {
      const auto run = qcd::mcusum_run(pairs, h, replay(recorded), recorded.size());
      EXPECT_GE(run.time, previous);
      previous = run.time;
    }
  }
}

TEST(RenewalFirstDetection, AlternatingDecisionsFixture) {
  // Each copy needs two symbols at h = 1.5: [2,2] -> d=2, [2,2] -> d=2, [1,1] -> d=1.
  const std::vector<Observation> ys{std::size_t{2}, std::size_t{2}, std::size_t{2},
                                    std::size_t{2}, std::size_t{1}, std::size_t{1}};
  const auto t = qcd::renewal_first_detection(symbol_pairs(), 1.5, replay(ys), 1, 100);
  EXPECT_EQ(t, (qcd::StopTime{6, false}));
  const auto t2 = qcd::renewal_first_detection(symbol_pairs(), 1.5, replay(ys), 2, 100);
  EXPECT_EQ(t2, (qcd::StopTime{2, false}));
}

TEST(RenewalFirstDetection, CensoredWithinBudget) {
  const std::vector<Observation> ys(10, std::size_t{2});
  const auto t = qcd::renewal_first_detection(symbol_pairs(), 1.5, replay(ys), 1, 10);
  EXPECT_EQ(t, (qcd::StopTime{10, true}));
}

TEST(RenewalFirstDetection, FirstCopyDecidesTarget) {
  const auto pairs = two_type_robust_pairs();
  const qcd::Distribution data = qcd::testing::iso(0.4);
  for (std::uint64_t r = 0; r < 50; ++r) {
    qcd::RngStream a(9, r), b(9, r);
    const auto first = qcd::mcusum_run(pairs, 5.0, [&](Observation& y) { qcd::sample_into(data, a, y); }, 100000);
    const auto renewal = qcd::renewal_first_detection(
        pairs, 5.0, [&](Observation& y) { qcd::sample_into(data, b, y); }, 1, 100000);
    if (first.type == 1) EXPECT_EQ(renewal.time, first.time);
    else EXPECT_GT(renewal.time, first.time);
  }
}

TEST(RenewalFirstDetection, FalseAlarmMeanExceedsExpOfThreshold) {
  // Under nu_0 with the robust pairs, E[T_{d=1}] >= e^h.
  const auto pairs = two_type_robust_pairs();
  const double h = 2.0;
  qcd::McOptions opt;
  opt.runs = 500;
  opt.master_seed = 12;
  opt.cap = 20000;
  const auto est = qcd::estimate_false_metric([&] { return Mcusum(pairs, h); },
                                              qcd::testing::iso(0.0), 1, opt);
  EXPECT_GE(est.mean, std::exp(h) - 2 * est.se);
}

}  // namespace

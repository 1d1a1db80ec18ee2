#include <qcd/boundedness.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace {

using qcd::BoxSet;
using qcd::DistPair;
using qcd::GaussianId;
using qcd::kInf;
using qcd::UncertaintyModel;
using qcd::testing::iso;
using qcd::testing::two_type_model;
using qcd::testing::two_type_sets;

const DistPair v01(iso(0.0), iso(0.4));
const DistPair v02(iso(0.0), iso(1.5));
const DistPair v12(iso(0.8), iso(1.5));
const DistPair v21(iso(1.5), iso(0.8));

TEST(DeltaIj, Examples) {
  EXPECT_NEAR(qcd::delta_ij(iso(0.4), v01), 0.16, 1e-12);
  EXPECT_NEAR(qcd::delta_ij(iso(0.4), v21), 1.05, 1e-12);
  EXPECT_EQ(qcd::delta_ij(iso(0.3), DistPair(iso(0.3), iso(0.3))), 0.0);
}

TEST(DeltaStar, TwoTypeLfds) {
  const auto m = two_type_model();
  EXPECT_NEAR(qcd::delta_star(m.lfd_distributions(), m.pairs), 0.16, 1e-12);
}

TEST(DeltaStar, SingleTypeIsDeltaIj) {
  qcd::UpsilonSet u(1);
  u.set(0, 1, v01);
  EXPECT_NEAR(qcd::delta_star({iso(0.0), iso(0.6)}, u), qcd::delta_ij(iso(0.6), v01), 1e-15);
}

TEST(DeltaStar, CanBeNegative) {
  auto nu = two_type_model().lfd_distributions();
  nu[1] = iso(0.1);
  // D(N(0.1)||N(0)) - D(N(0.1)||N(0.4)) = 0.01 - 0.09.
  EXPECT_NEAR(qcd::delta_ij(nu[1], v01), -0.08, 1e-12);
  EXPECT_LT(qcd::delta_star(nu, two_type_model().pairs), 0.0);
}

TEST(InfDeltaOverBox, Examples) {
  const auto sets = two_type_sets();
  const auto a = qcd::inf_delta_over_box(sets[1], v01);
  EXPECT_NEAR(a.value, 0.16, 1e-12);
  EXPECT_EQ(a.argument, (qcd::Vector{0.4, 0.4}));
  const auto b = qcd::inf_delta_over_box(sets[2], v02);
  EXPECT_NEAR(b.value, 2.25, 1e-12);
  EXPECT_EQ(b.argument, (qcd::Vector{1.5, 1.5}));
  const qcd::Vector phi{0.3, -0.2};
  EXPECT_NEAR(qcd::inf_delta_over_box(BoxSet::point(phi), v12).value,
              qcd::delta_ij(GaussianId(phi), v12), 1e-12);
}

TEST(InfDeltaOverBox, UnboundedBelow) {
  // Coefficient 0.4 > 0 with lower bound -inf.
  const auto e = qcd::inf_delta_over_box(BoxSet({-kInf, 0.0}, {1.0, 1.0}), v01);
  EXPECT_TRUE(e.unbounded);
  EXPECT_EQ(e.value, -kInf);
  EXPECT_EQ(e.argument[0], -kInf);
}

TEST(SupLrExpectationOverBox, Examples) {
  const auto sets = two_type_sets();
  const auto a = qcd::sup_lr_expectation_over_box(sets[0], v01);
  EXPECT_DOUBLE_EQ(a.value, 1.0);
  EXPECT_EQ(a.argument, (qcd::Vector{0.0, 0.0}));
  const auto b = qcd::sup_lr_expectation_over_box(sets[2], v21);
  EXPECT_NEAR(b.value, 1.0, 1e-15);
  EXPECT_EQ(b.argument, (qcd::Vector{1.5, 1.5}));
  const auto c = qcd::sup_lr_expectation_over_box(sets[2], v01);
  EXPECT_EQ(c.value, kInf);
  EXPECT_TRUE(c.unbounded);
}

// Brute force over a 0.01 grid on bounded boxes whose bounds sit on the grid.
TEST(BoxOptimization, MatchesDenseGrid) {
  qcd::RngStream s(303);
  auto on_grid = [](double x) { return std::round(x * 100.0) / 100.0; };
  for (int trial = 0; trial < 30; ++trial) {
    const double a = on_grid(2 * s.normal()), b = on_grid(2 * s.normal());
    const double lo0 = on_grid(s.normal()), lo1 = on_grid(s.normal());
    const BoxSet box({lo0, lo1}, {lo0 + on_grid(s.uniform() + 0.05), lo1 + on_grid(s.uniform() + 0.05)});
    const DistPair pair(GaussianId({a, b}), GaussianId({on_grid(s.normal()), on_grid(s.normal())}));
    double grid_inf = kInf, grid_sup = -kInf;
    const int n0 = static_cast<int>(std::lround((box.upper()[0] - box.lower()[0]) * 100));
    const int n1 = static_cast<int>(std::lround((box.upper()[1] - box.lower()[1]) * 100));
    for (int p = 0; p <= n0; ++p)
      for (int q = 0; q <= n1; ++q) {
        const GaussianId nu({box.lower()[0] + p * 0.01, box.lower()[1] + q * 0.01});
        grid_inf = std::min(grid_inf, qcd::delta_ij(nu, pair));
        grid_sup = std::max(grid_sup, qcd::lr_expectation(pair, nu));
      }
    EXPECT_NEAR(qcd::inf_delta_over_box(box, pair).value, grid_inf, 1e-9);
    EXPECT_NEAR(qcd::sup_lr_expectation_over_box(box, pair).value, grid_sup, 1e-9 * std::max(1.0, grid_sup));
  }
}

TEST(CheckWsb, TwoTypePairsPass) {
  const auto sets = two_type_sets();
  EXPECT_TRUE(qcd::check_wsb(sets[0], sets[1], v01).passed);
  EXPECT_TRUE(qcd::check_wsb(sets[0], sets[2], v02).passed);
  EXPECT_TRUE(qcd::check_wsb(sets[1], sets[2], v12).passed);
  EXPECT_TRUE(qcd::check_wsb(sets[2], sets[1], v21).passed);
}

TEST(CheckWsb, WrongNullFailsOnMembershipOnly) {
  // Null N(0.2,I) is outside P0. The affine conditions both hold (tight WSB1:
  // inf Delta = 0.04 = D(v1||v0); WSB2 exponent -0.08), so only membership fails.
  const auto sets = two_type_sets();
  const auto cert = qcd::check_wsb(sets[0], sets[1], DistPair(iso(0.2), iso(0.4)));
  EXPECT_FALSE(cert.passed);
  EXPECT_FALSE(cert.find("WSB_null_membership")->satisfied);
  EXPECT_TRUE(cert.find("WSB_alt_membership")->satisfied);
  EXPECT_TRUE(cert.find("WSB1")->satisfied);
  EXPECT_NEAR(cert.find("WSB1")->achieved, 0.04, 1e-12);
  EXPECT_TRUE(cert.find("WSB2")->satisfied);
  EXPECT_NEAR(cert.find("WSB2")->achieved, -0.08, 1e-12);
}

TEST(CheckWsb, ShiftedAlternativeFailsWsb1) {
  // Alternative at the far corner of P1: the infimum sits at the near corner.
  const auto sets = two_type_sets();
  const auto cert = qcd::check_wsb(sets[0], sets[1], DistPair(iso(0.0), iso(0.8)));
  EXPECT_FALSE(cert.find("WSB1")->satisfied);
  // inf = 0.8*(0.4+0.4) - 0.64 = 0.0 < 0.64.
  EXPECT_NEAR(cert.find("WSB1")->achieved, 0.0, 1e-12);
  EXPECT_NEAR(cert.find("WSB1")->bound, 0.64, 1e-12);
}

TEST(CheckDsbViaWsb, TwoTypeModelPasses) {
  const auto cert = qcd::check_dsb_via_wsb(two_type_model());
  EXPECT_TRUE(cert.passed);
  EXPECT_NEAR(cert.find("pDSB1")->achieved, 0.16, 1e-12);
  EXPECT_NEAR(cert.find("pDSB1")->bound, 0.16, 1e-12);
  EXPECT_NEAR(cert.delta_star, 0.16, 1e-12);
  EXPECT_TRUE(cert.warnings.empty());
}

TEST(CheckDsbViaWsb, SingleTypeIsWsb) {
  qcd::UpsilonSet u(1);
  u.set(0, 1, v01);
  const UncertaintyModel m{{two_type_sets()[0], two_type_sets()[1]}, u, {iso(0.0), iso(0.4)}};
  EXPECT_TRUE(qcd::check_dsb_via_wsb(m).passed);
  EXPECT_TRUE(qcd::check_dsb_direct(m).passed);
}

TEST(CheckDsbViaWsb, MovedLfdBreaksPdsb1) {
  auto m = two_type_model();
  m.lfds[1] = iso(0.8);
  const auto cert = qcd::check_dsb_via_wsb(m);
  EXPECT_FALSE(cert.passed);
  const auto* w = cert.find("pDSB1");
  EXPECT_FALSE(w->satisfied);
  EXPECT_NEAR(w->bound, 0.48, 1e-12);  // Delta_* of the moved LFDs
  EXPECT_NEAR(w->achieved, 0.16, 1e-12);
}

TEST(CheckDsbDirect, TwoTypeModelPasses) {
  const auto cert = qcd::check_dsb_direct(two_type_model());
  EXPECT_TRUE(cert.passed);
  EXPECT_TRUE(cert.find("DSB1")->satisfied);
  EXPECT_TRUE(cert.find("DSB2")->satisfied);
  EXPECT_TRUE(cert.find("DSB3")->satisfied);
  // DSB2 is tight: min pairwise KL of the LFDs equals Delta_*.
  EXPECT_NEAR(cert.find("DSB2")->achieved, 0.16, 1e-12);
  EXPECT_NEAR(qcd::min_pairwise_kl(two_type_model().lfd_distributions()), 0.16, 1e-12);
}

TEST(CheckDsbDirect, ShrunkPreChangeBoxViolatesDsb3) {
  auto m = two_type_model();
  m.sets[0] = BoxSet({-kInf, -kInf}, {0.5, 0.5});
  const auto cert = qcd::check_dsb_direct(m);
  EXPECT_FALSE(cert.passed);
  const auto* w = cert.find("DSB3");
  EXPECT_FALSE(w->satisfied);
  EXPECT_EQ(w->point, (qcd::Vector{0.5, 0.5}));
  EXPECT_GT(w->achieved, 0.0);
  // The overlap with P1 is reported, not fatal.
  EXPECT_FALSE(cert.warnings.empty());
}

TEST(CheckDsbDirect, LfdOutsideItsSetFailsMembership) {
  auto m = two_type_model();
  m.lfds[1] = iso(0.3);
  const auto cert = qcd::check_dsb_direct(m);
  EXPECT_FALSE(cert.passed);
  EXPECT_FALSE(cert.find("LFD_membership[1]")->satisfied);
}

// Random nested-threshold models: P0 = (-inf, a]^2, P1 = [b, c]^2, P2 = [d, inf)^2,
// optionally perturbed. Whenever the sufficient route passes, so must the direct check.
TEST(BoundednessProperty, SufficientRouteImpliesDirect) {
  qcd::RngStream s(1234);
  int via_passed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = -s.uniform();
    const double b = a + 0.1 + s.uniform();
    const double c = b + 0.1 + s.uniform();
    const double d = c + 0.1 + s.uniform();
    const std::vector<BoxSet> sets{BoxSet({-kInf, -kInf}, {a, a}), BoxSet({b, b}, {c, c}),
                                   BoxSet({d, d}, {kInf, kInf})};
    auto jitter = [&](double x) { return trial % 3 == 0 ? x + 0.2 * (s.uniform() - 0.5) : x; };
    qcd::UpsilonSet u(2);
    u.set(0, 1, DistPair(iso(a), iso(jitter(b))));
    u.set(0, 2, DistPair(iso(a), iso(d)));
    u.set(1, 2, DistPair(iso(c), iso(d)));
    u.set(2, 1, DistPair(iso(d), iso(jitter(c))));
    const UncertaintyModel m{sets, u, {iso(a), iso(jitter(b)), iso(d)}};
    const auto via = qcd::check_dsb_via_wsb(m);
    if (via.passed) {
      ++via_passed;
      EXPECT_TRUE(qcd::check_dsb_direct(m).passed) << "trial " << trial;
    }
  }
  EXPECT_GT(via_passed, 10);
}

}  // namespace

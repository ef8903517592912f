#include <gtest/gtest.h>

#include "fixture.hpp"

namespace {

using namespace orbistab;
using orbistab::testing::Reference;

Vec reference_state() {
  Vec x(4);
  x << 0.1, 0.4, -0.1, -0.2;
  return x;
}

// Halfway between the orbit point that x0 projects to and x0 itself.
Vec half_offset_state() {
  const auto& ref = Reference::get();
  const Vec x0 = reference_state();
  const Vec xs = ref.orbit->xs(ref.op->project(x0).s);
  return xs + 0.5 * (x0 - xs);
}

SimConfig base_config(const Vec& x0) {
  SimConfig cfg;
  cfg.initial_state = x0;
  cfg.noise_std = Vec::Constant(1, 1e-3);
  cfg.rng_seed = 1;
  return cfg;
}

TEST(Noise, DrawsAreReproducibleAndIndexAddressed) {
  const Vec sd = Vec::Constant(3, 0.5);
  const auto stream = noise_stream(42, sd, 100);
  for (std::uint64_t k : {0u, 17u, 99u}) EXPECT_EQ(stream[k], noise_sample(42, sd, k));
  EXPECT_NE(noise_sample(42, sd, 5), noise_sample(43, sd, 5));
  EXPECT_EQ(noise_sample(7, Vec::Zero(3), 3), Vec::Zero(3));
}

TEST(Noise, StandardNormalMoments) {
  const int count = 200000;
  double sum = 0.0, sq = 0.0, fourth = 0.0;
  for (int i = 0; i < count; ++i) {
    const double z = noise_draw(2024, static_cast<std::uint64_t>(i));
    sum += z;
    sq += z * z;
    fourth += z * z * z * z;
  }
  EXPECT_NEAR(sum / count, 0.0, 0.01);
  EXPECT_NEAR(sq / count, 1.0, 0.01);
  EXPECT_NEAR(fourth / count, 3.0, 0.06);
}

TEST(Noise, PerChannelScaling) {
  Vec sd(2);
  sd << 1.0, 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const Vec v = noise_sample(9, sd, k);
    EXPECT_EQ(v(1), 0.0);
    EXPECT_EQ(v(0), noise_draw(9, 2 * k));
  }
}

std::vector<TraceRecord> records_from(const std::vector<double>& norms, double dt) {
  std::vector<TraceRecord> out;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    TraceRecord r;
    r.t = dt * static_cast<double>(i);
    r.norm_x_perp = norms[i];
    out.push_back(r);
  }
  return out;
}

TEST(ConvergenceTime, FirstSampleOfTheFinalBelowThresholdRun) {
  const auto recs = records_from({1.0, 0.5, 0.005, 0.02, 0.004, 0.003, 0.002, 0.001}, 1.0);
  ASSERT_TRUE(convergence_time(recs, 0.01, 2.0).has_value());
  EXPECT_DOUBLE_EQ(*convergence_time(recs, 0.01, 2.0), 4.0);
  EXPECT_FALSE(convergence_time(recs, 0.01, 5.0).has_value());
  EXPECT_FALSE(convergence_time(records_from({0.5, 0.2, 0.02}, 1.0), 0.01, 0.0).has_value());
  EXPECT_FALSE(convergence_time({}, 0.01, 1.0).has_value());
}

TEST(SimConfig, Validation) {
  SimConfig cfg = base_config(reference_state());
  EXPECT_NO_THROW(cfg.validate(4));
  SimConfig bad = cfg;
  bad.sample_interval = 0.0015;
  EXPECT_THROW(bad.validate(4), Error);
  bad = cfg;
  bad.noise_std = Vec::Constant(3, 0.1);
  EXPECT_THROW(bad.validate(4), Error);
  bad = cfg;
  bad.initial_state = Vec::Zero(3);
  EXPECT_THROW(bad.validate(4), Error);
}

TEST(Simulate, ClosedLoopNeedsGains) {
  const auto& ref = Reference::get();
  try {
    simulate(ref.sys, *ref.orbit, *ref.op, nullptr, base_config(half_offset_state()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Simulate, NominalReplayTracksTheOrbit) {
  const auto& ref = Reference::get();
  SimConfig cfg = base_config(ref.orbit->xs(0.3));
  cfg.noise_std = Vec();
  cfg.controller = ControllerMode::OpenLoopReplay;
  cfg.duration = 1.4;
  const auto tr = simulate(ref.sys, *ref.orbit, *ref.op, nullptr, cfg);
  EXPECT_EQ(tr.records.size(), 141u);
  EXPECT_LT(tr.max_norm_x_perp(), 1e-6);
  // Elapsed time along the orbit is the integral of ds / rho.
  const double s_end = tr.records.back().s + (tr.records.back().s < 0.3 ? kTwoPi : 0.0);
  const int m = 20000;
  double elapsed = 0.0;
  for (int i = 0; i < m; ++i) elapsed += (s_end - 0.3) / m / ref.orbit->rho(0.3 + (s_end - 0.3) * (i + 0.5) / m);
  EXPECT_NEAR(elapsed, 1.4, 1e-6);
}

TEST(Simulate, HalfOffsetConvergesWithNoise) {
  const auto& ref = Reference::get();
  const auto tr = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), base_config(half_offset_state()));
  ASSERT_TRUE(tr.complete);
  ASSERT_TRUE(tr.convergence_time.has_value());
  EXPECT_NEAR(*tr.convergence_time, 7.54, 0.015);
  EXPECT_LT(tr.records.back().norm_x_perp, 0.01);
  // The Lyapunov value ends far below where it starts.
  EXPECT_LT(tr.records.back().V, 1e-3 * tr.records.front().V);
}

TEST(Simulate, AdaptiveIntegratorAgreesWithRk4) {
  const auto& ref = Reference::get();
  SimConfig cfg = base_config(half_offset_state());
  cfg.noise_std = Vec();
  cfg.duration = 3.0;
  const auto a = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), cfg);
  cfg.integrator = Integrator::Rk45;
  const auto b = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), cfg);
  ASSERT_EQ(a.records.size(), b.records.size());
  double gap = 0.0;
  for (std::size_t i = 0; i < a.records.size(); ++i) gap = std::max(gap, (a.records[i].x - b.records[i].x).norm());
  EXPECT_LT(gap, 1e-6);
}

TEST(Simulate, RunsAreDeterministic) {
  const auto& ref = Reference::get();
  SimConfig cfg = base_config(half_offset_state());
  cfg.duration = 2.0;
  const auto a = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), cfg);
  const auto b = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), cfg);
  for (std::size_t i = 0; i < a.records.size(); ++i) ASSERT_EQ(a.records[i].x, b.records[i].x);
  cfg.rng_seed = 2;
  const auto c = simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), cfg);
  EXPECT_NE(a.records.back().x, c.records.back().x);
}

TEST(Simulate, SmallerControlPenaltyReachesTheReferenceInitialState) {
  const auto& ref = Reference::get();
  SolverConfig rc = ref.cfg;
  rc.Gamma = 0.01 * Mat::Identity(1, 1);
  const GainSchedule gs = solve(ref.tv, rc);
  const auto tr = simulate(ref.sys, *ref.orbit, *ref.op, &gs, base_config(reference_state()));
  ASSERT_TRUE(tr.convergence_time.has_value());
  EXPECT_NEAR(*tr.convergence_time, 4.30, 0.015);
}

TEST(Simulate, LargeOffsetReportsPartialTrace) {
  const auto& ref = Reference::get();
  Vec x0(4);
  x0 << 0.0, 1.0, 0.0, 4.0;
  try {
    simulate(ref.sys, *ref.orbit, *ref.op, &ref.gains(), base_config(x0));
    FAIL() << "expected the run to leave the tube";
  } catch (const EscapedTubeError& e) {
    EXPECT_FALSE(e.partial().complete);
    EXPECT_FALSE(e.partial().records.empty());
  } catch (const BlowupError& e) {
    EXPECT_FALSE(e.partial().records.empty());
  }
}

}  // namespace

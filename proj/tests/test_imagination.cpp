#include <gtest/gtest.h>

#include "foresight/gradcheck.hpp"
#include "foresight/imagination.hpp"

using namespace foresight;

namespace {

struct Rig {
  CellParams cell;
  LinearParams phi;
  Tensor f0;
  Tensor h0, c0;
};

Rig make_rig(std::uint64_t seed, bool zero_phi) {
  Rng rng(seed);
  Rig s;
  s.cell = make_cell(CellKind::lstm, 3, 4, rng, "gen");
  s.phi = make_linear(3, 4, rng, "phi");
  if (zero_phi) {
    s.phi.weight.value.fill(0.0);
    s.phi.bias.value.fill(0.0);
  }
  s.f0 = Tensor({3});
  s.h0 = Tensor({4});
  s.c0 = Tensor({4});
  for (double& x : s.f0.v) x = rng.normal();
  for (double& x : s.h0.v) x = 0.3 * rng.normal();
  for (double& x : s.c0.v) x = 0.3 * rng.normal();
  return s;
}

}  // namespace

TEST(ImagineStep, ResidualWithZeroPhiReturnsInputExactly) {
  Rig s = make_rig(1, /*zero_phi=*/true);
  Tape t;
  auto [f_hat, next] =
      imagine_step(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
                   CellState{t.constant(s.h0), t.constant(s.c0)}, true);
  EXPECT_EQ(t.value(f_hat).v, s.f0.v);
}

TEST(ImagineStep, PlainWithZeroPhiReturnsZero) {
  Rig s = make_rig(2, /*zero_phi=*/true);
  Tape t;
  auto [f_hat, next] =
      imagine_step(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
                   CellState{t.constant(s.h0), t.constant(s.c0)}, false);
  for (double x : t.value(f_hat).v) EXPECT_DOUBLE_EQ(x, 0.0);
}

TEST(ImagineStep, ResidualEqualsPlainPlusInput) {
  Rig s = make_rig(3, /*zero_phi=*/false);
  Tape t;
  CellState st{t.constant(s.h0), t.constant(s.c0)};
  Var f0 = t.constant(s.f0);
  auto [res, n1] = imagine_step(bind(t, s.cell), bind(t, s.phi), f0, st, true);
  auto [plain, n2] = imagine_step(bind(t, s.cell), bind(t, s.phi), f0, st, false);
  for (int k = 0; k < 3; ++k)
    EXPECT_NEAR(t.value(res).v[k], t.value(plain).v[k] + s.f0.v[k], 1e-12);
}

TEST(Rollout, ZeroPhiResidualTelescopesToInput) {
  Rig s = make_rig(4, /*zero_phi=*/true);
  Tape t;
  ImaginedTrajectory traj =
      rollout(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
              CellState{t.constant(s.h0), t.constant(s.c0)}, 5, true);
  ASSERT_EQ(traj.features.size(), 5u);
  for (const Var& f : traj.features) EXPECT_EQ(t.value(f).v, s.f0.v);
}

TEST(Rollout, OneStepEqualsSingleImagineStep) {
  Rig s = make_rig(5, /*zero_phi=*/false);
  Tape t;
  CellState st{t.constant(s.h0), t.constant(s.c0)};
  Var f0 = t.constant(s.f0);
  ImaginedTrajectory traj =
      rollout(bind(t, s.cell), bind(t, s.phi), f0, st, 1, true);
  auto [single, next] = imagine_step(bind(t, s.cell), bind(t, s.phi), f0, st, true);
  ASSERT_EQ(traj.features.size(), 1u);
  EXPECT_EQ(t.value(traj.features[0]).v, t.value(single).v);
}

TEST(Rollout, ThreeStepResidualEqualsExplicitSum) {
  Rig s = make_rig(6, /*zero_phi=*/false);
  Tape t;
  BoundCell cell = bind(t, s.cell);
  BoundLinear phi = bind(t, s.phi);
  ImaginedTrajectory traj =
      rollout(cell, phi, t.constant(s.f0),
              CellState{t.constant(s.h0), t.constant(s.c0)}, 3, true);
  // f0 plus the per-step projections along the same state trajectory.
  Tensor want = s.f0;
  for (int k = 0; k < 3; ++k) {
    const Tensor& inc = t.value(linear_forward(phi, traj.states[k].h));
    for (int d = 0; d < 3; ++d) want.v[d] += inc.v[d];
    for (int d = 0; d < 3; ++d)
      EXPECT_NEAR(t.value(traj.features[k]).v[d], want.v[d], 1e-12);
  }
}

TEST(Rollout, TelescopingIdentityRandomWeights) {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    Rig s = make_rig(seed, /*zero_phi=*/false);
    Tape t;
    BoundCell cell = bind(t, s.cell);
    BoundLinear phi = bind(t, s.phi);
    ImaginedTrajectory traj =
        rollout(cell, phi, t.constant(s.f0),
                CellState{t.constant(s.h0), t.constant(s.c0)}, 4, true);
    Tensor sum = Tensor::zeros({3});
    for (int k = 0; k < 4; ++k) {
      const Tensor& inc = t.value(linear_forward(phi, traj.states[k].h));
      for (int d = 0; d < 3; ++d) sum.v[d] += inc.v[d];
    }
    for (int d = 0; d < 3; ++d)
      EXPECT_NEAR(t.value(traj.features[3]).v[d] - s.f0.v[d], sum.v[d], 1e-12);
  }
}

TEST(Rollout, TeacherInputsReplaceFedBackOutputs) {
  Rig s = make_rig(7, /*zero_phi=*/true);
  Tape t;
  std::vector<Var> forced = {t.constant(Tensor::from({1.0, 2.0, 3.0})),
                             t.constant(Tensor::from({4.0, 5.0, 6.0}))};
  ImaginedTrajectory traj =
      rollout(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
              CellState{t.constant(s.h0), t.constant(s.c0)}, 3, true, &forced);
  // Zero phi and residual mode: each output equals its own input frame.
  EXPECT_EQ(t.value(traj.features[0]).v, s.f0.v);
  EXPECT_EQ(t.value(traj.features[1]).v, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(t.value(traj.features[2]).v, (std::vector<double>{4.0, 5.0, 6.0}));
}

TEST(Rollout, StepContractEnforced) {
  Rig s = make_rig(8, false);
  Tape t;
  EXPECT_THROW(rollout(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
                       CellState{t.constant(s.h0), t.constant(s.c0)}, 0, true),
               ContractError);
  std::vector<Var> wrong = {t.constant(s.f0)};
  EXPECT_THROW(rollout(bind(t, s.cell), bind(t, s.phi), t.constant(s.f0),
                       CellState{t.constant(s.h0), t.constant(s.c0)}, 3, true,
                       &wrong),
               ContractError);
}

TEST(Rollout, GradientsThroughFourSteps) {
  GradCheckOptions opt;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    opt.seed = seed;
    opt.repeats = 2;  // covers residual and plain
    EXPECT_LE(gradcheck_detail::rollout_suite(opt), 1e-4) << "seed " << seed;
  }
}

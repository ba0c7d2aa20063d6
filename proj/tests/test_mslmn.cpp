#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mslmn/errors.hpp"
#include "mslmn/lmn.hpp"
#include "mslmn/mslmn.hpp"
#include "test_support.hpp"

using namespace mslmn;
using testing_support::bitwise_equal;
using testing_support::max_abs_diff;
using testing_support::random_matrix;

namespace {

MsLmnParams random_params(std::size_t nx, std::size_t nh, std::size_t nm, std::size_t ny, std::size_t g,
                          std::mt19937_64& rng, bool bias = false) {
  return random_mslmn(nx, nh, nm, ny, g, rng, bias);
}

MsLmnState random_state(const MsLmnParams& p, std::size_t t, std::mt19937_64& rng) {
  MsLmnState s = MsLmnState::initial(p);
  s.t = t;
  std::normal_distribution<double> d;
  for (auto& v : s.h) v = d(rng);
  for (auto& m : s.m)
    for (auto& v : m) v = d(rng);
  return s;
}

// Step loop written straight from the update rule, with the activity test
// done as t mod 2^k rather than through active_modules.
Matrix oracle_memories(const MsLmnParams& p, const Matrix& x) {
  const std::size_t g = p.g();
  const std::size_t nm = p.n_m;
  std::vector<Vector> m(g, Vector(nm, 0.0));
  Matrix out(x.rows(), g * nm);
  for (std::size_t t = 1; t <= x.rows(); ++t) {
    Vector a = p.Wxh.apply(x.row(t - 1));
    for (std::size_t i = 0; i < g; ++i) {
      const Vector c = p.Wmh[i].apply(m[i]);
      for (std::size_t j = 0; j < a.size(); ++j) a[j] += c[j];
    }
    if (p.has_bias())
      for (std::size_t j = 0; j < a.size(); ++j) a[j] += p.bh(j, 0);
    for (double& v : a) v = std::tanh(v);
    std::vector<Vector> next = m;
    for (std::size_t k = 0; k < g; ++k) {
      if (t % (std::size_t{1} << k) != 0) continue;
      Vector mk = p.Whm[k].apply(a);
      for (std::size_t i = k; i < g; ++i) {
        const Vector c = p.wmm(i, k).apply(m[i]);
        for (std::size_t j = 0; j < nm; ++j) mk[j] += c[j];
      }
      next[k] = mk;
    }
    m = next;
    for (std::size_t k = 0; k < g; ++k)
      for (std::size_t j = 0; j < nm; ++j) out(t - 1, k * nm + j) = m[k][j];
  }
  return out;
}

Matrix module_columns(const Matrix& M, std::size_t k, std::size_t nm) { return M.block(0, k * nm, M.rows(), nm); }

}  // namespace

TEST(ClockSchedule, RatesDouble) {
  const auto s = ClockSchedule::for_modules(4);
  EXPECT_EQ(s.rates, (std::vector<std::size_t>{1, 2, 4, 8}));
  EXPECT_THROW(ClockSchedule::for_modules(0), PreconditionError);
}

TEST(ModuleCount, FloorLog2) {
  EXPECT_EQ(module_count_for(300), 8u);
  EXPECT_EQ(module_count_for(1), 1u);
  EXPECT_EQ(module_count_for(2), 1u);
  EXPECT_EQ(module_count_for(97), 6u);
  EXPECT_EQ(module_count_for(1024), 10u);
  EXPECT_THROW(module_count_for(0), EmptyInputError);
}

TEST(ActiveModules, Examples) {
  EXPECT_EQ(active_modules(4, 3), 3u);
  EXPECT_EQ(active_modules(1, 5), 1u);
  EXPECT_EQ(active_modules(7, 5), 1u);
  EXPECT_EQ(active_modules(6, 4), 2u);
  EXPECT_EQ(active_modules(64, 3), 3u);
  EXPECT_THROW(active_modules(0, 3), PreconditionError);
}

TEST(ActiveModules, NestedActivation) {
  for (std::size_t g = 1; g <= 6; ++g) {
    for (std::size_t t = 1; t <= (std::size_t{1} << g); ++t) {
      const std::size_t imax = active_modules(t, g);
      for (std::size_t k = 1; k <= g; ++k) {
        const bool active = t % (std::size_t{1} << (k - 1)) == 0;
        EXPECT_EQ(active, k <= imax) << "t=" << t << " g=" << g << " k=" << k;
      }
    }
  }
}

TEST(MsLmnParams, WmmOnlyForSlowerSources) {
  auto p = MsLmnParams::zeros(1, 2, 3, 1, 3);
  EXPECT_EQ(p.Wmm.size(), 6u);
  EXPECT_NO_THROW(p.wmm(2, 0));
  EXPECT_NO_THROW(p.wmm(1, 1));
  EXPECT_THROW(p.wmm(0, 1), IndexError);
  EXPECT_THROW(p.wmm(3, 3), IndexError);
  p.wmm(2, 1)(0, 0) = 5.0;
  EXPECT_EQ(p.Wmm[tri_index(2, 1)](0, 0), 5.0);
}

TEST(MsLmnStep, SingleModuleEqualsLmn) {
  std::mt19937_64 rng(1);
  const LmnParams lmn{random_matrix(3, 2, rng), random_matrix(3, 4, rng), random_matrix(4, 3, rng),
                      random_matrix(4, 4, rng, 0.3), random_matrix(2, 4, rng)};
  const auto ms = mslmn_from_lmn(lmn);
  MsLmnState s = MsLmnState::initial(ms);
  LmnState l{Vector(3, 0.0), Vector(4, 0.0)};
  for (int t = 0; t < 10; ++t) {
    const Matrix x = random_matrix(1, 2, rng);
    s = mslmn_step(ms, s, x.row(0));
    l = lmn_step(lmn, l, x.row(0));
    EXPECT_EQ(s.h, l.h);
    EXPECT_EQ(s.m[0], l.m);
  }
}

TEST(MsLmnStep, InactiveModulesFreezeBitwise) {
  std::mt19937_64 rng(2);
  const auto p = random_params(2, 3, 2, 1, 2, rng);
  for (std::size_t t : {1u, 3u, 5u, 7u}) {
    const auto s = random_state(p, t, rng);
    const auto next = mslmn_step(p, s, std::vector<double>{0.5, -1.0});
    EXPECT_EQ(next.m[1], s.m[1]);
    EXPECT_NE(next.m[0], s.m[0]);
    EXPECT_EQ(next.t, t + 1);
  }
}

TEST(MsLmnStep, ZeroWeights) {
  std::mt19937_64 rng(3);
  const auto p = MsLmnParams::zeros(2, 3, 2, 1, 3);
  const auto s = random_state(p, 2, rng);
  const auto next = mslmn_step(p, s, std::vector<double>{1.0, 2.0});
  EXPECT_EQ(next.h, Vector(3, 0.0));
  EXPECT_EQ(next.m[0], Vector(2, 0.0));
  EXPECT_EQ(next.m[1], Vector(2, 0.0));
  EXPECT_EQ(next.m[2], s.m[2]);
}

TEST(MsLmnStep, DimensionErrors) {
  const auto p = MsLmnParams::zeros(2, 3, 2, 1, 2);
  auto s = MsLmnState::initial(p);
  EXPECT_THROW(mslmn_step(p, s, std::vector<double>{1.0}), DimensionError);
  EXPECT_THROW(mslmn_step_packed(p, s, std::vector<double>{1.0}), DimensionError);
  s.m[1].push_back(0.0);
  EXPECT_THROW(mslmn_step(p, s, std::vector<double>{1.0, 2.0}), DimensionError);
  s = MsLmnState::initial(p);
  s.t = 0;
  EXPECT_THROW(mslmn_step(p, s, std::vector<double>{1.0, 2.0}), PreconditionError);
}

TEST(MsLmnPacked, AgreesWithPerModule) {
  std::mt19937_64 rng(4);
  for (std::size_t g = 1; g <= 6; ++g) {
    const auto p = random_params(2, 4, 3, 2, g, rng, g % 2 == 0);
    const auto pk = pack(p);
    for (std::size_t t = 1; t <= 64; t += 3) {
      const auto s = random_state(p, t, rng);
      const Matrix x = random_matrix(1, 2, rng);
      const auto a = mslmn_step(p, s, x.row(0));
      const auto b = mslmn_step_packed(pk, s, x.row(0));
      EXPECT_LT(max_abs_diff(a.h, b.h), 1e-12);
      for (std::size_t k = 0; k < g; ++k) {
        EXPECT_LT(max_abs_diff(a.m[k], b.m[k]), 1e-12);
        if (k >= active_modules(t, g)) {
          EXPECT_EQ(b.m[k], s.m[k]);
        }
      }
    }
  }
}

TEST(MsLmnPacked, LayoutIsBlockUpperTriangular) {
  std::mt19937_64 rng(5);
  const auto p = random_params(1, 2, 2, 1, 3, rng);
  const auto pk = pack(p);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 3; ++i) {
      const Matrix blk = pk.Wmm.block(k * 2, i * 2, 2, 2);
      if (i < k)
        EXPECT_EQ(blk, Matrix(2, 2));
      else
        EXPECT_EQ(blk, p.wmm(i, k));
    }
  }
}

TEST(MsLmnPacked, SingleModuleExact) {
  std::mt19937_64 rng(6);
  const auto p = random_params(2, 3, 3, 1, 1, rng);
  const auto s = random_state(p, 5, rng);
  const auto a = mslmn_step(p, s, std::vector<double>{0.1, 0.2});
  const auto b = mslmn_step_packed(p, s, std::vector<double>{0.1, 0.2});
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.m, b.m);
}

TEST(MsLmnForward, EmptySequence) {
  const auto p = MsLmnParams::zeros(2, 3, 2, 1, 2);
  const auto traj = mslmn_forward(p, Matrix(0, 2));
  EXPECT_EQ(traj.H.rows(), 0u);
  EXPECT_EQ(traj.Y.rows(), 0u);
}

TEST(MsLmnForward, SingleModuleEqualsLmnForward) {
  std::mt19937_64 rng(7);
  const LmnParams lmn{random_matrix(3, 2, rng), random_matrix(3, 4, rng), random_matrix(4, 3, rng),
                      random_matrix(4, 4, rng, 0.3), random_matrix(2, 4, rng)};
  const Matrix x = random_matrix(15, 2, rng);
  const auto a = mslmn_forward(mslmn_from_lmn(lmn), x);
  const auto b = lmn_forward(lmn, x);
  EXPECT_LT(max_abs_diff(a.H, b.H), 1e-14);
  EXPECT_LT(max_abs_diff(a.M, b.M), 1e-14);
  EXPECT_LT(max_abs_diff(a.Y, b.Y), 1e-14);
}

TEST(MsLmnForward, MatchesLoopOracle) {
  std::mt19937_64 rng(8);
  for (bool bias : {false, true}) {
    const auto p = random_params(2, 4, 3, 2, 3, rng, bias);
    const Matrix x = random_matrix(12, 2, rng);
    const auto traj = mslmn_forward(p, x);
    EXPECT_LT(max_abs_diff(traj.M, oracle_memories(p, x)), 1e-13);
    // Output sums every module's readout of the current memories.
    for (std::size_t t = 0; t < 12; ++t) {
      Vector y(2, 0.0);
      for (std::size_t k = 0; k < 3; ++k) {
        const Vector c = p.Wmy[k].apply(traj.M.row(t).subspan(k * 3, 3));
        for (std::size_t j = 0; j < 2; ++j) y[j] += c[j];
      }
      EXPECT_LT(max_abs_diff(Vector(traj.Y.row(t).begin(), traj.Y.row(t).end()), y), 1e-13);
    }
  }
}

TEST(MsLmnForward, MatchesStepLoop) {
  std::mt19937_64 rng(9);
  const auto p = random_params(2, 3, 2, 1, 4, rng);
  const Matrix x = random_matrix(20, 2, rng);
  const auto traj = mslmn_forward(p, x);
  auto s = MsLmnState::initial(p);
  for (std::size_t t = 0; t < 20; ++t) {
    s = mslmn_step(p, s, x.row(t));
    for (std::size_t k = 0; k < 4; ++k) {
      const auto row = traj.M.row(t).subspan(k * 2, 2);
      EXPECT_LT(max_abs_diff(Vector(row.begin(), row.end()), s.m[k]), 1e-14);
    }
  }
}

TEST(MsLmnForward, SlowModulesHoldZeroUntilFirstTick) {
  std::mt19937_64 rng(10);
  const auto p = random_params(1, 3, 2, 1, 3, rng);
  const auto traj = mslmn_forward(p, random_matrix(8, 1, rng));
  for (std::size_t t = 1; t <= 3; ++t) EXPECT_EQ(module_columns(traj.M, 2, 2).block(t - 1, 0, 1, 2), Matrix(1, 2));
  EXPECT_NE(module_columns(traj.M, 2, 2).block(3, 0, 1, 2), Matrix(1, 2));
}

TEST(MsLmnForward, WrongInputWidth) {
  const auto p = MsLmnParams::zeros(2, 3, 2, 1, 2);
  EXPECT_THROW(mslmn_forward(p, Matrix(3, 1)), DimensionError);
}

TEST(AddModule, ZeroBlocksLeaveTrajectoriesUnchanged) {
  std::mt19937_64 rng(11);
  const auto p = random_params(2, 3, 2, 2, 1, rng);
  const Matrix x = random_matrix(16, 2, rng);
  const auto before = mslmn_forward(p, x);

  const auto q0 = add_module(p, Matrix(2, 3), Matrix(2, 2));
  const auto z = mslmn_forward(q0, x);
  EXPECT_TRUE(bitwise_equal(z.H, before.H));
  EXPECT_TRUE(bitwise_equal(module_columns(z.M, 0, 2), before.M));

  const auto q = add_module(p, random_matrix(2, 3, rng), random_matrix(2, 2, rng));
  ASSERT_EQ(q.g(), 2u);
  const auto after = mslmn_forward(q, x);
  EXPECT_TRUE(bitwise_equal(after.H, before.H));
  EXPECT_TRUE(bitwise_equal(module_columns(after.M, 0, 2), before.M));
  EXPECT_TRUE(bitwise_equal(after.Y, before.Y));

  const auto r = add_module(p, random_matrix(2, 3, rng), random_matrix(2, 2, rng), random_matrix(2, 2, rng));
  const auto changed = mslmn_forward(r, x);
  EXPECT_EQ(changed.Y.cols(), 2u);
  EXPECT_GT(max_abs_diff(changed.Y, before.Y), 0.0);
}

TEST(AddModule, RepeatedAdditionsKeepOldModulesFixed) {
  std::mt19937_64 rng(12);
  auto p = random_params(1, 3, 2, 1, 2, rng, true);
  const Matrix x = random_matrix(32, 1, rng);
  const auto base = mslmn_forward(p, x);
  for (int i = 0; i < 3; ++i) p = add_module(p, random_matrix(2, 3, rng), random_matrix(2, 2, rng, 0.5));
  const auto after = mslmn_forward(p, x);
  EXPECT_TRUE(bitwise_equal(after.H, base.H));
  EXPECT_TRUE(bitwise_equal(after.M.block(0, 0, 32, 4), base.M));
  EXPECT_EQ(p.Wmm.size(), 15u);
}

TEST(AddModule, ShapeErrors) {
  const auto p = MsLmnParams::zeros(1, 3, 2, 1, 1);
  EXPECT_THROW(add_module(p, Matrix(3, 2), Matrix(2, 2)), DimensionError);
  EXPECT_THROW(add_module(p, Matrix(2, 3), Matrix(2, 3)), DimensionError);
  EXPECT_THROW(add_module(p, Matrix(2, 3), Matrix(2, 2), Matrix(2, 2)), DimensionError);
}

TEST(CausalIsolation, FasterModulesNeverReachSlowerOnesDirectly) {
  // The hidden layer reads every module, so module k can reach slower ones
  // through h, and so can the faster modules that read k. With the hidden
  // reads of modules 0..k cut, wiping module k each step must leave every
  // slower module untouched.
  std::mt19937_64 rng(13);
  for (std::size_t k = 0; k < 3; ++k) {
    auto p = random_params(2, 3, 2, 1, 4, rng);
    for (std::size_t i = 0; i <= k; ++i) p.Wmh[i].fill(0.0);
    const Matrix x = random_matrix(24, 2, rng);
    auto a = MsLmnState::initial(p);
    auto b = MsLmnState::initial(p);
    for (std::size_t t = 0; t < 24; ++t) {
      a = mslmn_step(p, a, x.row(t));
      b = mslmn_step(p, b, x.row(t));
      b.m[k].assign(2, 0.0);
      for (std::size_t j = k + 1; j < 4; ++j) EXPECT_EQ(a.m[j], b.m[j]);
    }
  }
}

TEST(CountParams, Formula) {
  auto p = MsLmnParams::zeros(1, 4, 6, 1, 1);
  EXPECT_EQ(count_params(p), 94u);
  EXPECT_EQ(count_params(MsLmnParams::zeros(0, 0, 0, 0, 1)), 0u);
  EXPECT_EQ(count_params(MsLmnParams::zeros(1, 1, 4, 1, 9)), 829u);
  EXPECT_EQ(count_params(MsLmnParams::zeros(1, 4, 6, 1, 1, true)), 98u);
  std::size_t stored = 0;
  MsLmnParams::zeros(3, 5, 2, 4, 3, true).for_each_block([&](const char*, const Matrix& m) { stored += m.size(); });
  EXPECT_EQ(count_params(MsLmnParams::zeros(3, 5, 2, 4, 3, true)), stored);
}

#include <gtest/gtest.h>

#include <cmath>

#include "hsp/soft_vi.hpp"

using namespace hsp;

namespace {

// Independent finite-horizon soft backup, written without the library's
// helpers: V_{h+1}(s) = alpha * log sum_a exp((R + gamma E V_h) / alpha).
std::vector<double> horizon_soft_values(const FiniteMDP& m, const StateActionTable& R, double alpha, int horizon,
                                        StateActionTable* pi_out) {
  std::vector<double> V(static_cast<std::size_t>(m.n_states), 0.0);
  StateActionTable Q(m.n_states, m.n_actions);
  for (int h = 0; h < horizon; ++h) {
    std::vector<double> next(V.size());
    for (int s = 0; s < m.n_states; ++s) {
      double z = 0.0;
      for (int a = 0; a < m.n_actions; ++a) {
        double ev = 0.0;
        for (int s2 = 0; s2 < m.n_states; ++s2) ev += m.p(s, a, s2) * V[static_cast<std::size_t>(s2)];
        Q(s, a) = R(s, a) + m.gamma * ev;
        z += std::exp(Q(s, a) / alpha);
      }
      next[static_cast<std::size_t>(s)] = alpha * std::log(z);
      if (pi_out)
        for (int a = 0; a < m.n_actions; ++a) (*pi_out)(s, a) = std::exp(Q(s, a) / alpha) / z;
    }
    V = next;
  }
  return V;
}

// States 0 -> 1 -> 2 (absorbing); action 0 advances, action 1 stays.
FiniteMDP chain(double gamma) {
  FiniteMDP m(3, 2, gamma);
  for (int s = 0; s < 3; ++s) {
    m.p(s, 0, std::min(s + 1, 2)) = 1.0;
    m.p(s, 1, s) = 1.0;
  }
  return m;
}

}  // namespace

TEST(SoftVI, ZeroRewardGivesUniformPolicy) {
  FiniteMDP m = chain(0.9);
  SoftPlanSolution sol = soft_value_iteration(m, StateActionTable(3, 2), 1.0);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) EXPECT_NEAR(sol.pi(s, a), 0.5, 1e-12);
  EXPECT_LE(sol.residual, 1e-10);
}

TEST(SoftVI, BanditClosedForm) {
  FiniteMDP m(1, 2, 0.5);
  m.p(0, 0, 0) = m.p(0, 1, 0) = 1.0;
  StateActionTable R(1, 2);
  R(0, 0) = std::log(2.0);
  SoftPlanSolution sol = soft_value_iteration(m, R, 1.0);
  EXPECT_NEAR(sol.pi(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(sol.pi(0, 1), 1.0 / 3.0, 1e-12);
  // V = log 3 + 0.5 V
  EXPECT_NEAR(sol.V[0], 2.0 * std::log(3.0), 1e-9);
}

TEST(SoftVI, ChainMatchesFiniteHorizonBackup) {
  FiniteMDP m = chain(0.9);
  StateActionTable R(3, 2);
  R(0, 0) = -1.0;
  R(1, 0) = 2.0;
  R(1, 1) = 0.5;
  R(2, 1) = 1.0;
  SoftPlanSolution sol = soft_value_iteration(m, R, 1.0, 1e-12);
  // 0.9^250 * |V| is far below 1e-6, so the horizon-250 backup is exact to tolerance.
  StateActionTable pi(3, 2);
  std::vector<double> V = horizon_soft_values(m, R, 1.0, 250, &pi);
  for (int s = 0; s < 3; ++s) {
    EXPECT_NEAR(sol.V[static_cast<std::size_t>(s)], V[static_cast<std::size_t>(s)], 1e-6);
    for (int a = 0; a < 2; ++a) EXPECT_NEAR(sol.pi(s, a), pi(s, a), 1e-6);
  }
}

TEST(SoftVI, PolicyIsSoftmaxOfQ) {
  Rng rng(4);
  FiniteMDP m(4, 3, 0.8);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) m.p(s, a, static_cast<int>(rng.uniform(4))) = 1.0;
  StateActionTable R(4, 3);
  for (auto& v : R.v) v = rng.normal();
  const double alpha = 0.7;
  SoftPlanSolution sol = soft_value_iteration(m, R, alpha);
  for (int s = 0; s < 4; ++s) {
    double z = 0.0;
    for (int a = 0; a < 3; ++a) z += std::exp(sol.Q(s, a) / alpha);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(sol.pi(s, a), std::exp(sol.Q(s, a) / alpha) / z, 1e-12);
  }
}

TEST(SoftVI, NonConvergenceAndBadInputs) {
  FiniteMDP m = chain(0.99);
  StateActionTable R(3, 2, 1.0);
  try {
    soft_value_iteration(m, R, 1.0, 1e-12, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonConvergence);
  }
  EXPECT_THROW(soft_value_iteration(chain(1.0), R, 1.0), Error);
  EXPECT_THROW(soft_value_iteration(m, R, 0.0), Error);
  EXPECT_THROW(soft_value_iteration(m, StateActionTable(2, 2), 1.0), Error);
  FiniteMDP bad = chain(0.9);
  bad.p(0, 0, 0) = 0.5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(SoftVI, MdpTextRoundTrip) {
  FiniteMDP m = chain(0.9);
  m.p(2, 0, 2) = 0.25;
  m.p(2, 0, 0) = 0.75;
  std::string text = format_mdp(m);
  FiniteMDP back = parse_mdp(text);
  EXPECT_EQ(back.P, m.P);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_THROW(parse_mdp("states 2\nactions 1\ngamma 0.9\nt 0 0 0 0.5\nt 1 0 1 1\n"), Error);
  EXPECT_THROW(parse_mdp("states 2\nactions 1\nt 0 0 0 1\n"), Error);
  EXPECT_THROW(parse_mdp("states 2\nactions 1\ngamma 0.9\nx 0\n"), Error);
}

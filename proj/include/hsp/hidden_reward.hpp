#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hsp/soft_vi.hpp"

namespace hsp {

// Two-player finite MDP: P[((s * A + a) * B + b) * S + s'] for own action a
// and partner action b.
struct TwoPlayerMDP {
  int n_states = 0;
  int n_actions = 0;
  int n_partner_actions = 0;
  double gamma = 0.9;
  std::vector<double> P;

  TwoPlayerMDP() = default;
  TwoPlayerMDP(int s, int a, int b, double g)
      : n_states(s), n_actions(a), n_partner_actions(b), gamma(g),
        P(static_cast<std::size_t>(s) * a * b * s, 0.0) {}

  double& p(int s, int a, int b, int s2) {
    return P[((static_cast<std::size_t>(s) * n_actions + a) * n_partner_actions + b) * n_states + s2];
  }
  double p(int s, int a, int b, int s2) const {
    return P[((static_cast<std::size_t>(s) * n_actions + a) * n_partner_actions + b) * n_states + s2];
  }
};

// P'(s'|s,a) = sum_b P(s'|s,a,b) * partner(b|s). `partner` is S x B.
inline FiniteMDP fold_partner(const TwoPlayerMDP& m, const StateActionTable& partner) {
  if (partner.n_states != m.n_states || partner.n_actions != m.n_partner_actions)
    throw Error(Errc::DimensionMismatch, "partner table does not match the two-player MDP");
  FiniteMDP out(m.n_states, m.n_actions, m.gamma);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      for (int b = 0; b < m.n_partner_actions; ++b) {
        double w = partner(s, b);
        if (w == 0.0) continue;
        for (int s2 = 0; s2 < m.n_states; ++s2) out.p(s, a, s2) += w * m.p(s, a, b, s2);
      }
  return out;
}

struct ConstructedReward {
  StateActionTable R;
  StateActionTable A;  // alpha * log(pi(a|s) / pi(pi*(s)|s))
  std::vector<double> b;
  double alpha = 1.0;
  std::vector<int> greedy;   // pi*(s)
  std::vector<double> V;     // soft value of pi under R
  std::vector<double> Vstar; // max_a Q(s, a)
};

// argmax_a pi(a|s), lowest index on ties.
inline int greedy_action(const StateActionTable& pi, int s) {
  int best = 0;
  for (int a = 1; a < pi.n_actions; ++a)
    if (pi(s, a) > pi(s, best)) best = a;
  return best;
}

// Builds R_w under which `pi` is the soft-optimal policy with temperature
// alpha and R_w(s, pi*(s)) = b(s).
inline ConstructedReward construct_hidden_reward(const StateActionTable& pi, const FiniteMDP& mdp, double alpha,
                                                 const std::vector<double>& b) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  if (pi.n_states != S || pi.n_actions != A) throw Error(Errc::DimensionMismatch, "policy does not match MDP");
  if (static_cast<int>(b.size()) != S) throw Error(Errc::DimensionMismatch, "baseline b needs one entry per state");
  if (!(alpha > 0.0)) throw Error(Errc::InvalidArgument, "alpha must be positive");
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      if (!(pi(s, a) > 0.0))
        throw Error(Errc::ZeroProbabilityAction,
                    "pi(" + std::to_string(a) + "|" + std::to_string(s) + ") = " + format_number(pi(s, a)));

  ConstructedReward out;
  out.alpha = alpha;
  out.b = b;
  out.greedy.resize(static_cast<std::size_t>(S));
  StateActionTable adv(S, A);
  Eigen::VectorXd g(S);
  for (int s = 0; s < S; ++s) {
    int star = greedy_action(pi, s);
    out.greedy[static_cast<std::size_t>(s)] = star;
    double mean_adv = 0.0, entropy = 0.0;
    for (int a = 0; a < A; ++a) {
      adv(s, a) = alpha * (std::log(pi(s, a)) - std::log(pi(s, star)));
      mean_adv += pi(s, a) * adv(s, a);
      entropy -= pi(s, a) * std::log(pi(s, a));
    }
    g(s) = mean_adv + b[static_cast<std::size_t>(s)] + alpha * entropy;
  }
  // V = g + gamma * P_{pi*} V along the greedy chain.
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) M(s, s2) -= mdp.gamma * mdp.p(s, out.greedy[static_cast<std::size_t>(s)], s2);
  Eigen::VectorXd V = M.partialPivLu().solve(g);
  out.V.assign(V.data(), V.data() + S);
  out.Vstar.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s)
    out.Vstar[static_cast<std::size_t>(s)] =
        mdp.gamma * mdp.expect(s, out.greedy[static_cast<std::size_t>(s)], out.V) + b[static_cast<std::size_t>(s)];
  out.A = adv;
  out.R = StateActionTable(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      if (a == out.greedy[static_cast<std::size_t>(s)])
        out.R(s, a) = b[static_cast<std::size_t>(s)];
      else
        out.R(s, a) = adv(s, a) - mdp.gamma * mdp.expect(s, a, out.V) + out.Vstar[static_cast<std::size_t>(s)];
    }
  return out;
}

struct SoftOptimalReport {
  double max_tv = 0.0;
  double residual = 0.0;
  double max_advantage_error = 0.0;  // |(Q(a1)-Q(a2)) - alpha log(pi(a1)/pi(a2))|
  bool pass = false;
};

inline double total_variation(const StateActionTable& p, const StateActionTable& q, int s) {
  double tv = 0.0;
  for (int a = 0; a < p.n_actions; ++a) tv += std::abs(p(s, a) - q(s, a));
  return 0.5 * tv;
}

// Solves the soft-optimal policy under R.R and compares it to pi.
inline SoftOptimalReport verify_soft_optimal(const ConstructedReward& R, const StateActionTable& pi,
                                             const FiniteMDP& mdp, double tol) {
  SoftPlanSolution sol = soft_value_iteration(mdp, R.R, R.alpha, 1e-12);
  SoftOptimalReport rep;
  rep.residual = sol.residual;
  for (int s = 0; s < mdp.n_states; ++s) {
    rep.max_tv = std::max(rep.max_tv, total_variation(sol.pi, pi, s));
    for (int a = 1; a < mdp.n_actions; ++a) {
      double dq = sol.Q(s, a) - sol.Q(s, 0);
      double target = R.alpha * std::log(pi(s, a) / pi(s, 0));
      rep.max_advantage_error = std::max(rep.max_advantage_error, std::abs(dq - target));
    }
  }
  rep.pass = rep.max_tv <= tol;
  return rep;
}

inline std::string format_report(const SoftOptimalReport& r) {
  std::ostringstream os;
  os << "max_tv=" << format_number(r.max_tv) << " residual=" << format_number(r.residual)
     << " max_advantage_error=" << format_number(r.max_advantage_error) << " pass=" << (r.pass ? 1 : 0) << "\n";
  return os.str();
}

// Random MDP with Dirichlet(1) transition rows.
inline FiniteMDP random_mdp(int S, int A, double gamma, Rng& rng) {
  FiniteMDP m(S, A, gamma);
  std::exponential_distribution<double> ex(1.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < S; ++s2) sum += m.p(s, a, s2) = ex(rng.engine());
      double acc = 0.0;
      for (int s2 = 0; s2 + 1 < S; ++s2) acc += m.p(s, a, s2) /= sum;
      m.p(s, a, S - 1) = 1.0 - acc;
      if (m.p(s, a, S - 1) < 0.0) m.p(s, a, S - 1) = 0.0;
    }
  return m;
}

// Policy with Dirichlet(1) rows: full support with probability one.
inline StateActionTable random_full_support_policy(int S, int A, Rng& rng) {
  StateActionTable pi(S, A);
  std::exponential_distribution<double> ex(1.0);
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int a = 0; a < A; ++a) sum += pi(s, a) = ex(rng.engine()) + 1e-300;
    for (int a = 0; a < A; ++a) pi(s, a) /= sum;
  }
  return pi;
}

}  // namespace hsp

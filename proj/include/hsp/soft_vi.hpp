#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include "hsp/core.hpp"

namespace hsp {

// Finite single-agent MDP with dense transitions P[(s * A + a) * S + s'].
struct FiniteMDP {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.9;
  std::vector<double> P;

  FiniteMDP() = default;
  FiniteMDP(int s, int a, double g)
      : n_states(s), n_actions(a), gamma(g), P(static_cast<std::size_t>(s) * a * s, 0.0) {}

  double& p(int s, int a, int s2) { return P[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2]; }
  double p(int s, int a, int s2) const { return P[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2]; }

  void validate() const {
    if (n_states <= 0 || n_actions <= 0) throw Error(Errc::InvalidArgument, "MDP needs at least one state and action");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error(Errc::InvalidArgument, "gamma must lie in (0, 1)");
    if (P.size() != static_cast<std::size_t>(n_states) * n_actions * n_states)
      throw Error(Errc::DimensionMismatch, "transition table size");
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) {
          if (p(s, a, s2) < 0.0) throw Error(Errc::InvalidArgument, "negative transition probability");
          sum += p(s, a, s2);
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw Error(Errc::InvalidArgument,
                      "row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " + format_number(sum));
      }
  }

  // E[f(s') | s, a]
  double expect(int s, int a, const std::vector<double>& f) const {
    double v = 0.0;
    const double* row = &P[(static_cast<std::size_t>(s) * n_actions + a) * n_states];
    for (int s2 = 0; s2 < n_states; ++s2) v += row[s2] * f[static_cast<std::size_t>(s2)];
    return v;
  }
};

// Row-major S x A table.
struct StateActionTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> v;

  StateActionTable() = default;
  StateActionTable(int s, int a, double init = 0.0)
      : n_states(s), n_actions(a), v(static_cast<std::size_t>(s) * a, init) {}
  double& operator()(int s, int a) { return v[static_cast<std::size_t>(s) * n_actions + a]; }
  double operator()(int s, int a) const { return v[static_cast<std::size_t>(s) * n_actions + a]; }
};

struct SoftPlanSolution {
  std::vector<double> V;
  StateActionTable Q;
  StateActionTable pi;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline double soft_max(const double* q, int n, double alpha) {
  double mx = q[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, q[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp((q[i] - mx) / alpha);
  return mx + alpha * std::log(s);
}

}  // namespace detail

// Iterates V <- alpha * log sum_a exp((R + gamma P V) / alpha) until the
// sup-norm Bellman residual is at most `tol`.
inline SoftPlanSolution soft_value_iteration(const FiniteMDP& mdp, const StateActionTable& R, double alpha,
                                             double tol = 1e-10, int max_iters = 1000000) {
  mdp.validate();
  if (!(alpha > 0.0)) throw Error(Errc::InvalidArgument, "alpha must be positive");
  if (R.n_states != mdp.n_states || R.n_actions != mdp.n_actions)
    throw Error(Errc::DimensionMismatch, "reward table does not match MDP");
  const int S = mdp.n_states, A = mdp.n_actions;
  SoftPlanSolution sol;
  sol.V.assign(static_cast<std::size_t>(S), 0.0);
  sol.Q = StateActionTable(S, A);
  std::vector<double> next(static_cast<std::size_t>(S));
  auto backup = [&](const std::vector<double>& V) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) sol.Q(s, a) = R(s, a) + mdp.gamma * mdp.expect(s, a, V);
  };
  for (int it = 1;; ++it) {
    backup(sol.V);
    double res = 0.0;
    for (int s = 0; s < S; ++s) {
      next[static_cast<std::size_t>(s)] = detail::soft_max(&sol.Q.v[static_cast<std::size_t>(s) * A], A, alpha);
      res = std::max(res, std::abs(next[static_cast<std::size_t>(s)] - sol.V[static_cast<std::size_t>(s)]));
    }
    sol.V.swap(next);
    sol.residual = res;
    sol.iterations = it;
    if (res <= tol) break;
    if (it >= max_iters)
      throw Error(Errc::NonConvergence, "residual " + format_number(res) + " after " + std::to_string(it) +
                                            " iterations (tol " + format_number(tol) + ")");
  }
  backup(sol.V);
  sol.pi = StateActionTable(S, A);
  for (int s = 0; s < S; ++s) {
    const double* q = &sol.Q.v[static_cast<std::size_t>(s) * A];
    double v = detail::soft_max(q, A, alpha);
    for (int a = 0; a < A; ++a) sol.pi(s, a) = std::exp((q[a] - v) / alpha);
  }
  return sol;
}

// Plain-text MDP tables:
//   states <S>
//   actions <A>
//   gamma <g>
//   t <s> <a> <s'> <p>     (one line per nonzero transition)
inline FiniteMDP parse_mdp(std::string_view text) {
  int S = -1, A = -1;
  double g = -1;
  std::vector<std::tuple<int, int, int, double>> rows;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto tok = split_ws(line);
    try {
      if (tok[0] == "states" && tok.size() == 2)
        S = std::stoi(tok[1]);
      else if (tok[0] == "actions" && tok.size() == 2)
        A = std::stoi(tok[1]);
      else if (tok[0] == "gamma" && tok.size() == 2)
        g = std::stod(tok[1]);
      else if (tok[0] == "t" && tok.size() == 5)
        rows.emplace_back(std::stoi(tok[1]), std::stoi(tok[2]), std::stoi(tok[3]), std::stod(tok[4]));
      else
        throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unrecognized '" + line + "'");
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad number in '" + line + "'");
    }
  }
  if (S <= 0 || A <= 0 || g < 0) throw Error(Errc::ParseError, "missing states/actions/gamma header");
  FiniteMDP m(S, A, g);
  for (auto [s, a, s2, p] : rows) {
    if (s < 0 || s >= S || a < 0 || a >= A || s2 < 0 || s2 >= S)
      throw Error(Errc::ParseError, "transition index out of range");
    m.p(s, a, s2) += p;
  }
  m.validate();
  return m;
}

inline std::string format_mdp(const FiniteMDP& m) {
  std::ostringstream os;
  os << "states " << m.n_states << "\nactions " << m.n_actions << "\ngamma " << format_number(m.gamma) << "\n";
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      for (int s2 = 0; s2 < m.n_states; ++s2)
        if (m.p(s, a, s2) != 0.0)
          os << "t " << s << ' ' << a << ' ' << s2 << ' ' << format_number(m.p(s, a, s2)) << "\n";
  return os.str();
}

}  // namespace hsp

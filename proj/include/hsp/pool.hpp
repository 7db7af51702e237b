#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/policy.hpp"

namespace hsp {

// Expected event counts of a (policy, partner) pair; a thin name for the
// rollout helper so pool code reads like the selection procedure.
inline EventCount expected_event_count(const PolicyHandle& policy, const PolicyHandle& partner,
                                       std::shared_ptr<const Layout> L, int episodes, std::uint64_t seed,
                                       int workers = 1) {
  return measure_events(std::move(L), policy, partner, episodes, seed, 0, workers);
}

// c_k = 1 / max_i EC_k^(i); 0 when the event never occurs.
inline std::vector<double> normalization_constants(const std::vector<std::vector<double>>& ecs) {
  if (ecs.empty()) throw Error(Errc::EmptyCandidateSet, "normalization_constants needs at least one EC");
  const std::size_t m = ecs[0].size();
  std::vector<double> c(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double mx = 0.0;
    for (const auto& e : ecs) {
      if (e.size() != m) throw Error(Errc::DimensionMismatch, "EC vectors differ in length");
      mx = std::max(mx, e[k]);
    }
    c[k] = mx > 0.0 ? 1.0 / mx : 0.0;
  }
  return c;
}

inline double weighted_l1(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
  if (a.size() != b.size() || a.size() != c.size()) throw Error(Errc::DimensionMismatch, "EC/c length mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += c[k] * std::abs(a[k] - b[k]);
  return d;
}

// ED over unordered distinct pairs of S.
inline double event_diversity(const std::vector<std::size_t>& S, const std::vector<std::vector<double>>& ecs,
                              const std::vector<double>& c) {
  double ed = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    if (S[i] >= ecs.size()) throw Error(Errc::InvalidArgument, "index " + std::to_string(S[i]) + " out of range");
    for (std::size_t j = i + 1; j < S.size(); ++j) {
      if (S[j] >= ecs.size()) throw Error(Errc::InvalidArgument, "index " + std::to_string(S[j]) + " out of range");
      ed += weighted_l1(ecs[S[i]], ecs[S[j]], c);
    }
  }
  return ed;
}

// Greedy policy selection: start from {i0}, repeatedly add the candidate
// with the largest ED(S + {k}); ties (within 1e-12 relative) go to the
// smallest index.
inline std::vector<std::size_t> greedy_select(const std::vector<std::vector<double>>& ecs, std::size_t K,
                                              std::size_t i0, const std::vector<double>& c) {
  const std::size_t N = ecs.size();
  if (K < 1 || K > N)
    throw Error(Errc::KOutOfRange, "K=" + std::to_string(K) + " must lie in [1, " + std::to_string(N) + "]");
  if (i0 >= N) throw Error(Errc::InvalidArgument, "start index " + std::to_string(i0) + " out of range");
  std::vector<std::size_t> order{i0};
  std::vector<bool> chosen(N, false);
  chosen[i0] = true;
  // gain[k] = sum over selected i of d(i, k) = ED(S + {k}) - ED(S)
  std::vector<double> gain(N, 0.0);
  for (std::size_t k = 0; k < N; ++k) gain[k] = weighted_l1(ecs[i0], ecs[k], c);
  while (order.size() < K) {
    std::size_t best = N;
    for (std::size_t k = 0; k < N; ++k)
      if (!chosen[k] && (best == N || gain[k] > gain[best] + 1e-12 * std::max(1.0, gain[best]))) best = k;
    chosen[best] = true;
    order.push_back(best);
    for (std::size_t k = 0; k < N; ++k) gain[k] += weighted_l1(ecs[best], ecs[k], c);
  }
  return order;
}

inline std::vector<std::size_t> greedy_select(const std::vector<std::vector<double>>& ecs, std::size_t K,
                                              std::size_t i0) {
  if (ecs.empty()) throw Error(Errc::KOutOfRange, "no candidates to select from");
  return greedy_select(ecs, K, i0, normalization_constants(ecs));
}

// EventDiff of member `index`: min over the other members of the c-weighted
// L1 distance between ECs measured against the same reference partner.
inline double event_diff(std::size_t index, const std::vector<std::vector<double>>& ecs,
                         const std::vector<double>& c) {
  if (ecs.size() < 2) throw Error(Errc::SingletonSet, "event_diff needs at least two members");
  if (index >= ecs.size()) throw Error(Errc::InvalidArgument, "index out of range");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ecs.size(); ++j)
    if (j != index) best = std::min(best, weighted_l1(ecs[index], ecs[j], c));
  return best;
}

// Measures every member of `members` against `reference` and returns the
// EventDiff of each; c is computed over the union set.
struct EventDiffReport {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> ecs;
  std::vector<double> c;
  std::vector<double> diff;
};

inline EventDiffReport event_diff_all(const std::vector<PolicyHandle>& members, const PolicyHandle& reference,
                                      std::shared_ptr<const Layout> L, int episodes, std::uint64_t seed,
                                      int workers = 1) {
  if (members.size() < 2) throw Error(Errc::SingletonSet, "event_diff needs at least two members");
  EventDiffReport rep;
  for (std::size_t i = 0; i < members.size(); ++i) {
    rep.ids.push_back(members[i].id);
    rep.ecs.push_back(expected_event_count(members[i], reference, L, episodes, seed, workers).joint);
  }
  rep.c = normalization_constants(rep.ecs);
  for (std::size_t i = 0; i < members.size(); ++i) rep.diff.push_back(event_diff(i, rep.ecs, rep.c));
  return rep;
}

enum class Provenance { Biased, MEPCheckpoint };

inline std::string_view provenance_name(Provenance p) { return p == Provenance::Biased ? "biased" : "mep"; }

inline Provenance provenance_from_name(std::string_view s) {
  if (s == "biased") return Provenance::Biased;
  if (s == "mep") return Provenance::MEPCheckpoint;
  throw Error(Errc::ParseError, "unknown provenance '" + std::string(s) + "'");
}

struct PoolMember {
  std::string id;
  Provenance provenance = Provenance::Biased;
  std::string checkpoint;          // path, relative to the manifest directory
  std::uint64_t weight_seed = 0;   // biased only
  std::vector<double> ec;          // biased only: EC against its own partner
  friend bool operator==(const PoolMember&, const PoolMember&) = default;
};

struct PoolSpec {
  std::string layout;
  std::size_t target_size = 0;
  std::size_t start_index = 0;     // i0 of the greedy selection
  std::uint64_t seed = 0;
  std::vector<PoolMember> members;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

// Half greedy-filtered biased policies, half MEP checkpoints (biased side
// takes the extra member when K_total is odd). i0 is a seeded uniform draw.
inline PoolSpec assemble_hsp_pool(const std::vector<PoolMember>& biased, const std::vector<PoolMember>& mep,
                                  std::size_t k_total, std::uint64_t seed) {
  if (k_total < 2) throw Error(Errc::InvalidArgument, "K_total must be >= 2");
  const std::size_t kb = k_total - k_total / 2, km = k_total / 2;
  if (biased.size() < kb || mep.size() < km)
    throw Error(Errc::InsufficientCandidates, "need " + std::to_string(kb) + " biased and " + std::to_string(km) +
                                                  " MEP candidates, have " + std::to_string(biased.size()) + " and " +
                                                  std::to_string(mep.size()));
  std::vector<std::vector<double>> ecs;
  for (const auto& b : biased) ecs.push_back(b.ec);
  PoolSpec spec;
  spec.target_size = k_total;
  spec.seed = seed;
  Rng rng(seed);
  spec.start_index = rng.uniform(biased.size());
  for (std::size_t i : greedy_select(ecs, kb, spec.start_index)) spec.members.push_back(biased[i]);
  for (std::size_t i = 0; i < km; ++i) spec.members.push_back(mep[i]);
  std::vector<std::string> ids;
  for (const auto& m : spec.members) ids.push_back(m.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(Errc::InvalidArgument, "duplicate member id in pool");
  return spec;
}

inline nlohmann::json to_json(const PoolSpec& p) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : p.members) {
    nlohmann::json j{{"id", m.id}, {"provenance", std::string(provenance_name(m.provenance))}, {"checkpoint", m.checkpoint}};
    if (m.provenance == Provenance::Biased) {
      j["weight_seed"] = m.weight_seed;
      j["ec"] = m.ec;
    }
    members.push_back(std::move(j));
  }
  return {{"layout", p.layout},
          {"target_size", p.target_size},
          {"start_index", p.start_index},
          {"seed", p.seed},
          {"members", members}};
}

inline PoolSpec pool_from_json(const nlohmann::json& j) {
  try {
    PoolSpec p;
    p.layout = j.at("layout").get<std::string>();
    p.target_size = j.at("target_size").get<std::size_t>();
    p.start_index = j.at("start_index").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& m : j.at("members")) {
      PoolMember pm;
      pm.id = m.at("id").get<std::string>();
      pm.provenance = provenance_from_name(m.at("provenance").get<std::string>());
      pm.checkpoint = m.at("checkpoint").get<std::string>();
      if (m.contains("weight_seed")) pm.weight_seed = m.at("weight_seed").get<std::uint64_t>();
      if (m.contains("ec")) pm.ec = m.at("ec").get<std::vector<double>>();
      p.members.push_back(std::move(pm));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("pool manifest: ") + e.what());
  }
}

inline void save_pool_manifest(const std::filesystem::path& path, const PoolSpec& p) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
  f << to_json(p).dump(2) << "\n";
}

inline PoolSpec load_pool_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::IoError, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return pool_from_json(j);
}

}  // namespace hsp
